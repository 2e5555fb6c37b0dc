#include <doctest.h>

#include <drgmm/errors.hpp>
#include <drgmm/io.hpp>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace drgmm;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& body) {
        path = (std::filesystem::temp_directory_path() / ("drgmm_io_" + name)).string();
        std::ofstream(path) << body;
    }
    ~TempFile() { std::filesystem::remove(path); }
};

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const InputError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("CSV parsing basics") {
    std::istringstream in("a, b,\"c,d\"\r\n1,2,3\n\n4 , 5,6\n");
    CsvTable t = parse_csv(in);
    CHECK(t.header == std::vector<std::string>{"a", "b", "c,d"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[1][0] == "4");
    std::istringstream empty("");
    CHECK(message_of([&] { parse_csv(empty, "e.csv"); }).find("empty file") != std::string::npos);
    std::istringstream only("x,y\n");
    CHECK_THROWS_AS(parse_csv(only), InputError);
    std::istringstream ragged("x,y\n1,2\n3\n");
    const std::string msg = message_of([&] { parse_csv(ragged, "r.csv"); });
    CHECK(msg.find("data row 2") != std::string::npos);
    CHECK(msg.find("line 3") != std::string::npos);
}

TEST_CASE("cell parsing rejects non-finite and non-numeric values with their location") {
    CHECK(parse_cell("1.5e-3", 1, 1, "x") == 1.5e-3);
    CHECK(parse_cell("+2", 1, 1, "x") == 2.0);
    CHECK(parse_cell("-0.25", 1, 1, "x") == -0.25);
    for (const char* bad : {"nan", "NaN", "inf", "-inf", "NA", "1.2.3", "abc", ""}) {
        const std::string msg = message_of([&] { parse_cell(bad, 12, 3, "R_2"); });
        CHECK(msg.find("row 12") != std::string::npos);
        CHECK(msg.find("R_2") != std::string::npos);
    }
}

TEST_CASE("factor schema with and without a date column") {
    TempFile a("f1.csv", "R_1,R_2,R_3,F_1\n0.1,0.2,0.3,1\n0.2,0.1,0.0,2\n0.0,0.3,0.1,3\n");
    FactorData d = read_factor_csv(a.path, 3, 1);
    CHECK(d.R.rows() == 3);
    CHECK(d.R.cols() == 3);
    CHECK(d.F(2, 0) == 3.0);
    TempFile b("f2.csv", "date,R_1,R_2,R_3,F_1\n2001-01,0.1,0.2,0.3,1\n2001-02,0.2,0.1,0.0,2\n");
    FactorData e = read_factor_csv(b.path, 3, 1, true);
    CHECK(e.R(1, 0) == 0.2);
    CHECK(e.excess);
    CHECK(message_of([&] { read_factor_csv(a.path, 2, 1); }).find("schema expects 3 columns, file has 4") !=
          std::string::npos);
}

TEST_CASE("NaN cell is reported by row") {
    std::string body = "R_1,R_2,F_1\n";
    for (int r = 1; r <= 15; ++r) body += r == 12 ? "0.1,nan,0.3\n" : "0.1,0.2,0.3\n";
    TempFile f("nan.csv", body);
    const std::string msg = message_of([&] { read_factor_csv(f.path, 2, 1); });
    CHECK(msg.find("row 12") != std::string::npos);
    CHECK(msg.find("R_2") != std::string::npos);
}

TEST_CASE("IV and CRRA schemas") {
    TempFile iv("iv.csv", "y,x,z1,z2,w\n1,2,3,4,5\n2,3,4,5,6\n3,4,5,6,8\n");
    IvData d = read_iv_csv(iv.path, 1, 2, 1);
    CHECK(d.y(2) == 3.0);
    CHECK(d.X(0, 0) == 2.0);
    CHECK(d.Z(1, 1) == 5.0);
    CHECK(d.W(2, 0) == 8.0);
    IvData d0 = read_iv_csv(TempFile("iv0.csv", "y,x,z1\n1,2,3\n2,3,4\n").path, 1, 1, 0);
    CHECK(d0.W.cols() == 0);
    CHECK_THROWS_AS(read_iv_csv(iv.path, 1, 3, 1), InputError);

    TempFile c("crra.csv", "C,R_1,R_2\n1.0,,\n1.01,0.02,0.03\n1.02,-0.01,0.05\n");
    CrraInputs in = read_crra_csv(c.path, 2);
    CHECK(in.consumption.size() == 3);
    CHECK(in.returns.rows() == 2);
    CHECK(in.returns(1, 1) == 0.05);
    TempFile bad("crra_bad.csv", "C,R_1,R_2\n1.0,,\n1.01,,0.03\n1.02,-0.01,0.05\n");
    CHECK(message_of([&] { read_crra_csv(bad.path, 2); }).find("row 2") != std::string::npos);
    CHECK(message_of([] { read_csv("/nonexistent/file.csv"); }).find("cannot open") != std::string::npos);
}

}  // TEST_SUITE
