#include "drgmm/io.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>

#include "drgmm/errors.hpp"

namespace drgmm {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line, const std::string& where) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) throw InputError(where + ": unterminated quoted field");
    out.push_back(trim(cur));
    return out;
}

std::string col_label(const CsvTable& t, std::size_t c) {
    return c < t.header.size() ? t.header[c] : "#" + std::to_string(c + 1);
}

void expect_columns(const CsvTable& t, std::size_t want, const std::string& schema, const std::string& path) {
    if (t.header.size() != want)
        throw InputError(path + ": " + schema + " schema expects " + std::to_string(want) + " columns, file has " +
                         std::to_string(t.header.size()));
}

MatrixXd block(const CsvTable& t, std::size_t r0, std::size_t c0, std::size_t cols) {
    MatrixXd out(t.rows.size() - r0, cols);
    for (std::size_t r = r0; r < t.rows.size(); ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out(r - r0, c) = parse_cell(t.rows[r][c0 + c], r + 1, c0 + c + 1, col_label(t, c0 + c));
    return out;
}

}  // namespace

CsvTable parse_csv(std::istream& in, const std::string& source) {
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        const std::string where = source + " line " + std::to_string(lineno);
        std::vector<std::string> cells = split_line(line, where);
        if (!have_header) {
            t.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != t.header.size())
            throw InputError(where + " (data row " + std::to_string(t.rows.size() + 1) + "): expected " +
                             std::to_string(t.header.size()) + " fields, found " + std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
    }
    if (!have_header) throw InputError(source + ": empty file (a header row is required)");
    if (t.rows.empty()) throw InputError(source + ": no data rows after the header");
    return t;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    return parse_csv(in, path);
}

double parse_cell(const std::string& text, std::size_t row, std::size_t col, const std::string& column) {
    const std::string where =
        "row " + std::to_string(row) + ", column " + std::to_string(col) + " ('" + column + "')";
    if (text.empty()) throw InputError("missing value at " + where);
    double v = 0.0;
    const char* b = text.data();
    const char* e = b + text.size();
    if (*b == '+') ++b;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) throw InputError("non-numeric value '" + text + "' at " + where);
    if (!std::isfinite(v)) throw InputError("non-finite value '" + text + "' at " + where);
    return v;
}

FactorData read_factor_csv(const std::string& path, int n_assets, int n_factors, bool excess) {
    if (n_assets < 2 || n_factors < 1) throw InputError("factor schema needs n_assets >= 2 and n_factors >= 1");
    CsvTable t = read_csv(path);
    const std::size_t base = static_cast<std::size_t>(n_assets + n_factors);
    std::string first = t.header.front();
    for (char& c : first) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    const std::size_t off = first == "date" ? 1 : 0;
    expect_columns(t, base + off, "factor (n_assets=" + std::to_string(n_assets) + ", n_factors=" +
                   std::to_string(n_factors) + (off ? ", date column" : "") + ")", path);
    FactorData d;
    d.R = block(t, 0, off, n_assets);
    d.F = block(t, 0, off + n_assets, n_factors);
    d.excess = excess;
    return d;
}

IvData read_iv_csv(const std::string& path, int m, int k, int p) {
    if (m < 1 || k < m || p < 0) throw InputError("IV schema needs m >= 1, k >= m, p >= 0");
    CsvTable t = read_csv(path);
    expect_columns(t, static_cast<std::size_t>(1 + m + k + p),
                   "IV (m=" + std::to_string(m) + ", k=" + std::to_string(k) + ", p=" + std::to_string(p) + ")", path);
    IvData d;
    d.y = block(t, 0, 0, 1).col(0);
    d.X = block(t, 0, 1, m);
    d.Z = block(t, 0, 1 + m, k);
    d.W = p > 0 ? block(t, 0, 1 + m + k, p) : MatrixXd(d.y.size(), 0);
    return d;
}

CrraInputs read_crra_csv(const std::string& path, int n_assets) {
    if (n_assets < 2) throw InputError("CRRA schema needs n_assets >= 2");
    CsvTable t = read_csv(path);
    expect_columns(t, static_cast<std::size_t>(1 + n_assets), "CRRA (n_assets=" + std::to_string(n_assets) + ")", path);
    if (t.rows.size() < 3) throw InputError(path + ": CRRA data needs at least 3 rows");
    CrraInputs out;
    out.consumption = block(t, 0, 0, 1).col(0);
    out.returns = block(t, 1, 1, n_assets);
    return out;
}

}  // namespace drgmm
