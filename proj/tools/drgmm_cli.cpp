#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <drgmm/confsets.hpp>
#include <drgmm/errors.hpp>
#include <drgmm/io.hpp>
#include <drgmm/models.hpp>
#include <drgmm/montecarlo.hpp>
#include <drgmm/solver.hpp>
#include <drgmm/stats.hpp>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <optional>
#include <sstream>

using namespace drgmm;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitConvergence = 4;

std::uint64_t default_seed() {
    if (const char* env = std::getenv("DRGMM_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw InputError(std::string("DRGMM_SEED is not an unsigned integer: '") + env + "'");
        }
    }
    return 20240614ULL;
}

std::string fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "";
    std::uint64_t h = 1469598103934665603ULL;
    char buf[65536];
    while (in) {
        in.read(buf, sizeof buf);
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << text;
}

json run_manifest(const std::string& command, const json& config, std::uint64_t seed,
                  const std::vector<std::string>& inputs, const std::vector<std::string>& outputs, double seconds) {
    json m;
    m["command"] = command;
    m["config"] = config;
    m["seed"] = seed;
    m["version"] = DRGMM_VERSION;
    json digests = json::object();
    for (const std::string& p : inputs) digests[p] = "fnv1a64:" + fnv1a64_file(p);
    m["inputs"] = digests;
    m["outputs"] = outputs;
    m["wall_seconds"] = seconds;
    return m;
}

CriticalValuePolicy parse_policy(const std::string& s, double alpha) {
    if (s == "fixed" || s == "chi2") return {CvKind::FixedChi2, alpha};
    if (s == "conditional") return {CvKind::ConditionalCalibrated, alpha};
    throw InputError("policy must be 'fixed' or 'conditional'");
}

std::string fmt_num(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(10) << x;
    return os.str();
}

json num_json(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    return x;
}

// ---------------------------------------------------------------- data and models

struct DataOptions {
    std::string path;
    std::string model = "factor";
    int n_assets = 0;
    int n_factors = 1;
    bool excess = false;
    int n_endog = 1;
    int n_instruments = 0;
    int n_exog = 0;
    bool robust = false;
    double delta0 = 0.95;

    void add(CLI::App* app) {
        app->add_option("--data", path, "CSV dataset")->required()->check(CLI::ExistingFile);
        app->add_option("--model", model, "factor | iv | crra")->check(CLI::IsMember({"factor", "iv", "crra"}));
        app->add_option("--n-assets", n_assets, "return columns in the file");
        app->add_option("--n-factors", n_factors, "factor columns (factor model)");
        app->add_flag("--excess", excess, "returns are already excess returns");
        app->add_option("--n-endog", n_endog, "endogenous regressors (IV)");
        app->add_option("--n-instruments", n_instruments, "instruments (IV)");
        app->add_option("--n-exog", n_exog, "included exogenous regressors (IV)");
        app->add_flag("--robust", robust, "IV: Eicker-White covariance instead of the iid closed form");
        app->add_option("--delta0", delta0, "CRRA discount factor");
    }

    json to_json() const {
        return {{"data", path},           {"model", model},          {"n_assets", n_assets},
                {"n_factors", n_factors}, {"excess", excess},        {"n_endog", n_endog},
                {"n_instruments", n_instruments}, {"n_exog", n_exog}, {"robust", robust},
                {"delta0", delta0}};
    }
};

// JSON outputs embed the manifest; each CSV output gets a sidecar <csv>.manifest.json.
void emit_outputs(const json& manifest, const std::string& csv, const std::string& json_path, json body) {
    if (!csv.empty()) write_text(csv + ".manifest.json", manifest.dump(2));
    if (!json_path.empty()) {
        body["manifest"] = manifest;
        write_text(json_path, body.dump(2));
    }
}

struct LoadedModel {
    std::unique_ptr<MomentModel> model;
    const FactorModel* factor = nullptr;
    const IvModel* iv = nullptr;
    std::string describe;
    FactorData factor_data;
};

LoadedModel load_model(const DataOptions& o) {
    LoadedModel lm;
    if (o.model == "factor") {
        if (o.n_assets < 2) throw InputError("--n-assets is required for the factor schema");
        lm.factor_data = read_factor_csv(o.path, o.n_assets, o.n_factors, o.excess);
        auto fm = std::make_unique<FactorModel>(lm.factor_data);
        lm.factor = fm.get();
        lm.model = std::move(fm);
    } else if (o.model == "iv") {
        if (o.n_instruments < 1) throw InputError("--n-instruments is required for the IV schema");
        IvData d = read_iv_csv(o.path, o.n_endog, o.n_instruments, o.n_exog);
        d.iid = !o.robust;
        auto iv = std::make_unique<IvModel>(d);
        lm.iv = iv.get();
        lm.model = std::move(iv);
    } else {
        if (o.n_assets < 2) throw InputError("--n-assets is required for the CRRA schema");
        CrraInputs in = read_crra_csv(o.path, o.n_assets);
        lm.model = std::make_unique<CrraModel>(in.consumption, in.returns, o.delta0);
    }
    std::ostringstream os;
    os << o.model << " model: T = " << lm.model->T() << ", moments k = " << lm.model->k_f()
       << ", parameters m = " << lm.model->m();
    lm.describe = os.str();
    return lm;
}

std::optional<TestResult> rank_diagnostic(const LoadedModel& lm) {
    if (lm.factor) return rank_is_statistic(*lm.factor);
    if (lm.iv && lm.model->m() == 1) return rank_is_statistic(*lm.iv);
    return std::nullopt;
}

VectorXd parse_theta(const std::vector<double>& v, int m) {
    if (static_cast<int>(v.size()) != m)
        throw InputError("--theta0 needs " + std::to_string(m) + " value(s), got " + std::to_string(v.size()));
    return Eigen::Map<const VectorXd>(v.data(), m);
}

// ---------------------------------------------------------------- test

struct TestCmd {
    DataOptions data;
    std::vector<double> theta0;
    std::vector<double> grid;   // lo, hi, n
    std::vector<std::string> stats{"DRLM", "KLM", "AR", "LR"};
    std::string policy = "fixed";
    double alpha = 0.05;
    std::string out_json, out_csv;
};

int cmd_test(const TestCmd& c) {
    const auto t0 = std::chrono::steady_clock::now();
    LoadedModel lm = load_model(c.data);
    const int m = lm.model->m();
    std::vector<StatKind> kinds;
    for (const std::string& s : c.stats) kinds.push_back(stat_kind_from_string(s));
    const CriticalValuePolicy pol = parse_policy(c.policy, c.alpha);
    InversionContext ctx = make_context(*lm.model);

    std::cout << lm.describe << "\n";
    json out;
    out["model"] = c.data.model;
    out["T"] = lm.model->T();
    out["k"] = lm.model->k_f();
    out["m"] = m;

    // Diagnostics.
    const double J = ctx.J;
    const int jdf = lm.model->k_f() - m;
    std::cout << "diagnostics:\n";
    std::cout << "  CUE          = ";
    for (int i = 0; i < m; ++i) std::cout << fmt_num(ctx.cue.cue(i)) << (i + 1 < m ? ", " : "\n");
    std::cout << "  J            = " << fmt_num(J) << "  (df " << jdf << ", 5% cv "
              << fmt_num(chi2_quantile(jdf, 0.95)) << ")\n";
    json diag;
    diag["cue"] = json::array();
    for (int i = 0; i < m; ++i) diag["cue"].push_back(num_json(ctx.cue.cue(i)));
    diag["J"] = J;
    diag["J_df"] = jdf;
    if (auto rk = rank_diagnostic(lm)) {
        std::cout << "  rank         = " << fmt_num(rk->value) << "  (df " << rk->df << ")\n";
        diag["rank"] = rk->value;
        diag["rank_df"] = rk->df;
    }
    if (lm.iv && m == 1) {
        const double F = lm.iv->first_stage_F();
        std::cout << "  first-stage F = " << fmt_num(F) << "\n";
        diag["first_stage_F"] = F;
    }
    out["diagnostics"] = diag;

    std::vector<VectorXd> thetas;
    if (!c.grid.empty()) {
        if (m != 1 || c.grid.size() != 3 || c.grid[2] < 2) throw InputError("--grid takes lo hi n (n >= 2) for m = 1");
        const int n = static_cast<int>(c.grid[2]);
        for (int i = 0; i < n; ++i)
            thetas.push_back(VectorXd::Constant(1, c.grid[0] + (c.grid[1] - c.grid[0]) * i / (n - 1)));
    }
    if (!c.theta0.empty()) thetas.push_back(parse_theta(c.theta0, m));
    if (thetas.empty()) throw InputError("give --theta0 or --grid");

    std::vector<PointTestFn> tests;
    for (StatKind k : kinds) tests.push_back(make_point_test(ctx, k, pol, c.alpha));

    std::ofstream csv;
    if (!c.out_csv.empty()) {
        csv.open(c.out_csv);
        if (!csv) throw InputError("cannot write '" + c.out_csv + "'");
        for (int i = 0; i < m; ++i) csv << "theta" << i << ',';
        csv << "statistic,value,critical_value,reject\n";
        csv << std::setprecision(12);
    }
    out["tests"] = json::array();
    const bool print = thetas.size() <= 20;
    if (print) std::cout << "tests (" << (pol.kind == CvKind::FixedChi2 ? "fixed" : "conditional") << " policy, alpha "
                         << c.alpha << "):\n";
    for (const VectorXd& th : thetas) {
        json row;
        row["theta"] = std::vector<double>(th.data(), th.data() + th.size());
        for (std::size_t s = 0; s < kinds.size(); ++s) {
            PointTest p = tests[s](th);
            if (!p.ok) throw NumericalError(to_string(kinds[s]) + " could not be computed at theta0 (singular weight matrix)");
            row[to_string(kinds[s])] = {{"value", p.value}, {"critical_value", p.cv}, {"reject", p.reject}};
            if (print)
                std::cout << "  theta0 = " << std::setw(10) << fmt_num(th(0)) << (m > 1 ? ", " + fmt_num(th(1)) : "")
                          << "  " << std::left << std::setw(14) << to_string(kinds[s]) << std::right << std::setw(14)
                          << fmt_num(p.value) << "  cv " << std::setw(10) << fmt_num(p.cv)
                          << (p.reject ? "  REJECT" : "") << "\n";
            if (csv.is_open()) {
                for (int i = 0; i < m; ++i) csv << th(i) << ',';
                csv << to_string(kinds[s]) << ',' << p.value << ',' << p.cv << ',' << (p.reject ? 1 : 0) << '\n';
            }
        }
        out["tests"].push_back(row);
    }
    if (!print) std::cout << thetas.size() << " hypothesized values evaluated\n";
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::vector<std::string> outputs;
    if (!c.out_csv.empty()) outputs.push_back(c.out_csv);
    if (!c.out_json.empty()) outputs.push_back(c.out_json);
    json cfg = c.data.to_json();
    cfg["theta0"] = c.theta0;
    cfg["grid"] = c.grid;
    cfg["stats"] = c.stats;
    cfg["policy"] = c.policy;
    cfg["alpha"] = c.alpha;
    emit_outputs(run_manifest("test", cfg, 0, {c.data.path}, outputs, secs), c.out_csv, c.out_json, out);
    return kExitOk;
}

// ---------------------------------------------------------------- confset

struct ConfsetCmd {
    DataOptions data;
    std::string stat = "DRLM";
    std::string policy = "conditional";
    double alpha = 0.05;
    int points = 0;
    double scale = 0.0;
    double tol = 1e-4;
    std::string out_json, out_csv;
};

int cmd_confset(const ConfsetCmd& c) {
    const auto t0 = std::chrono::steady_clock::now();
    LoadedModel lm = load_model(c.data);
    const int m = lm.model->m();
    const StatKind k = stat_kind_from_string(c.stat);
    CriticalValuePolicy pol = parse_policy(c.policy, c.alpha);
    std::cout << lm.describe << "\n";
    std::string set_json;
    std::vector<std::string> outputs;
    if (m == 1) {
        Grid1D g;
        if (c.points > 0) g.points = c.points;
        g.scale = c.scale;
        g.tol = c.tol;
        ConfidenceSet1D s = invert_1d(*lm.model, k, pol, g);
        std::cout << to_string(k) << " confidence set (alpha " << c.alpha << "): "
                  << format_interval_union(s.intervals) << "\n";
        if (s.failed_points) std::cout << "  (" << s.failed_points << " grid points could not be evaluated)\n";
        set_json = set_to_json(s);
        if (!c.out_csv.empty()) {
            std::ofstream csv(c.out_csv);
            if (!csv) throw InputError("cannot write '" + c.out_csv + "'");
            csv << "theta,value,critical_value,accept\n" << std::setprecision(12);
            for (const CurvePoint& p : s.curve)
                csv << p.theta << ',' << p.value << ',' << p.cv << ',' << (p.accept ? 1 : 0) << '\n';
            outputs.push_back(c.out_csv);
        }
        if (lm.factor) {
            FamaMacBeth fm = fm_two_pass(lm.factor_data);
            std::cout << "  Fama-MacBeth: estimate " << fmt_num(fm.lambda_hat(0)) << ", t " << fmt_num(fm.t(0))
                      << ", interval " << format_interval_union(fm.ci) << "\n";
        }
    } else if (m == 2) {
        Grid2D g;
        if (c.points > 0) g.points = c.points;
        g.scale = c.scale;
        ConfidenceSet2D s = invert_2d(*lm.model, k, pol, g);
        for (int a = 0; a < 2; ++a)
            std::cout << to_string(k) << " projection on axis " << a << ": "
                      << format_interval_union(s.projections[a]) << "\n";
        set_json = set_to_json(s);
        if (!c.out_csv.empty()) {
            std::ofstream csv(c.out_csv);
            if (!csv) throw InputError("cannot write '" + c.out_csv + "'");
            csv << "theta0,theta1,accept\n" << std::setprecision(12);
            for (std::size_t i = 0; i < s.axis0.size(); ++i)
                for (std::size_t j = 0; j < s.axis1.size(); ++j)
                    csv << s.axis0[i] << ',' << s.axis1[j] << ',' << (s.accepted(i, j) ? 1 : 0) << '\n';
            outputs.push_back(c.out_csv);
        }
    } else {
        throw UnsupportedError("confidence sets are implemented for m = 1 and m = 2");
    }
    if (!c.out_json.empty()) outputs.push_back(c.out_json);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json cfg = c.data.to_json();
    cfg["statistic"] = c.stat;
    cfg["policy"] = c.policy;
    cfg["alpha"] = c.alpha;
    cfg["points"] = c.points;
    cfg["scale"] = c.scale;
    cfg["tol"] = c.tol;
    emit_outputs(run_manifest("confset", cfg, 0, {c.data.path}, outputs, secs), c.out_csv, c.out_json,
                 json::parse(set_json));
    return kExitOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateCmd {
    std::string kind;
    std::string spec_file;
    std::optional<int> N, m;
    long reps = 0;
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha;
    std::optional<std::string> policy;
    std::vector<double> mu2, D2, lambda, cdf_points;
    double misspec = -1.0;
    bool enhanced = false;
    std::string config;
    std::vector<double> c, c_tilde, gamma;
    int T = 0;
    std::string out = "";
    std::string manifest = "";
};

int cmd_simulate(SimulateCmd c, int threads) {
    const auto t0 = std::chrono::steady_clock::now();
    SimSpec s;
    std::vector<std::string> inputs;
    if (!c.spec_file.empty()) {
        std::ifstream in(c.spec_file);
        if (!in) throw InputError("cannot open '" + c.spec_file + "'");
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw InputError("'" + c.spec_file + "' is not valid JSON: " + e.what());
        }
        s = spec_from_json((j.contains("config") ? j["config"] : j).dump());
        inputs.push_back(c.spec_file);
    }
    s.kind = experiment_kind_from_string(c.kind);
    if (c.N) s.N = *c.N;
    if (c.m) s.m = *c.m;
    if (c.alpha) s.alpha = *c.alpha;
    if (c.policy) s.policy = parse_policy(*c.policy, s.alpha);
    s.policy.alpha = s.alpha;
    s.threads = threads;
    if (c.seed) s.seed = *c.seed;
    else if (c.spec_file.empty()) s.seed = default_seed();
    if (c.misspec >= 0.0) s.mu2_axis = {c.misspec};
    if (!c.mu2.empty()) s.mu2_axis = c.mu2;
    if (!c.D2.empty()) s.D2_axis = c.D2;
    if (!c.lambda.empty()) s.lambda_axis = c.lambda;
    if (!c.cdf_points.empty()) s.cdf_points = c.cdf_points;
    s.include_enhanced = s.include_enhanced || c.enhanced;

    switch (s.kind) {
        case ExperimentKind::Size:
            if (c.reps == 0 && c.spec_file.empty()) s.reps = 10000;
            break;
        case ExperimentKind::Power:
            if (c.reps == 0 && c.spec_file.empty()) s.reps = 5000;
            if (c.mu2.empty() && c.misspec < 0.0 && c.spec_file.empty()) s.mu2_axis = {4.4};
            if (c.D2.empty() && c.spec_file.empty()) s.D2_axis = {0.0, s.mu2_axis.front(), 100.0};
            if (s.lambda_axis.empty())
                for (int i = -20; i <= 20; ++i) s.lambda_axis.push_back(0.25 * i);
            break;
        case ExperimentKind::JCdf:
            if (c.reps == 0 && c.spec_file.empty()) s.reps = 10000;
            if (c.mu2.empty() && c.misspec < 0.0 && c.spec_file.empty()) s.mu2_axis = {4.4};
            if (c.D2.empty() && c.spec_file.empty()) s.D2_axis = {0.0, s.mu2_axis.front(), 100.0};
            break;
        case ExperimentKind::Crra: {
            if (!c.config.empty()) {
                auto kv = read_kv_file(c.config);
                s.crra = crra_params_from_kv(kv);
                inputs.push_back(c.config);
                if (kv.count("T") && c.T == 0) s.T = std::stoi(kv["T"]);
                if (kv.count("reps") && c.reps == 0) s.reps = std::stol(kv["reps"]);
                if (kv.count("seed") && !c.seed) s.seed = std::stoull(kv["seed"]);
                if (c.c.empty() && kv.count("c")) s.c_axis = {s.crra.c};
                if (c.c_tilde.empty() && kv.count("c_tilde")) s.c_tilde_axis = {s.crra.c_tilde};
            } else if (c.reps == 0 && c.spec_file.empty()) {
                s.reps = 5000;
            }
            if (!c.c.empty()) s.c_axis = c.c;
            if (!c.c_tilde.empty()) s.c_tilde_axis = c.c_tilde;
            if (!c.gamma.empty()) s.gamma_axis = c.gamma;
            if (c.T > 0) s.T = c.T;
            break;
        }
    }
    if (c.reps > 0) s.reps = c.reps;
    validate(s);

    RejectionSurface surf = run_experiment(s);
    const std::string out = c.out.empty() ? "drgmm_" + c.kind + ".csv" : c.out;
    {
        std::ofstream f(out);
        if (!f) throw InputError("cannot write '" + out + "'");
        write_surface_csv(surf, f);
    }
    const std::string man = c.manifest.empty() ? out + ".manifest.json" : c.manifest;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json cfg = json::parse(spec_to_json(s));
    write_text(man, run_manifest("simulate " + c.kind, cfg, s.seed, inputs, {out}, secs).dump(2));

    std::size_t ncells = 0;
    const std::string first = surf.cells.empty() ? "" : surf.cells.front().statistic;
    for (const SurfaceCell& cell : surf.cells) ncells += cell.statistic == first;
    std::cout << "simulate " << c.kind << ": " << ncells << " cells x "
              << (ncells ? surf.cells.size() / ncells : 0) << " statistics, reps " << s.reps << ", seed " << s.seed
              << "\n";
    if (surf.cells.size() > 60) {
        std::vector<std::string> names;
        for (const SurfaceCell& cell : surf.cells)
            if (std::find(names.begin(), names.end(), cell.statistic) == names.end()) names.push_back(cell.statistic);
        for (const std::string& n : names)
            if (n != "J_cdf") std::cout << "  max rejection frequency " << n << ": " << surf.max_frequency(n) << "\n";
    }
    for (const SurfaceCell& cell : surf.cells) {
        if (surf.cells.size() > 60) break;
        if (s.kind == ExperimentKind::JCdf && cell.statistic == "J_cdf") continue;
        std::cout << "  ";
        for (std::size_t i = 0; i < cell.coords.size(); ++i)
            std::cout << surf.axis_names[i] << "=" << fmt_num(cell.coords[i]) << " ";
        std::cout << cell.statistic << " " << std::fixed << std::setprecision(4) << cell.frequency << " (se "
                  << cell.se << ")" << std::defaultfloat << (cell.flag.empty() ? "" : " [" + cell.flag + "]") << "\n";
    }
    std::cout << "wrote " << out << " and " << man << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- ingest

int cmd_ingest(const DataOptions& o) {
    LoadedModel lm = load_model(o);
    std::cout << lm.describe << "\n";
    if (lm.factor) std::cout << "  assets (excess) N = " << lm.factor->k_f() << ", factors m = " << lm.factor->m() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"drgmm: double-robust GMM inference (DRLM, KLM, AR, LR), confidence sets and simulations"};
    app.require_subcommand(1);
    app.fallthrough();
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = hardware concurrency)")->check(CLI::NonNegativeNumber);
    app.set_version_flag("--version", std::string(DRGMM_VERSION));

    TestCmd tc;
    CLI::App* t = app.add_subcommand("test", "test hypothesized parameter values on a dataset");
    tc.data.add(t);
    t->add_option("--theta0", tc.theta0, "hypothesized value (m entries)")->delimiter(',');
    t->add_option("--grid", tc.grid, "lo hi n: evaluate on an evenly spaced grid (m = 1)")->expected(3);
    t->add_option("--stats", tc.stats, "DRLM, DRLM_enhanced, KLM, AR, LR")->delimiter(',');
    t->add_option("--policy", tc.policy, "fixed | conditional");
    t->add_option("--alpha", tc.alpha);
    t->add_option("--json", tc.out_json, "write results and manifest as JSON");
    t->add_option("--csv", tc.out_csv, "write the statistic curve as CSV");

    ConfsetCmd cc;
    CLI::App* cs = app.add_subcommand("confset", "confidence set by test inversion");
    cc.data.add(cs);
    cs->add_option("--stat", cc.stat, "DRLM, DRLM_enhanced, KLM, AR, LR");
    cs->add_option("--policy", cc.policy, "conditional (default) | fixed");
    cs->add_option("--alpha", cc.alpha);
    cs->add_option("--points", cc.points, "grid points (per axis for m = 2)");
    cs->add_option("--scale", cc.scale, "atan grid scale (default: solver scale)");
    cs->add_option("--tol", cc.tol, "bisection tolerance in atan space");
    cs->add_option("--json", cc.out_json, "write the set as JSON");
    cs->add_option("--csv", cc.out_csv, "write the curve (m = 1) or mask (m = 2) as CSV");

    SimulateCmd sc;
    CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo experiments");
    sim->add_option("kind", sc.kind, "size | power | jcdf | crra")->required()->check(CLI::IsMember({"size", "power", "jcdf", "crra"}));
    sim->add_option("--spec", sc.spec_file, "JSON simulation spec or run manifest (flags override)");
    sim->add_option("--n", sc.N, "number of moments N");
    sim->add_option("--m", sc.m, "number of parameters m");
    sim->add_option("--reps", sc.reps, "replications per cell");
    sim->add_option("--seed", sc.seed, "master seed (default: $DRGMM_SEED or built-in)");
    sim->add_option("--alpha", sc.alpha);
    sim->add_option("--policy", sc.policy, "fixed | conditional");
    sim->add_option("--mu2", sc.mu2, "misspecification grid mu'mu")->delimiter(',');
    sim->add_option("--d2", sc.D2, "identification grid D'D")->delimiter(',');
    sim->add_option("--misspec", sc.misspec, "single mu'mu value (power, jcdf)");
    sim->add_option("--lambda", sc.lambda, "pseudo-true drift grid (power)")->delimiter(',');
    sim->add_option("--cdf-points", sc.cdf_points, "evaluation points of the J CDF")->delimiter(',');
    sim->add_flag("--enhanced", sc.enhanced, "size: include the power-enhanced DRLM");
    sim->add_option("--config", sc.config, "CRRA key-value config");
    sim->add_option("--c", sc.c, "CRRA misspecification grid")->delimiter(',');
    sim->add_option("--c-tilde", sc.c_tilde, "CRRA covariance scaling grid")->delimiter(',');
    sim->add_option("--gamma", sc.gamma, "CRRA hypothesized values (default: pseudo-true)")->delimiter(',');
    sim->add_option("--T", sc.T, "CRRA sample size");
    sim->add_option("--out", sc.out, "output CSV");
    sim->add_option("--manifest", sc.manifest, "output manifest JSON");

    DataOptions ic;
    CLI::App* ing = app.add_subcommand("ingest", "validate and summarize a dataset");
    ic.add(ing);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitInput;
    }

    try {
        if (*t) return cmd_test(tc);
        if (*cs) return cmd_confset(cc);
        if (*sim) return cmd_simulate(sc, threads);
        if (*ing) return cmd_ingest(ic);
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const UnsupportedError& e) {
        std::cerr << "unsupported: " << e.what() << "\n";
        return kExitInput;
    } catch (const ConvergenceError& e) {
        std::cerr << "convergence failure: " << e.what() << "\n";
        return kExitConvergence;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::out_of_range& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitOk;
}
