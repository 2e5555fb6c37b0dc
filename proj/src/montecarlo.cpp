#include "drgmm/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <json.hpp>
#include <mutex>
#include <ostream>
#include <thread>

#include "drgmm/errors.hpp"
#include "drgmm/limitdist.hpp"
#include "drgmm/moments.hpp"

namespace drgmm {

using json = nlohmann::json;

namespace {

void check_increasing(const std::vector<double>& v, const char* name) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1])) throw InputError(std::string(name) + " must be strictly increasing");
}

void check_nonneg(const std::vector<double>& v, const char* name) {
    for (double x : v)
        if (!(x >= 0.0) || !std::isfinite(x)) throw InputError(std::string(name) + " entries must be finite and >= 0");
}

LimitExperimentParams cell_params(const SimSpec& spec, double mu2, double D2, double ls) {
    if (spec.m == 1) return limit_params(spec.N, mu2, D2, ls);
    LimitExperimentParams p;
    p.N = spec.N;
    p.m = spec.m;
    p.mu_bar = VectorXd::Zero(spec.N);
    p.mu_bar(0) = std::sqrt(mu2);
    p.D_bar = MatrixXd::Zero(spec.N, spec.m);
    for (int j = 0; j < spec.m; ++j) p.D_bar(j + 1, j) = std::sqrt(D2);
    p.lambda_star = VectorXd::Zero(spec.m);
    p.Q_FF = MatrixXd::Identity(spec.m, spec.m);
    return p;
}

double conditioning(const LimitStats& s, int m) { return m == 1 ? std::max(s.ar, s.rank) : 0.0; }

long count(const std::vector<char>& v) { return std::count(v.begin(), v.end(), 1); }

}  // namespace

std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Size: return "size";
        case ExperimentKind::Power: return "power";
        case ExperimentKind::JCdf: return "jcdf";
        case ExperimentKind::Crra: return "crra";
    }
    return "size";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
    if (s == "size") return ExperimentKind::Size;
    if (s == "power") return ExperimentKind::Power;
    if (s == "jcdf") return ExperimentKind::JCdf;
    if (s == "crra") return ExperimentKind::Crra;
    throw InputError("unknown experiment kind '" + s + "'");
}

void validate(const SimSpec& spec) {
    if (spec.reps < 1) throw InputError("reps must be positive");
    if (!(spec.alpha > 0.0 && spec.alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    if (spec.m < 1 || spec.N <= spec.m) throw InputError("experiments need N > m >= 1");
    if (spec.threads < 0) throw InputError("threads must be >= 0");
    switch (spec.kind) {
        case ExperimentKind::Size:
        case ExperimentKind::JCdf:
            if (spec.mu2_axis.empty() || spec.D2_axis.empty()) throw InputError("grid axes must be non-empty");
            check_nonneg(spec.mu2_axis, "mu2 axis");
            check_nonneg(spec.D2_axis, "D2 axis");
            check_increasing(spec.mu2_axis, "mu2 axis");
            check_increasing(spec.D2_axis, "D2 axis");
            check_increasing(spec.cdf_points, "cdf points");
            if (spec.kind == ExperimentKind::Size && spec.include_enhanced && spec.m != 1)
                throw UnsupportedError("the power-enhanced test is implemented for m = 1");
            break;
        case ExperimentKind::Power:
            if (spec.m != 1) throw UnsupportedError("power curves are implemented for m = 1");
            if (spec.mu2_axis.empty() || spec.D2_axis.empty() || spec.lambda_axis.empty())
                throw InputError("power curves need mu2, D2 and lambda axes");
            check_nonneg(spec.mu2_axis, "mu2 axis");
            check_nonneg(spec.D2_axis, "D2 axis");
            check_increasing(spec.mu2_axis, "mu2 axis");
            check_increasing(spec.D2_axis, "D2 axis");
            check_increasing(spec.lambda_axis, "lambda axis");
            break;
        case ExperimentKind::Crra:
            if (spec.T < 10) throw InputError("CRRA experiment needs T >= 10");
            if (spec.c_axis.empty() || spec.c_tilde_axis.empty()) throw InputError("c and c_tilde axes must be non-empty");
            check_increasing(spec.c_axis, "c axis");
            check_increasing(spec.c_tilde_axis, "c_tilde axis");
            check_increasing(spec.gamma_axis, "gamma axis");
            validate(spec.crra);
            break;
    }
}

const SurfaceCell& RejectionSurface::at(const std::string& statistic, const std::vector<double>& coords) const {
    for (const SurfaceCell& c : cells) {
        if (c.statistic != statistic || c.coords.size() != coords.size()) continue;
        bool ok = true;
        for (std::size_t i = 0; i < coords.size() && ok; ++i)
            ok = std::abs(c.coords[i] - coords[i]) <= 1e-12 * std::max(1.0, std::abs(coords[i]));
        if (ok) return c;
    }
    throw InputError("no cell for statistic '" + statistic + "' at the requested coordinates");
}

double RejectionSurface::max_frequency(const std::string& statistic) const {
    double best = -1.0;
    for (const SurfaceCell& c : cells)
        if (c.statistic == statistic) best = std::max(best, c.frequency);
    return best;
}

SurfaceCell make_cell(std::vector<double> coords, std::string statistic, long reps, long rejections,
                      std::string flag) {
    SurfaceCell c;
    c.coords = std::move(coords);
    c.statistic = std::move(statistic);
    c.reps = reps;
    c.rejections = rejections;
    c.frequency = reps > 0 ? static_cast<double>(rejections) / reps : 0.0;
    c.se = reps > 0 ? std::sqrt(c.frequency * (1.0 - c.frequency) / reps) : 0.0;
    c.flag = std::move(flag);
    return c;
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_reps(long reps, int threads, const std::function<void(long)>& body) {
    const int nt = static_cast<int>(std::min<long>(resolve_threads(threads), std::max(1L, reps)));
    if (nt <= 1) {
        for (long r = 0; r < reps; ++r) body(r);
        return;
    }
    constexpr long kChunk = 64;
    std::atomic<long> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        try {
            for (;;) {
                const long start = next.fetch_add(kChunk);
                if (start >= reps) return;
                const long stop = std::min(reps, start + kChunk);
                for (long r = start; r < stop; ++r) body(r);
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) error = std::current_exception();
            next.store(reps);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (int i = 0; i < nt; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

RejectionSurface run_size_surface(const SimSpec& spec0) {
    SimSpec spec = spec0;
    spec.kind = ExperimentKind::Size;
    spec.policy.alpha = spec.alpha;
    validate(spec);
    const double klm_cv = chi2_quantile(spec.m, 1.0 - spec.alpha);
    RejectionSurface out;
    out.axis_names = {"mu2", "D2"};
    const long R = spec.reps;
    std::vector<char> dr(R), kl(R), en(R);
    for (double mu2 : spec.mu2_axis)
        for (double D2 : spec.D2_axis) {
            const LimitExperimentParams p = cell_params(spec, mu2, D2, 0.0);
            parallel_reps(R, spec.threads, [&](long r) {
                VectorXd f;
                MatrixXd D;
                limit_draw(p, spec.seed, static_cast<std::uint64_t>(r), f, D);
                const LimitStats s = limit_stats(f, D);
                dr[r] = s.drlm > policy_cv(spec.policy, spec.m, conditioning(s, spec.m));
                kl[r] = s.klm > klm_cv;
                if (spec.include_enhanced) en[r] = limit_enhanced(limit_gram(f, D), spec.policy).reject;
            });
            out.cells.push_back(make_cell({mu2, D2}, "DRLM", R, count(dr)));
            out.cells.push_back(make_cell({mu2, D2}, "KLM", R, count(kl)));
            if (spec.include_enhanced)
                out.cells.push_back(make_cell({mu2, D2}, "DRLM_enhanced", R, count(en),
                                              mu2 > D2 ? "not_size_measurement" : ""));
        }
    return out;
}

RejectionSurface run_power_curve(const SimSpec& spec0) {
    SimSpec spec = spec0;
    spec.kind = ExperimentKind::Power;
    spec.policy.alpha = spec.alpha;
    validate(spec);
    const double klm_cv = chi2_quantile(1, 1.0 - spec.alpha);
    const double ar_cv = chi2_quantile(spec.N, 1.0 - spec.alpha);
    RejectionSurface out;
    out.axis_names = {"mu2", "D2", "lambda_star"};
    const long R = spec.reps;
    std::vector<char> dr(R), en(R), kl(R), ar(R), lr(R);
    for (double mu2 : spec.mu2_axis)
        for (double D2 : spec.D2_axis)
            for (double ls : spec.lambda_axis) {
                const LimitExperimentParams p = cell_params(spec, mu2, D2, ls);
                parallel_reps(R, spec.threads, [&](long r) {
                    VectorXd f;
                    MatrixXd D;
                    limit_draw(p, spec.seed, static_cast<std::uint64_t>(r), f, D);
                    const LimitStats s = limit_stats(f, D);
                    dr[r] = s.drlm > policy_cv(spec.policy, 1, conditioning(s, 1));
                    en[r] = limit_enhanced(limit_gram(f, D), spec.policy).reject;
                    kl[r] = s.klm > klm_cv;
                    ar[r] = s.ar > ar_cv;
                    lr[r] = s.lr > clr_critical_value(spec.N, s.rank, spec.alpha);
                });
                const std::vector<double> at{mu2, D2, ls};
                out.cells.push_back(make_cell(at, "DRLM", R, count(dr)));
                out.cells.push_back(make_cell(at, "DRLM_enhanced", R, count(en)));
                out.cells.push_back(make_cell(at, "KLM", R, count(kl)));
                out.cells.push_back(make_cell(at, "AR", R, count(ar)));
                out.cells.push_back(make_cell(at, "LR", R, count(lr)));
            }
    return out;
}

RejectionSurface run_jstat_cdf(const SimSpec& spec0) {
    SimSpec spec = spec0;
    spec.kind = ExperimentKind::JCdf;
    spec.policy.alpha = spec.alpha;
    validate(spec);
    std::vector<double> pts = spec.cdf_points;
    if (pts.empty())
        for (int i = 0; i <= 200; ++i) pts.push_back(4.0 * spec.N * i / 200.0);
    const double cv = chi2_quantile(spec.N - spec.m, 1.0 - spec.alpha);
    RejectionSurface out;
    out.axis_names = {"mu2", "D2", "x"};
    const long R = spec.reps;
    std::vector<double> j(R);
    for (double mu2 : spec.mu2_axis)
        for (double D2 : spec.D2_axis) {
            const LimitExperimentParams p = cell_params(spec, mu2, D2, 0.0);
            parallel_reps(R, spec.threads, [&](long r) {
                VectorXd f;
                MatrixXd D;
                limit_draw(p, spec.seed, static_cast<std::uint64_t>(r), f, D);
                j[r] = limit_stats(f, D).j;
            });
            std::vector<double> sorted = j;
            std::sort(sorted.begin(), sorted.end());
            const long above = R - (std::upper_bound(sorted.begin(), sorted.end(), cv) - sorted.begin());
            out.cells.push_back(make_cell({mu2, D2, cv}, "J", R, above));
            for (double x : pts) {
                const long below = std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin();
                out.cells.push_back(make_cell({mu2, D2, x}, "J_cdf", R, below));
            }
        }
    return out;
}

RejectionSurface run_crra_experiment(const SimSpec& spec0) {
    SimSpec spec = spec0;
    spec.kind = ExperimentKind::Crra;
    spec.policy.alpha = spec.alpha;
    validate(spec);
    const int N = spec.crra.N();
    const double ar_cv = chi2_quantile(N, 1.0 - spec.alpha);
    RejectionSurface out;
    out.axis_names = {"c", "c_tilde", "gamma0", "gamma_star"};
    const long R = spec.reps;
    for (double c : spec.c_axis)
        for (double ct : spec.c_tilde_axis) {
            CrraDgpParams p = spec.crra;
            p.c = c;
            p.c_tilde = ct;
            const CrraPseudoTrue pt = crra_pseudo_true(p);
            const std::vector<double> gammas = spec.gamma_axis.empty() ? std::vector<double>{pt.gamma_star} : spec.gamma_axis;
            const std::size_t G = gammas.size();
            std::vector<char> ar(R * G), dr(R * G), fail(R * G);
            parallel_reps(R, spec.threads, [&](long r) {
                CrraSample smp = crra_dgp_sample(p, spec.T, spec.seed, static_cast<std::uint64_t>(r));
                CrraModel model(smp.consumption, smp.returns, p.delta0);
                for (std::size_t g = 0; g < G; ++g) {
                    const std::size_t i = static_cast<std::size_t>(r) * G + g;
                    try {
                        MomentEvaluation e = evaluate(model, VectorXd::Constant(1, gammas[g]));
                        const TestResult d = drlm(e, spec.policy);
                        ar[i] = gmm_ar(e, spec.alpha).value > ar_cv;
                        dr[i] = d.reject;
                    } catch (const NumericalError&) {
                        fail[i] = 1;
                    } catch (const InputError&) {
                        fail[i] = 1;
                    }
                }
            });
            for (std::size_t g = 0; g < G; ++g) {
                long na = 0, nd = 0, nf = 0;
                for (long r = 0; r < R; ++r) {
                    const std::size_t i = static_cast<std::size_t>(r) * G + g;
                    na += ar[i];
                    nd += dr[i];
                    nf += fail[i];
                }
                std::string flag = pt.at_edge ? "pseudo_true_at_edge" : "";
                if (nf > 0) flag += (flag.empty() ? "" : ";") + std::string("failures=") + std::to_string(nf);
                const std::vector<double> at{c, ct, gammas[g], pt.gamma_star};
                out.cells.push_back(make_cell(at, "AR", R, na, flag));
                out.cells.push_back(make_cell(at, "DRLM", R, nd, flag));
            }
        }
    return out;
}

RejectionSurface run_experiment(const SimSpec& spec) {
    switch (spec.kind) {
        case ExperimentKind::Size: return run_size_surface(spec);
        case ExperimentKind::Power: return run_power_curve(spec);
        case ExperimentKind::JCdf: return run_jstat_cdf(spec);
        case ExperimentKind::Crra: return run_crra_experiment(spec);
    }
    throw InputError("unknown experiment kind");
}

void write_surface_csv(const RejectionSurface& s, std::ostream& out) {
    for (const std::string& a : s.axis_names) out << a << ',';
    out << "statistic,reps,rejections,frequency,se,flag\n";
    out.precision(17);
    for (const SurfaceCell& c : s.cells) {
        for (double x : c.coords) out << x << ',';
        out << c.statistic << ',' << c.reps << ',' << c.rejections << ',' << c.frequency << ',' << c.se << ','
            << c.flag << '\n';
    }
}

namespace {

json crra_to_json(const CrraDgpParams& p) {
    json j;
    j["delta0"] = p.delta0;
    j["gamma0"] = p.gamma0;
    j["V_cc"] = p.V_cc;
    j["V_rc"] = std::vector<double>(p.V_rc.data(), p.V_rc.data() + p.V_rc.size());
    std::vector<double> vrr;
    for (Eigen::Index i = 0; i < p.V_rr.rows(); ++i)
        for (Eigen::Index k = 0; k < p.V_rr.cols(); ++k) vrr.push_back(p.V_rr(i, k));
    j["V_rr"] = vrr;
    if (p.mu2.size()) j["mu2"] = std::vector<double>(p.mu2.data(), p.mu2.data() + p.mu2.size());
    j["c"] = p.c;
    j["c_tilde"] = p.c_tilde;
    return j;
}

VectorXd to_vector(const std::vector<double>& v) { return Eigen::Map<const VectorXd>(v.data(), v.size()); }

CrraDgpParams crra_from_json(const json& j) {
    CrraDgpParams p;
    p.delta0 = j.at("delta0").get<double>();
    p.gamma0 = j.at("gamma0").get<double>();
    p.V_cc = j.at("V_cc").get<double>();
    p.V_rc = to_vector(j.at("V_rc").get<std::vector<double>>());
    const auto vrr = j.at("V_rr").get<std::vector<double>>();
    const Eigen::Index n = p.V_rc.size();
    if (static_cast<Eigen::Index>(vrr.size()) != n * n) throw InputError("V_rr must have N*N entries");
    p.V_rr = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(vrr.data(), n, n);
    if (j.contains("mu2")) p.mu2 = to_vector(j.at("mu2").get<std::vector<double>>());
    p.c = j.at("c").get<double>();
    p.c_tilde = j.at("c_tilde").get<double>();
    return p;
}

json spec_json(const SimSpec& s) {
    json j;
    j["kind"] = to_string(s.kind);
    j["mu2_axis"] = s.mu2_axis;
    j["D2_axis"] = s.D2_axis;
    j["lambda_axis"] = s.lambda_axis;
    j["cdf_points"] = s.cdf_points;
    j["reps"] = s.reps;
    j["alpha"] = s.alpha;
    j["seed"] = s.seed;
    j["N"] = s.N;
    j["m"] = s.m;
    j["policy"] = s.policy.kind == CvKind::FixedChi2 ? "fixed" : "conditional";
    j["include_enhanced"] = s.include_enhanced;
    j["threads"] = s.threads;
    if (s.kind == ExperimentKind::Crra) {
        j["crra"] = crra_to_json(s.crra);
        j["c_axis"] = s.c_axis;
        j["c_tilde_axis"] = s.c_tilde_axis;
        j["gamma_axis"] = s.gamma_axis;
        j["T"] = s.T;
    }
    return j;
}

}  // namespace

std::string spec_to_json(const SimSpec& spec) { return spec_json(spec).dump(2); }

SimSpec spec_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InputError(std::string("invalid JSON spec: ") + e.what());
    }
    SimSpec s;
    try {
        s.kind = experiment_kind_from_string(j.at("kind").get<std::string>());
        if (j.contains("mu2_axis")) s.mu2_axis = j["mu2_axis"].get<std::vector<double>>();
        if (j.contains("D2_axis")) s.D2_axis = j["D2_axis"].get<std::vector<double>>();
        if (j.contains("lambda_axis")) s.lambda_axis = j["lambda_axis"].get<std::vector<double>>();
        if (j.contains("cdf_points")) s.cdf_points = j["cdf_points"].get<std::vector<double>>();
        if (j.contains("reps")) s.reps = j["reps"].get<long>();
        if (j.contains("alpha")) s.alpha = j["alpha"].get<double>();
        if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("N")) s.N = j["N"].get<int>();
        if (j.contains("m")) s.m = j["m"].get<int>();
        if (j.contains("policy")) {
            const std::string p = j["policy"].get<std::string>();
            if (p == "fixed") s.policy.kind = CvKind::FixedChi2;
            else if (p == "conditional") s.policy.kind = CvKind::ConditionalCalibrated;
            else throw InputError("policy must be 'fixed' or 'conditional'");
        }
        s.policy.alpha = s.alpha;
        if (j.contains("include_enhanced")) s.include_enhanced = j["include_enhanced"].get<bool>();
        if (j.contains("threads")) s.threads = j["threads"].get<int>();
        if (j.contains("crra")) s.crra = crra_from_json(j["crra"]);
        if (j.contains("c_axis")) s.c_axis = j["c_axis"].get<std::vector<double>>();
        if (j.contains("c_tilde_axis")) s.c_tilde_axis = j["c_tilde_axis"].get<std::vector<double>>();
        if (j.contains("gamma_axis")) s.gamma_axis = j["gamma_axis"].get<std::vector<double>>();
        if (j.contains("T")) s.T = j["T"].get<int>();
    } catch (const json::exception& e) {
        throw InputError(std::string("invalid simulation spec: ") + e.what());
    }
    validate(s);
    return s;
}

std::string manifest_json(const SimSpec& spec, const std::vector<std::string>& outputs) {
    json j;
    j["tool"] = "drgmm";
    j["version"] = DRGMM_VERSION;
    j["seed"] = spec.seed;
    j["spec"] = spec_json(spec);
    j["outputs"] = outputs;
    return j.dump(2);
}

}  // namespace drgmm
