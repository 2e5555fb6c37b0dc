#include "drgmm/confsets.hpp"

#include <cmath>
#include <iomanip>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "drgmm/errors.hpp"
#include "drgmm/montecarlo.hpp"

namespace drgmm {

using json = nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kHalfPi = 1.5707963267948966;

double psi_node(int i, int n) { return -kHalfPi + 2.0 * kHalfPi * (i + 1) / (n + 1); }

// Smallest root of T * Sigma^{-1} D' V_ff^{-1} D, Sigma_ij = tr(V_ff^{-1} V_{theta theta.f, ij}) / k.
double rank_root(const MomentEvaluation& e) {
    const int k = e.k_f(), m = e.m();
    MatrixXd Sig(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) Sig(i, j) = (e.V_ff_inv * e.V_theta_theta_f.block(i * k, j * k, k, k)).trace() / k;
    MatrixXd B = e.T * symmetrize(e.D_hat.transpose() * e.V_ff_inv * e.D_hat);
    return std::max(gen_sym_eig(B, symmetrize(Sig)).values(0), 0.0);
}

PointTest from_result(const TestResult& r) { return {r.value, r.critical_value, r.reject, true}; }

json endpoint(double x) {
    if (x == kInf) return "inf";
    if (x == -kInf) return "-inf";
    return x;
}

json intervals_json(const std::vector<Interval>& v) {
    json a = json::array();
    for (const Interval& iv : v) a.push_back({endpoint(iv.lo), endpoint(iv.hi)});
    return a;
}

std::vector<Interval> runs_to_intervals(const std::vector<char>& acc, const std::vector<double>& theta) {
    std::vector<Interval> out;
    const std::size_t n = acc.size();
    std::size_t i = 0;
    while (i < n) {
        if (!acc[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < n && acc[j + 1]) ++j;
        out.push_back({i == 0 ? -kInf : theta[i], j == n - 1 ? kInf : theta[j]});
        i = j + 1;
    }
    return out;
}

}  // namespace

std::string to_string(StatKind k) {
    switch (k) {
        case StatKind::DRLM: return "DRLM";
        case StatKind::DRLMEnhanced: return "DRLM_enhanced";
        case StatKind::KLM: return "KLM";
        case StatKind::AR: return "AR";
        case StatKind::LR: return "LR";
    }
    return "DRLM";
}

StatKind stat_kind_from_string(const std::string& s0) {
    std::string s;
    for (char c : s0) s.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (s == "DRLM") return StatKind::DRLM;
    if (s == "DRLM_ENHANCED" || s == "ENHANCED" || s == "DRLM-ENHANCED") return StatKind::DRLMEnhanced;
    if (s == "KLM") return StatKind::KLM;
    if (s == "AR" || s == "GMM-AR") return StatKind::AR;
    if (s == "LR" || s == "CLR") return StatKind::LR;
    throw InputError("unknown statistic '" + s0 + "' (expected DRLM, DRLM_enhanced, KLM, AR or LR)");
}

InversionContext make_context(const MomentModel& model, const SolverConfig& config) {
    InversionContext ctx;
    ctx.model = &model;
    ctx.cue = cue_estimate(model, config);
    ctx.J = model.T() * ctx.cue.objective_at_cue;
    return ctx;
}

PointTestFn make_point_test(const InversionContext& ctx, StatKind stat, const CriticalValuePolicy& policy0,
                            double alpha) {
    if (ctx.model == nullptr) throw InputError("inversion context has no model");
    const MomentModel& model = *ctx.model;
    const int m = model.m();
    CriticalValuePolicy policy = policy0;
    if (policy.kind == CvKind::ConditionalCalibrated && m != 1) policy.kind = CvKind::FixedChi2;
    if (stat == StatKind::DRLMEnhanced && m != 1)
        throw UnsupportedError("the power-enhanced DRLM test is implemented for m = 1");
    return [&model, &ctx, stat, policy, alpha, m](const VectorXd& theta) -> PointTest {
        try {
            if (stat == StatKind::DRLMEnhanced)
                return from_result(power_enhanced_test(model, theta, policy, &ctx.cue));
            MomentEvaluation e = evaluate(model, theta);
            switch (stat) {
                case StatKind::DRLM: return from_result(drlm(e, policy));
                case StatKind::KLM: return from_result(klm(e, alpha));
                case StatKind::AR: return from_result(gmm_ar(e, alpha));
                case StatKind::LR: {
                    if (m == 1) return from_result(conditional_lr(e, rank_quadratic_form(e), alpha));
                    const double lr = std::max(scaled_cue_objective(e) - ctx.J, 0.0);
                    const double cv = clr_critical_value(e.k_f() - m + 1, rank_root(e), alpha);
                    return {lr, cv, lr > cv, true};
                }
                case StatKind::DRLMEnhanced: break;
            }
        } catch (const NumericalError&) {
        }
        PointTest bad;
        bad.ok = false;
        return bad;
    };
}

bool ConfidenceSet1D::bounded() const {
    for (const Interval& iv : intervals)
        if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi)) return false;
    return true;
}

bool ConfidenceSet1D::contains(double theta) const {
    for (const Interval& iv : intervals)
        if (theta >= iv.lo && theta <= iv.hi) return true;
    return false;
}

ConfidenceSet1D invert_1d(const PointTestFn& test, double scale, const Grid1D& grid, const std::string& name) {
    if (grid.points < 3) throw InputError("1-D grid needs at least 3 points");
    if (!(scale > 0.0)) throw InputError("grid scale must be positive");
    if (!(grid.tol > 0.0)) throw InputError("bisection tolerance must be positive");
    const int n = grid.points;
    ConfidenceSet1D out;
    out.statistic = name;
    out.points = n;
    out.scale = scale;
    out.tol = grid.tol;
    out.curve.resize(n);
    std::vector<char> fail(n);
    parallel_reps(n, 0, [&](long i) {
        const double th = scale * std::tan(psi_node(static_cast<int>(i), n));
        PointTest p = test(VectorXd::Constant(1, th));
        out.curve[i] = {th, p.value, p.cv, !(p.ok && p.reject)};
        fail[i] = !p.ok;
    });
    for (char f : fail) out.failed_points += f;
    auto accept_at = [&](double psi) {
        PointTest p = test(VectorXd::Constant(1, scale * std::tan(psi)));
        return !(p.ok && p.reject);
    };
    // Boundary between node a (accept == acc_a) and node b; returns theta of the bracket midpoint.
    auto refine = [&](int a, int b) {
        double pa = psi_node(a, n), pb = psi_node(b, n);
        const bool acc_a = out.curve[a].accept;
        while (std::abs(pb - pa) > grid.tol) {
            const double mid = 0.5 * (pa + pb);
            if (accept_at(mid) == acc_a) pa = mid;
            else pb = mid;
        }
        return scale * std::tan(0.5 * (pa + pb));
    };
    int i = 0;
    while (i < n) {
        if (!out.curve[i].accept) {
            ++i;
            continue;
        }
        int j = i;
        while (j + 1 < n && out.curve[j + 1].accept) ++j;
        Interval iv;
        iv.lo = i == 0 ? -kInf : refine(i - 1, i);
        iv.hi = j == n - 1 ? kInf : refine(j, j + 1);
        out.intervals.push_back(iv);
        i = j + 1;
    }
    return out;
}

ConfidenceSet1D invert_1d(const MomentModel& model, StatKind stat, const CriticalValuePolicy& policy,
                          const Grid1D& grid, const SolverConfig& config) {
    if (model.m() != 1) throw InputError("invert_1d needs a model with one parameter");
    InversionContext ctx = make_context(model, config);
    const double s = grid.scale > 0.0 ? grid.scale : ctx.cue.scale;
    ConfidenceSet1D out = invert_1d(make_point_test(ctx, stat, policy, policy.alpha), s, grid, to_string(stat));
    out.level = 1.0 - policy.alpha;
    return out;
}

ConfidenceSet2D invert_2d(const PointTestFn& test, double scale, const Grid2D& grid, const std::string& name) {
    if (grid.points < 3) throw InputError("2-D grid needs at least 3 points per axis");
    if (!(scale > 0.0)) throw InputError("grid scale must be positive");
    const int n = grid.points;
    ConfidenceSet2D out;
    out.statistic = name;
    for (int i = 0; i < n; ++i) out.axis0.push_back(scale * std::tan(psi_node(i, n)));
    out.axis1 = out.axis0;
    out.mask.assign(static_cast<std::size_t>(n) * n, 0);
    std::vector<char> fail(out.mask.size());
    parallel_reps(static_cast<long>(out.mask.size()), 0, [&](long c) {
        const int i = static_cast<int>(c / n), j = static_cast<int>(c % n);
        VectorXd th(2);
        th << out.axis0[i], out.axis1[j];
        PointTest p = test(th);
        out.mask[c] = !(p.ok && p.reject);
        fail[c] = !p.ok;
    });
    for (char f : fail) out.failed_points += f;
    out.projections = {project_mask(out, 0), project_mask(out, 1)};
    return out;
}

ConfidenceSet2D invert_2d(const MomentModel& model, StatKind stat, const CriticalValuePolicy& policy,
                          const Grid2D& grid, const SolverConfig& config) {
    if (model.m() != 2) throw InputError("invert_2d needs a model with two parameters");
    InversionContext ctx = make_context(model, config);
    const double s = grid.scale > 0.0 ? grid.scale : ctx.cue.scale;
    ConfidenceSet2D out = invert_2d(make_point_test(ctx, stat, policy, policy.alpha), s, grid, to_string(stat));
    out.level = 1.0 - policy.alpha;
    return out;
}

std::vector<Interval> project_mask(const ConfidenceSet2D& s, int axis) {
    const std::size_t n0 = s.axis0.size(), n1 = s.axis1.size();
    const std::size_t n = axis == 0 ? n0 : n1;
    std::vector<char> acc(n, 0);
    for (std::size_t i = 0; i < n0; ++i)
        for (std::size_t j = 0; j < n1; ++j)
            if (s.accepted(i, j)) acc[axis == 0 ? i : j] = 1;
    return runs_to_intervals(acc, axis == 0 ? s.axis0 : s.axis1);
}

FamaMacBeth fm_two_pass(const FactorData& data) {
    FactorModel model(data);
    const MatrixXd& b = model.beta();
    const MatrixXd& r = model.excess_returns();
    const int m = static_cast<int>(b.cols());
    const int T = static_cast<int>(r.rows());
    Eigen::FullPivLU<MatrixXd> lu(b.transpose() * b);
    if (lu.rank() < m) throw InputError("Fama-MacBeth: beta matrix is rank deficient");
    MatrixXd L = lu.solve(b.transpose() * r.transpose());  // m x T
    FamaMacBeth out;
    out.lambda_hat = L.rowwise().mean();
    MatrixXd dev = L.colwise() - out.lambda_hat;
    out.se = (dev.rowwise().squaredNorm().transpose() / (T - 1.0) / T).cwiseSqrt();
    out.t = out.lambda_hat.cwiseQuotient(out.se);
    for (int i = 0; i < m; ++i)
        out.ci.push_back({out.lambda_hat(i) - 1.96 * out.se(i), out.lambda_hat(i) + 1.96 * out.se(i)});
    return out;
}

std::string set_to_json(const ConfidenceSet1D& s) {
    json j;
    j["statistic"] = s.statistic;
    j["level"] = s.level;
    j["intervals"] = intervals_json(s.intervals);
    j["bounded"] = s.bounded();
    j["empty"] = s.empty();
    j["grid"] = {{"points", s.points}, {"scale", s.scale}, {"tol_psi", s.tol}};
    j["failed_points"] = s.failed_points;
    return j.dump(2);
}

std::string set_to_json(const ConfidenceSet2D& s) {
    json j;
    j["statistic"] = s.statistic;
    j["level"] = s.level;
    j["grid_points"] = {s.axis0.size(), s.axis1.size()};
    long acc = 0;
    for (char c : s.mask) acc += c;
    j["accepted_cells"] = acc;
    j["projections"] = json::array();
    for (const auto& p : s.projections) j["projections"].push_back(intervals_json(p));
    j["failed_points"] = s.failed_points;
    return j.dump(2);
}

std::string format_interval_union(const std::vector<Interval>& v) {
    if (v.empty()) return "{}";
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << " U ";
        os << (std::isfinite(v[i].lo) ? "[" : "(");
        if (std::isfinite(v[i].lo)) os << v[i].lo;
        else os << "-inf";
        os << ", ";
        if (std::isfinite(v[i].hi)) os << v[i].hi;
        else os << "+inf";
        os << (std::isfinite(v[i].hi) ? "]" : ")");
    }
    return os.str();
}

}  // namespace drgmm
