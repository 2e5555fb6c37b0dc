#include "drgmm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "drgmm/errors.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>

namespace drgmm {

double conditional_cv(double r, double alpha) {
    if (std::abs(alpha - 0.05) > 1e-12)
        throw UnsupportedError("the conditional critical value is calibrated for alpha = 0.05 only");
    if (!(r >= 0.0)) throw InputError("conditioning value must be non-negative");
    if (r > 250.0) return 3.84;
    return 2.4 + std::pow(std::floor(r), 0.35) * (3.84 - 2.4) / std::pow(250.0, 0.35);
}

double rank_quadratic_form(const MomentEvaluation& e) {
    const int k = e.k_f(), m = e.m();
    Eigen::Map<const VectorXd> vd(e.D_hat.data(), k * m);
    return e.T * vd.dot(sym_inverse(e.V_theta_theta_f, 1e-14) * vd);
}

double drlm_conditioning(const MomentEvaluation& e) {
    if (e.m() != 1) throw UnsupportedError("conditioning value is defined for m = 1");
    const double ar = e.T * e.f_T.dot(e.V_ff_inv * e.f_T);
    return std::max(ar, rank_quadratic_form(e));
}

double policy_cv(const CriticalValuePolicy& policy, int m, double r) {
    if (policy.kind == CvKind::FixedChi2) return chi2_quantile(m, 1.0 - policy.alpha);
    if (m != 1) throw UnsupportedError("the conditional critical value is calibrated for m = 1 only");
    return conditional_cv(r, policy.alpha);
}

namespace {

// Inverse of a small symmetric weight matrix; fails when it is numerically zero or singular.
MatrixXd weight_inverse(const MatrixXd& w, const std::string& what) {
    SymSpectrum s = sym_eig(w);
    const double mx = s.values.cwiseAbs().maxCoeff();
    if (!(mx > 0.0) || s.values(0) <= 1e-13 * mx)
        throw NumericalError(what);
    return s.vectors * s.values.cwiseInverse().asDiagonal() * s.vectors.transpose();
}

TestResult finish(std::string name, double value, int df, double cv) {
    TestResult r;
    r.name = std::move(name);
    r.value = std::max(value, 0.0);
    r.df = df;
    r.critical_value = cv;
    r.reject = r.value > cv;
    r.p_bound = chi2_upper_tail(df, r.value);
    return r;
}

}  // namespace

TestResult drlm(const MomentEvaluation& e, const CriticalValuePolicy& policy) {
    const int k = e.k_f(), m = e.m();
    VectorXd g = e.V_ff_inv * e.f_T;
    VectorXd s = e.D_hat.transpose() * g;
    MatrixXd A(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) A(i, j) = g.dot(e.V_theta_theta_f.block(i * k, j * k, k, k) * g);
    MatrixXd B = e.D_hat.transpose() * e.V_ff_inv * e.D_hat;
    MatrixXd W = symmetrize(A + B);
    MatrixXd Wi = weight_inverse(
        W, "degenerate DRLM weight matrix: |f_T| = " + std::to_string(e.f_T.norm()) +
               ", |D_hat| = " + std::to_string(e.D_hat.norm()));
    const double value = e.T * s.dot(Wi * s);
    std::optional<double> r;
    if (policy.kind == CvKind::ConditionalCalibrated) r = drlm_conditioning(e);
    TestResult out = finish("DRLM", value, m, policy_cv(policy, m, r.value_or(0.0)));
    out.conditioning_value = r;
    return out;
}

TestResult klm(const MomentEvaluation& e, double alpha) {
    const int m = e.m();
    VectorXd s = e.D_hat.transpose() * (e.V_ff_inv * e.f_T);
    MatrixXd B = symmetrize(e.D_hat.transpose() * e.V_ff_inv * e.D_hat);
    MatrixXd Bi = weight_inverse(B, "KLM: recentered Jacobian is rank deficient");
    return finish("KLM", e.T * s.dot(Bi * s), m, chi2_quantile(m, 1.0 - alpha));
}

TestResult gmm_ar(const MomentEvaluation& e, double alpha) {
    const int k = e.k_f();
    return finish("AR", scaled_cue_objective(e), k, chi2_quantile(k, 1.0 - alpha));
}

TestResult rank_is_statistic(const FactorModel& model, double alpha) {
    const MatrixXd& b = model.beta();
    MatrixXd Qh = sym_sqrt(model.Q());
    MatrixXd G = Qh * b.transpose() * sym_inverse(model.Omega()) * b * Qh;
    const double v = model.T() * sym_eig(G).values(0);
    const int df = model.k_f() - model.m() + 1;
    TestResult r = finish("rank", v, df, chi2_quantile(df, 1.0 - alpha));
    return r;
}

TestResult rank_is_statistic(const IvModel& model, double alpha) {
    const double T = model.T();
    const int k = model.k_f(), m = model.m();
    MatrixXd Svv = model.reduced_form_cov().bottomRightCorner(m, m) * T /
                   (T - k - model.exogenous_count());
    const MatrixXd& P = model.first_stage();
    MatrixXd G = T * P.transpose() * model.Qzz() * P;
    const double v = gen_sym_eig(G, Svv).values(0);
    const int df = k - m + 1;
    return finish("rank", v, df, chi2_quantile(df, 1.0 - alpha));
}

// ---------------------------------------------------------------- CLR

double clr_statistic(double ar, double klm_v, double rk) {
    const double disc = std::max((ar + rk) * (ar + rk) - 4.0 * (ar - klm_v) * rk, 0.0);
    return std::max(0.5 * (ar - rk + std::sqrt(disc)), 0.0);
}

namespace {

constexpr int kClrNodes = 481;
constexpr double kClrUMax = 12.0;  // nodes uniform in log(1 + r)

std::mutex clr_mutex;
std::map<std::pair<int, double>, std::vector<double>> clr_tables;

// P(LR >= c | r): LR >= c iff chi2(1) >= c (c + r - b) / (c + r) with b ~ chi2(k - 1).
double clr_tail(int k, double r, double c) {
    if (c <= 0.0) return 1.0;
    const boost::math::chi_squared one(1.0), rest(k - 1.0);
    const double top = c + r;
    auto integrand = [&](double b) {
        const double a = c * (top - b) / top;
        return boost::math::pdf(rest, b) * (a <= 0.0 ? 1.0 : boost::math::cdf(boost::math::complement(one, a)));
    };
    boost::math::quadrature::tanh_sinh<double> ts;
    const double body = ts.integrate(integrand, 0.0, top);
    return std::clamp(body + boost::math::cdf(boost::math::complement(rest, top)), 0.0, 1.0);
}

double clr_exact_cv(int k, double r, double alpha) {
    const double hi = chi2_quantile(k, 1.0 - alpha);
    auto f = [&](double c) { return clr_tail(k, r, c) - alpha; };
    if (f(hi) >= 0.0) return hi;
    const double lo = chi2_quantile(1, 1.0 - alpha) * (1.0 - 1e-9);
    if (f(lo) <= 0.0) return lo;
    std::uintmax_t it = 100;
    auto br = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(40), it);
    return 0.5 * (br.first + br.second);
}

double node_r(int j) { return std::expm1(kClrUMax * j / (kClrNodes - 1)); }

// Nodes are solved on first use; NaN marks an unsolved node.
double clr_node(int k, double alpha, int j) {
    auto it = clr_tables.find({k, alpha});
    if (it == clr_tables.end())
        it = clr_tables.emplace(std::make_pair(k, alpha),
                                std::vector<double>(kClrNodes, std::numeric_limits<double>::quiet_NaN())).first;
    double& v = it->second[j];
    if (std::isnan(v)) v = clr_exact_cv(k, node_r(j), alpha);
    return v;
}

}  // namespace

double clr_critical_value(int k, double rank_stat, double alpha) {
    if (k < 2) throw InputError("CLR requires k_f >= 2");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0,1)");
    std::lock_guard<std::mutex> lock(clr_mutex);
    const double u = std::log1p(std::max(rank_stat, 0.0)) * (kClrNodes - 1) / kClrUMax;
    if (u >= kClrNodes - 1) return clr_node(k, alpha, kClrNodes - 1);
    const int j = static_cast<int>(u);
    const double w = u - j;
    return (1.0 - w) * clr_node(k, alpha, j) + w * clr_node(k, alpha, j + 1);
}

double clr_pvalue(int k, double rank_stat, double lr) {
    if (k < 2) throw InputError("CLR requires k_f >= 2");
    return clr_tail(k, std::max(rank_stat, 0.0), lr);
}

TestResult conditional_lr(const MomentEvaluation& e, double rank_stat, double alpha) {
    if (e.m() != 1) throw UnsupportedError("conditional LR is implemented for m = 1");
    const double ar = scaled_cue_objective(e);
    const double kv = klm(e, alpha).value;
    TestResult r;
    r.name = "LR";
    r.value = clr_statistic(ar, kv, rank_stat);
    r.df = 1;
    r.critical_value = clr_critical_value(e.k_f(), rank_stat, alpha);
    r.reject = r.value > r.critical_value;
    r.p_bound = clr_pvalue(e.k_f(), rank_stat, r.value);
    r.conditioning_value = rank_stat;
    return r;
}

// ---------------------------------------------------------------- Kronecker fast path

KronGram kron_gram(const KroneckerForm& kf) {
    return {symmetrize(kf.H.transpose() * sym_inverse(kf.Vbase) * kf.H), kf.S, kf.T};
}

namespace {

KronPoint kron_point_scalar(const KronGram& g, double th) {
    const MatrixXd& S = g.S;
    const MatrixXd& M = g.M;
    const double vff = S(0, 0) - 2.0 * th * S(0, 1) + th * th * S(1, 1);
    const double vtf = th * S(1, 1) - S(1, 0);
    const double vttf = S(1, 1) - vtf * vtf / vff;
    const double c0 = -vtf / vff;
    const double c1 = -1.0 + th * vtf / vff;
    const double mb0 = M(0, 0) - th * M(0, 1);
    const double mb1 = M(1, 0) - th * M(1, 1);
    const double bmb = M(0, 0) - 2.0 * th * M(0, 1) + th * th * M(1, 1);
    const double s = (c0 * mb0 + c1 * mb1) / vff;
    const double cmc = c0 * c0 * M(0, 0) + 2.0 * c0 * c1 * M(0, 1) + c1 * c1 * M(1, 1);
    const double B = cmc / vff;
    const double A = vttf * bmb / (vff * vff);
    KronPoint p;
    p.ar = g.T * bmb / vff;
    p.score = VectorXd::Constant(1, g.T * s);
    p.klm = g.T * s * s / B;
    p.drlm = g.T * s * s / (A + B);
    p.rank = g.T * cmc / vttf;
    return p;
}

}  // namespace

KronPoint kron_point(const KronGram& g, const VectorXd& theta) {
    const int m = g.m();
    if (m == 1) return kron_point_scalar(g, theta(0));
    VectorXd b(m + 1);
    b(0) = 1.0;
    b.tail(m) = -theta;
    const double vff = b.dot(g.S * b);
    VectorXd vtf = -(g.S.bottomRows(m) * b);
    MatrixXd vttf = g.S.bottomRightCorner(m, m) - vtf * vtf.transpose() / vff;
    MatrixXd C = MatrixXd::Zero(m + 1, m);
    C.bottomRows(m) = -MatrixXd::Identity(m, m);
    C -= b * vtf.transpose() / vff;
    const double bmb = b.dot(g.M * b);
    VectorXd s = C.transpose() * (g.M * b) / vff;
    MatrixXd CMC = C.transpose() * g.M * C;
    MatrixXd B = CMC / vff;
    MatrixXd A = vttf * bmb / (vff * vff);
    KronPoint p;
    p.ar = g.T * bmb / vff;
    p.score = g.T * s;
    p.klm = g.T * s.dot(B.ldlt().solve(s));
    p.drlm = g.T * s.dot((A + B).ldlt().solve(s));
    p.rank = g.T * (vttf.ldlt().solve(CMC)).trace();
    return p;
}

}  // namespace drgmm
