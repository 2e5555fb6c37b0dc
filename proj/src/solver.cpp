#include "drgmm/solver.hpp"

#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "drgmm/errors.hpp"
#include "drgmm/rng.hpp"

namespace drgmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;

VectorXd score_of(const MomentEvaluation& e) { return e.D_hat.transpose() * (e.V_ff_inv * e.f_T); }

struct Probe {
    double obj = kInf;
    VectorXd grad;  // gradient of the unscaled objective
    bool ok = false;
};

Probe probe(const MomentModel& model, const VectorXd& theta) {
    Probe p;
    try {
        MomentEvaluation e = evaluate(model, theta);
        p.obj = cue_objective(e);
        p.grad = 2.0 * score_of(e);
        p.ok = std::isfinite(p.obj) && p.grad.allFinite();
    } catch (const NumericalError&) {
        p.ok = false;
    }
    return p;
}

// Quasi-Newton polish of the unscaled CUE objective from theta0.
VectorXd bfgs(const MomentModel& model, VectorXd theta, double tol, double& fval) {
    const int m = static_cast<int>(theta.size());
    Probe cur = probe(model, theta);
    if (!cur.ok) {
        fval = kInf;
        return theta;
    }
    MatrixXd H = MatrixXd::Identity(m, m);
    const double g0 = cur.grad.norm();
    if (g0 > 0.0) H *= (1.0 + theta.norm()) * 1e-2 / g0;
    for (int it = 0; it < 1000; ++it) {
        VectorXd p = -H * cur.grad;
        if (p.dot(cur.grad) >= 0.0) {
            H = MatrixXd::Identity(m, m) * ((1.0 + theta.norm()) * 1e-2 / std::max(cur.grad.norm(), 1e-300));
            p = -H * cur.grad;
        }
        double a = 1.0;
        Probe nxt;
        VectorXd tn;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls) {
            tn = theta + a * p;
            nxt = probe(model, tn);
            if (nxt.ok && nxt.obj <= cur.obj + 1e-4 * a * cur.grad.dot(p)) {
                moved = true;
                break;
            }
            a *= 0.5;
        }
        if (!moved) break;
        VectorXd s = tn - theta, y = nxt.grad - cur.grad;
        const double sy = s.dot(y);
        theta = tn;
        const bool small = s.cwiseAbs().maxCoeff() < tol * (1.0 + theta.cwiseAbs().maxCoeff());
        cur = nxt;
        if (small) break;
        if (sy > 1e-300) {
            const double rho = 1.0 / sy;
            MatrixXd I = MatrixXd::Identity(m, m);
            H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) + rho * s * s.transpose();
        }
    }
    fval = cur.obj;
    return theta;
}

VectorXd signed_infinity(double sign, int m) {
    return VectorXd::Constant(m, sign >= 0.0 ? kInf : -kInf);
}

StationaryPointSet cue_1d(const MomentModel& model, const SolverConfig& cfg, double s) {
    const int n = cfg.grid;
    std::vector<double> psi(n), obj(n, kInf), sc(n, 0.0);
    std::vector<char> ok(n, 0);
    for (int j = 0; j < n; ++j) {
        psi[j] = -kPi / 2 + kPi * (j + 0.5) / n;
        Probe p = probe(model, VectorXd::Constant(1, s * std::tan(psi[j])));
        if (p.ok) {
            ok[j] = 1;
            obj[j] = p.obj;
            sc[j] = p.grad(0);
        }
    }
    if (std::none_of(ok.begin(), ok.end(), [](char c) { return c != 0; }))
        throw NumericalError("CUE search: the objective is singular at every grid point");
    auto grad_at = [&](double ps) {
        Probe p = probe(model, VectorXd::Constant(1, s * std::tan(ps)));
        if (!p.ok) throw NumericalError("singular evaluation during root refinement");
        return p.grad(0);
    };
    StationaryPointSet out;
    out.scale = s;
    std::vector<StationaryPoint> pts;
    for (int j = 0; j + 1 < n; ++j) {
        if (!ok[j] || !ok[j + 1]) continue;
        const double a = sc[j], b = sc[j + 1];
        if (a == 0.0 || (a < 0.0) == (b < 0.0)) continue;
        double root;
        try {
            std::uintmax_t iters = 200;
            auto r = boost::math::tools::toms748_solve(
                grad_at, psi[j], psi[j + 1], a, b, boost::math::tools::eps_tolerance<double>(52), iters);
            root = 0.5 * (r.first + r.second);
        } catch (const std::exception&) {
            continue;
        }
        StationaryPoint sp;
        sp.theta = VectorXd::Constant(1, s * std::tan(root));
        Probe p = probe(model, sp.theta);
        if (!p.ok) continue;
        sp.objective = p.obj;
        sp.kind = a < 0.0 ? PointKind::Min : PointKind::Max;
        pts.push_back(sp);
    }
    int best = -1;
    for (int i = 0; i < static_cast<int>(pts.size()); ++i)
        if (pts[i].kind == PointKind::Min && (best < 0 || pts[i].objective < pts[best].objective)) best = i;
    // A lower objective at the grid edges signals a minimum at infinity.
    int edge = -1;
    double edge_val = kInf;
    for (int j : {0, n - 1}) {
        if (ok[j] && obj[j] < edge_val) {
            edge_val = obj[j];
            edge = j;
        }
    }
    const bool toward_edge = edge >= 0 && ((edge == 0 && sc[0] > 0.0) || (edge == n - 1 && sc[n - 1] < 0.0));
    if (best < 0 || (toward_edge && edge_val < pts[best].objective)) {
        if (best < 0 && !toward_edge) {
            int g = static_cast<int>(std::min_element(obj.begin(), obj.end()) - obj.begin());
            out.cue = VectorXd::Constant(1, s * std::tan(psi[g]));
            out.objective_at_cue = obj[g];
        } else {
            out.cue = signed_infinity(edge == 0 ? -1.0 : 1.0, 1);
            out.objective_at_cue = edge_val;
        }
        out.other_points = pts;
    } else {
        out.cue = pts[best].theta;
        out.objective_at_cue = pts[best].objective;
        for (int i = 0; i < static_cast<int>(pts.size()); ++i)
            if (i != best) out.other_points.push_back(pts[i]);
    }
    return out;
}

StationaryPointSet cue_2d(const MomentModel& model, const SolverConfig& cfg, double s) {
    const int n = cfg.grid2;
    MatrixXd obj = MatrixXd::Constant(n, n, kInf);
    std::vector<double> th(n);
    for (int j = 0; j < n; ++j) th[j] = s * std::tan(-kPi / 2 + kPi * (j + 0.5) / n);
    bool any = false;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            VectorXd t(2);
            t << th[i], th[j];
            Probe p = probe(model, t);
            if (p.ok) {
                obj(i, j) = p.obj;
                any = true;
            }
        }
    if (!any) throw NumericalError("CUE search: the objective is singular at every grid point");
    std::vector<std::pair<double, std::pair<int, int>>> mins;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double v = obj(i, j);
            if (!std::isfinite(v)) continue;
            bool loc = true;
            for (int di = -1; di <= 1 && loc; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    const int a = i + di, b = j + dj;
                    if ((di || dj) && a >= 0 && a < n && b >= 0 && b < n && obj(a, b) < v) {
                        loc = false;
                        break;
                    }
                }
            if (loc) mins.push_back({v, {i, j}});
        }
    std::sort(mins.begin(), mins.end());
    if (static_cast<int>(mins.size()) > cfg.starts) mins.resize(cfg.starts);
    StationaryPointSet out;
    out.scale = s;
    std::vector<StationaryPoint> pts;
    for (auto& mn : mins) {
        VectorXd t(2);
        t << th[mn.second.first], th[mn.second.second];
        double f;
        t = bfgs(model, t, cfg.tol, f);
        if (!std::isfinite(f)) continue;
        bool dup = false;
        for (auto& q : pts)
            if ((q.theta - t).cwiseAbs().maxCoeff() < 1e-6 * (1.0 + t.cwiseAbs().maxCoeff())) dup = true;
        if (!dup) pts.push_back({t, f, PointKind::Min});
    }
    if (pts.empty()) throw ConvergenceError("CUE search: no local minimum converged");
    std::sort(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.objective < b.objective; });
    out.cue = pts[0].theta;
    out.objective_at_cue = pts[0].objective;
    out.other_points.assign(pts.begin() + 1, pts.end());
    return out;
}

StationaryPointSet cue_multistart(const MomentModel& model, const SolverConfig& cfg, double s) {
    const int m = model.m();
    std::vector<VectorXd> starts{VectorXd::Zero(m)};
    for (int i = 1; i < cfg.starts; ++i) {
        RepRng rng(0xC0E, 0x57A, i);
        starts.push_back(s * rng.normal_vector(m));
    }
    std::vector<StationaryPoint> pts;
    for (auto& st : starts) {
        double f;
        VectorXd t = bfgs(model, st, cfg.tol, f);
        if (std::isfinite(f)) pts.push_back({t, f, PointKind::Min});
    }
    if (pts.empty()) throw ConvergenceError("CUE search: no start converged");
    std::sort(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.objective < b.objective; });
    StationaryPointSet out;
    out.scale = s;
    out.exhaustive = false;
    out.cue = pts[0].theta;
    out.objective_at_cue = pts[0].objective;
    out.other_points.assign(pts.begin() + 1, pts.end());
    return out;
}

}  // namespace

double default_scale(const MomentModel& model) {
    try {
        SampleMoments sm = evaluate_sample_moments(model, VectorXd::Zero(model.m()));
        VectorXd step = -(sm.q_T.transpose() * sm.q_T).ldlt().solve(sm.q_T.transpose() * sm.f_T);
        if (!step.allFinite()) return 10.0;
        std::vector<double> a(step.data(), step.data() + step.size());
        for (auto& x : a) x = std::abs(x);
        std::nth_element(a.begin(), a.begin() + a.size() / 2, a.end());
        return std::clamp(10.0 * a[a.size() / 2], 1.0, 1e4);
    } catch (const Error&) {
        return 10.0;
    }
}

StationaryPointSet cue_estimate(const MomentModel& model, const SolverConfig& config) {
    const double s = config.scale > 0.0 ? config.scale : default_scale(model);
    if (model.m() == 1) return cue_1d(model, config, s);
    if (model.m() == 2) return cue_2d(model, config, s);
    return cue_multistart(model, config, s);
}

TestResult j_statistic(const MomentModel& model, const SolverConfig& config, double alpha) {
    StationaryPointSet sp = cue_estimate(model, config);
    TestResult r;
    r.name = "J";
    r.df = model.k_f() - model.m();
    r.value = std::max(model.T() * sp.objective_at_cue, 0.0);
    r.critical_value = chi2_quantile(r.df, 1.0 - alpha);
    r.reject = r.value > r.critical_value;
    r.p_bound = chi2_upper_tail(r.df, r.value);
    return r;
}

// ---------------------------------------------------------------- characteristic polynomial

namespace {

CharPolySolution solve_char(const MatrixXd& A, const MatrixXd& B) {
    SymSpectrum sp = gen_sym_eig(A, B);
    const int m = static_cast<int>(A.rows()) - 1;
    CharPolySolution out;
    out.roots = sp.values;
    for (Eigen::Index i = 0; i < out.roots.size(); ++i)
        if (out.roots(i) < 0.0 && out.roots(i) > -1e-10 * (1.0 + std::abs(sp.values.maxCoeff())))
            out.roots(i) = 0.0;
    for (int i = 0; i <= m; ++i) {
        VectorXd v = sp.vectors.col(i);
        const double v1 = v(0);
        if (std::abs(v1) < 1e-10 * v.norm()) {
            VectorXd t(m);
            for (int j = 0; j < m; ++j) {
                const double d = -v(j + 1) * (v1 == 0.0 ? 1.0 : v1);
                t(j) = d == 0.0 ? 0.0 : (d > 0.0 ? kInf : -kInf);
            }
            out.argmins.push_back(t);
        } else {
            out.argmins.push_back(-v.tail(m) / v1);
        }
    }
    out.min_objective = out.roots(0);
    return out;
}

}  // namespace

CharPolySolution char_poly(const VectorXd& mu_R, const MatrixXd& beta, const MatrixXd& Omega,
                           const MatrixXd& Q_FF) {
    const Eigen::Index N = mu_R.size(), m = beta.cols();
    if (beta.rows() != N || Omega.rows() != N || Omega.cols() != N || Q_FF.rows() != m ||
        Q_FF.cols() != m)
        throw InputError("char_poly: dimension mismatch");
    MatrixXd Oi, Qi;
    try {
        Oi = sym_inverse(Omega);
        Qi = sym_inverse(Q_FF);
    } catch (const NumericalError&) {
        throw InputError("char_poly: Omega and Q_FF must be positive definite");
    }
    MatrixXd H(N, m + 1);
    H.col(0) = mu_R;
    H.rightCols(m) = beta;
    MatrixXd B = MatrixXd::Zero(m + 1, m + 1);
    B(0, 0) = 1.0;
    B.bottomRightCorner(m, m) = Qi;
    return solve_char(symmetrize(H.transpose() * Oi * H), B);
}

CharPolySolution char_poly(const KronGram& g) { return solve_char(g.M, g.S); }

FactorPseudoTrue factor_pseudo_true(const VectorXd& mu_R, const MatrixXd& beta, const MatrixXd& Omega,
                                    const MatrixXd& Q_FF) {
    CharPolySolution cp = char_poly(mu_R, beta, Omega, Q_FF);
    FactorPseudoTrue out;
    out.lambda_star = cp.argmins[0];
    out.min_obj = cp.min_objective;
    MatrixXd Qh = sym_sqrt(Q_FF);
    out.is_measure = std::max(sym_eig(Qh * beta.transpose() * sym_inverse(Omega) * beta * Qh).values(0), 0.0);
    out.structural_ok = out.is_measure > out.min_obj;
    return out;
}

// ---------------------------------------------------------------- DRLM derivative

double drlm_derivative(const MomentEvaluation& e) {
    if (e.m() != 1) throw UnsupportedError("the DRLM derivative is implemented for m = 1");
    // Linear moments: f' = q, V_ff' = C + C', C' = V_thth, V_thth' = 0 with C = V_theta_f.
    const MatrixXd& Vi = e.V_ff_inv;
    const MatrixXd& C = e.V_theta_f[0];
    const MatrixXd& G = e.V_theta_theta;
    const MatrixXd& Vttf = e.V_theta_theta_f;
    const VectorXd q = e.q_T.col(0);
    const VectorXd d = e.D_hat.col(0);
    const VectorXd g = Vi * e.f_T;
    const MatrixXd Cs = C + C.transpose();
    const MatrixXd dVi = -Vi * Cs * Vi;
    const VectorXd dg = dVi * e.f_T + Vi * q;
    const VectorXd dd = -G * g - C * dg;
    const MatrixXd dVttf = -G * Vi * C.transpose() - C * dVi * C.transpose() - C * Vi * G;
    const double a = g.dot(d);
    const double w = g.dot(Vttf * g) + d.dot(Vi * d);
    const double da = dg.dot(d) + g.dot(dd);
    const double dw = 2.0 * dg.dot(Vttf * g) + g.dot(dVttf * g) + 2.0 * dd.dot(Vi * d) + d.dot(dVi * d);
    return e.T * (2.0 * a * da / w - a * a * dw / (w * w));
}

double drlm_derivative(const KronGram& g, double theta) {
    if (g.m() != 1) throw UnsupportedError("the DRLM derivative is implemented for m = 1");
    KronPoint p = kron_point(g, VectorXd::Constant(1, theta));
    const MatrixXd& S = g.S;
    const double vff = S(0, 0) - 2.0 * theta * S(0, 1) + theta * theta * S(1, 1);
    const double vtf = theta * S(1, 1) - S(1, 0);
    const double vttf = S(1, 1) - vtf * vtf / vff;
    // (V_ff^{-1/2} f)'(V_thth.f^{-1/2} D) = score * sqrt(vff / vttf) / T
    const double x = p.score(0) * std::sqrt(vff / vttf) / g.T;
    const double y = (p.ar + p.rank) / g.T;
    return 2.0 * (x / y) * (p.rank - p.ar) * std::sqrt(vttf / vff);
}

// ---------------------------------------------------------------- constant sum and maximizers

double constant_sum(const MomentModel& model, const SolverConfig& config) {
    const double s = config.scale > 0.0 ? config.scale : default_scale(model);
    const int m = model.m();
    std::vector<double> vals;
    for (int j = 0; j < 10; ++j) {
        VectorXd t(m);
        for (int i = 0; i < m; ++i) t(i) = s * std::tan(-1.2 + 2.4 * ((j + 3 * i) % 10) / 9.0);
        MomentEvaluation e = evaluate(model, t);
        vals.push_back(scaled_cue_objective(e) + rank_quadratic_form(e));
    }
    const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
    if (*hi - *lo > 1e-8 * std::abs(*hi))
        throw NumericalError("constant-sum structure violated: spread " + std::to_string(*hi - *lo) +
                             " around " + std::to_string(*hi));
    return vals[0];
}

std::vector<double> drlm_maximizers(const KronGram& g, double d) {
    if (g.m() != 1) throw UnsupportedError("DRLM maximizers are implemented for m = 1");
    MatrixXd P = g.T * g.M - 0.5 * d * g.S;
    const double a = P(1, 1), b = -2.0 * P(0, 1), c = P(0, 0);
    std::vector<double> out;
    const double scale = P.cwiseAbs().maxCoeff();
    if (std::abs(a) <= 1e-14 * scale) {
        if (std::abs(b) > 1e-14 * scale) out.push_back(-c / b);
        return out;
    }
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return out;
    const double sq = std::sqrt(disc);
    const double qv = -0.5 * (b + (b >= 0.0 ? sq : -sq));
    const double r1 = qv / a;
    out.push_back(r1);
    if (qv != 0.0) out.push_back(c / qv);
    else out.push_back(-r1);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<double> drlm_maximizers(const MomentModel& model, double d) {
    if (model.kronecker() == nullptr)
        throw UnsupportedError("DRLM maximizers require the iid Kronecker structure");
    return drlm_maximizers(kron_gram(*model.kronecker()), d);
}

// ---------------------------------------------------------------- power enhancement

TestResult enhanced_scan(const VectorXd& theta1, const VectorXd& cue, double scale,
                         const std::vector<VectorXd>& extra, const SegmentFn& fn, int points) {
    const int m = static_cast<int>(theta1.size());
    struct Best {
        SegmentValue v;
        double t = -1.0;
        bool set = false;
        double margin() const { return v.drlm - v.cv; }
    } best;
    auto consider = [&](const SegmentValue& v, double t) {
        if (!v.ok) return;
        if (!best.set || v.drlm - v.cv > best.margin()) {
            best.v = v;
            best.t = t;
            best.set = true;
        }
    };
    auto finish = [&]() {
        TestResult r;
        r.name = "DRLM-enhanced";
        r.df = m;
        if (!best.set) throw NumericalError("power enhancement: no evaluable point on the segment");
        r.value = best.v.drlm;
        r.critical_value = best.v.cv;
        r.reject = r.value > r.critical_value;
        r.p_bound = chi2_upper_tail(m, r.value);
        r.conditioning_value = best.v.r;
        return r;
    };
    consider(fn(theta1), 0.0);
    if (best.set && best.margin() > 0.0) return finish();

    const bool infinite = !cue.allFinite();
    if (infinite && m != 1) throw UnsupportedError("infinite CUE on a multi-parameter segment");
    const double psi1 = infinite ? std::atan(theta1(0) / scale) : 0.0;
    const double psi_end = infinite ? (cue(0) > 0.0 ? kPi / 2 : -kPi / 2) : 0.0;
    auto at = [&](double t) -> VectorXd {
        if (infinite) return VectorXd::Constant(1, scale * std::tan(psi1 + t * (psi_end - psi1)));
        return theta1 + t * (cue - theta1);
    };
    const int n = std::max(points, 2);
    std::vector<double> ts(n);
    for (int j = 0; j < n; ++j) ts[j] = infinite ? static_cast<double>(j) / n : static_cast<double>(j) / (n - 1);
    std::vector<double> dv(n, -kInf);
    int jbest = 0;
    for (int j = 1; j < n; ++j) {
        SegmentValue v = fn(at(ts[j]));
        if (v.ok) dv[j] = v.drlm;
        if (v.ok && dv[j] > dv[jbest]) jbest = j;
        consider(v, ts[j]);
    }
    for (const VectorXd& x : extra) {
        if (m != 1 || !x.allFinite()) continue;
        double t;
        if (infinite) {
            const double px = std::atan(x(0) / scale);
            t = (px - psi1) / (psi_end - psi1);
        } else {
            const double len = cue(0) - theta1(0);
            if (len == 0.0) continue;
            t = (x(0) - theta1(0)) / len;
        }
        if (t >= 0.0 && t <= 1.0) consider(fn(x), t);
    }
    if (best.margin() <= 0.0 && jbest > 0) {
        const double a = ts[std::max(jbest - 1, 0)];
        const double b = ts[std::min(jbest + 1, n - 1)];
        auto r = boost::math::tools::brent_find_minima(
            [&](double t) {
                SegmentValue v = fn(at(t));
                return v.ok ? -v.drlm : kInf;
            },
            a, b, 30);
        consider(fn(at(r.first)), r.first);
    }
    return finish();
}

TestResult power_enhanced_test(const MomentModel& model, const VectorXd& theta1,
                               const CriticalValuePolicy& policy, const StationaryPointSet* cue,
                               const SolverConfig& config) {
    StationaryPointSet local;
    if (cue == nullptr) {
        local = cue_estimate(model, config);
        cue = &local;
    }
    const int m = model.m();
    SegmentFn fn = [&](const VectorXd& t) {
        SegmentValue v;
        try {
            MomentEvaluation e = evaluate(model, t);
            TestResult r = drlm(e, policy);
            v.drlm = r.value;
            v.cv = r.critical_value;
            v.r = r.conditioning_value.value_or(0.0);
        } catch (const NumericalError&) {
            v.ok = false;
        }
        return v;
    };
    std::vector<VectorXd> extra;
    if (m == 1 && model.kronecker() != nullptr) {
        KronGram g = kron_gram(*model.kronecker());
        KronPoint p = kron_point(g, theta1);
        for (double x : drlm_maximizers(g, p.ar + p.rank)) extra.push_back(VectorXd::Constant(1, x));
        SegmentFn fast = [&, g](const VectorXd& t) {
            SegmentValue v;
            KronPoint k = kron_point(g, t);
            v.drlm = k.drlm;
            v.r = policy.kind == CvKind::ConditionalCalibrated ? std::max(k.ar, k.rank) : 0.0;
            v.cv = policy_cv(policy, 1, v.r);
            v.ok = std::isfinite(k.drlm);
            return v;
        };
        return enhanced_scan(theta1, cue->cue, cue->scale, extra, fast);
    }
    return enhanced_scan(theta1, cue->cue, cue->scale, extra, fn);
}

}  // namespace drgmm
