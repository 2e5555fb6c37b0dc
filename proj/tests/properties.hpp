#pragma once

#include <algorithm>
#include <cmath>
#include <drgmm/limitdist.hpp>
#include <drgmm/linalg.hpp>
#include <drgmm/models.hpp>
#include <drgmm/solver.hpp>
#include <drgmm/stats.hpp>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "helpers.hpp"

// Algebraic invariants swept over seeded random instances. Each check returns
// the worst violation found; shared by the unit suite and the acceptance runner.
namespace properties {

using namespace drgmm;
using namespace testing_util;

struct Outcome {
    std::string name;
    double worst = 0.0;
    double tol = 0.0;
    int instances = 0;
    bool pass() const { return instances > 0 && worst <= tol; }
};

struct Pop {
    VectorXd mu;
    MatrixXd beta, Omega, Q;
};

inline Pop random_pop(int N, int m, std::uint64_t seed, double misspec) {
    RepRng rng(seed, 41, 0);
    Pop p;
    p.beta = rng.normal_matrix(N, m);
    p.mu = p.beta * rng.normal_vector(m) + misspec * rng.normal_vector(N);
    MatrixXd a = rng.normal_matrix(N, N);
    p.Omega = a * a.transpose() / N + 0.5 * MatrixXd::Identity(N, N);
    MatrixXd b = rng.normal_matrix(m, m);
    p.Q = b * b.transpose() / m + 0.5 * MatrixXd::Identity(m, m);
    return p;
}

inline double pop_objective(const Pop& p, double lam) {
    VectorXd r = p.mu - p.beta.col(0) * lam;
    return r.dot(p.Omega.ldlt().solve(r)) / (1.0 + lam * lam / p.Q(0, 0));
}

// Dense atan grid followed by golden-section refinement around the best cell.
inline double line_min(const std::function<double(double)>& f, double s, int n) {
    const double pi = std::numbers::pi;
    auto at = [&](double psi) { return f(s * std::tan(psi)); };
    int best = 0;
    double vbest = at(-pi / 2 + pi * 0.5 / n);
    for (int j = 1; j < n; ++j) {
        const double v = at(-pi / 2 + pi * (j + 0.5) / n);
        if (v < vbest) {
            vbest = v;
            best = j;
        }
    }
    double lo = -pi / 2 + pi * std::max(best - 0.5, 0.0) / n;
    double hi = -pi / 2 + pi * std::min(best + 1.5, static_cast<double>(n)) / n;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 120; ++it) {
        const double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
        if (at(a) < at(b)) hi = b;
        else lo = a;
    }
    return std::min(vbest, at(0.5 * (lo + hi)));
}

inline FactorModel factor_instance(std::uint64_t seed, int m = 1) {
    const int N = 4 + static_cast<int>(seed % 6);
    const double misspec = 0.1 * static_cast<double>(seed % 5);
    const double beta = 0.2 + 0.3 * static_cast<double>(seed % 4);
    return FactorModel(random_factor_data(150 + 10 * static_cast<int>(seed % 7), N, m, 7000 + seed, misspec, beta));
}

inline Outcome drlm_below_klm(int n = 300) {
    Outcome o{"DRLM <= KLM pointwise", 0.0, 1e-10, 0};
    for (int i = 0; i < n; ++i) {
        const int m = 1 + i % 3;
        auto model = random_linear_model(60 + i % 40, m + 1 + i % 4, m, 9000 + i);
        RepRng rng(i, 42, 0);
        MomentEvaluation e = evaluate(model, 2.0 * rng.normal_vector(m));
        const double d = drlm(e).value, k = klm(e).value;
        o.worst = std::max(o.worst, (d - k) / std::max(1.0, k));
        ++o.instances;
    }
    return o;
}

inline Outcome drlm_zero_at_stationary(int n = 40) {
    Outcome o{"DRLM = 0 at stationary points", 0.0, 1e-8, 0};
    for (int i = 0; i < n; ++i) {
        FactorModel model = factor_instance(100 + i);
        StationaryPointSet sp = cue_estimate(model);
        std::vector<VectorXd> pts;
        if (sp.cue.allFinite()) pts.push_back(sp.cue);
        for (const StationaryPoint& s : sp.other_points)
            if (s.theta.allFinite()) pts.push_back(s.theta);
        for (const VectorXd& th : pts) {
            MomentEvaluation e = evaluate(model, th);
            const double scale = std::max(1.0, gmm_ar(e).value);
            o.worst = std::max(o.worst, drlm(e).value / scale);
            ++o.instances;
        }
    }
    return o;
}

inline Outcome constant_sum_spread(int n = 40) {
    Outcome o{"AR + rank constant in theta (relative spread)", 0.0, 1e-8, 0};
    for (int i = 0; i < n; ++i) {
        std::vector<double> v;
        auto sweep = [&](const MomentModel& model, int m) {
            RepRng rng(i, 43, m);
            for (int j = 0; j < 6; ++j) {
                MomentEvaluation e = evaluate(model, 3.0 * rng.normal_vector(m));
                v.push_back(scaled_cue_objective(e) + rank_quadratic_form(e));
            }
        };
        if (i % 2 == 0) {
            sweep(factor_instance(200 + i), 1);
        } else {
            sweep(random_linear_model(70, 5, 1 + i % 3, 9500 + i), 1 + i % 3);
        }
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        o.worst = std::max(o.worst, (*hi - *lo) / std::max(1.0, std::abs(*hi)));
        ++o.instances;
    }
    return o;
}

inline Outcome derivative_vs_fd(int n = 40) {
    Outcome o{"DRLM derivative vs central differences (relative)", 0.0, 1e-3, 0};
    const double h = 1e-5;
    for (int i = 0; i < n; ++i) {
        FactorModel model = factor_instance(300 + i);
        KronGram g = kron_gram(*model.kronecker());
        RepRng rng(i, 44, 0);
        for (int j = 0; j < 4; ++j) {
            const double th = 2.0 * rng.normal();
            auto val = [&](double x) { return drlm(evaluate(model, VectorXd::Constant(1, x))).value; };
            const double fd = (val(th + h) - val(th - h)) / (2.0 * h);
            const double sc = std::max(std::abs(fd), 1e-3);
            const double a = drlm_derivative(evaluate(model, VectorXd::Constant(1, th)));
            const double b = drlm_derivative(g, th);
            o.worst = std::max({o.worst, std::abs(a - fd) / sc, std::abs(b - fd) / sc});
            ++o.instances;
        }
    }
    return o;
}

inline Outcome charpoly_root_is_grid_min(int n = 40) {
    Outcome o{"smallest characteristic root = grid minimum of the objective", 0.0, 1e-6, 0};
    for (int i = 0; i < n; ++i) {
        Pop p = random_pop(4 + i % 8, 1, 400 + i, 0.1 * (i % 6));
        CharPolySolution cp = char_poly(p.mu, p.beta, p.Omega, p.Q);
        const double v = line_min([&](double l) { return pop_objective(p, l); }, std::sqrt(p.Q(0, 0)), 20001);
        o.worst = std::max(o.worst, std::abs(cp.roots(0) - v) / std::max(1.0, v));
        ++o.instances;
    }
    return o;
}

inline Outcome identification_dominates(int n = 100) {
    Outcome o{"identification strength >= minimal objective", 0.0, 1e-10, 0};
    for (int i = 0; i < n; ++i) {
        const int m = 1 + i % 2;
        Pop p = random_pop(3 + i % 7, m, 500 + i, 0.15 * (i % 7));
        FactorPseudoTrue pt = factor_pseudo_true(p.mu, p.beta, p.Omega, p.Q);
        o.worst = std::max(o.worst, (pt.min_obj - pt.is_measure) / std::max(1.0, pt.is_measure));
        ++o.instances;
    }
    return o;
}

inline Outcome structural_svd(int n = 40) {
    Outcome o{"structural SVD reconstruction and orthogonality", 0.0, 1e-8, 0};
    for (int i = 0; i < n; ++i) {
        const int m = 1 + i % 2, N = m + 2 + i % 6;
        Pop p = random_pop(N, m, 600 + i, 0.2 + 0.1 * (i % 5));
        const double T = 100.0 + 50.0 * (i % 4);
        StructuralDecomposition s = svd_structural(p.mu, p.beta, p.Omega, p.Q, T);
        if (s.degenerate) continue;
        MatrixXd lhs = structural_target(p.mu, p.beta, p.Omega, p.Q, T);
        MatrixXd rhs = structural_reconstruction(s, p.Omega, p.Q);
        const double rec = max_abs(lhs - rhs) / (1.0 + max_abs(lhs));
        const double orth = max_abs(s.D_perp.transpose() * s.D_star) / (1.0 + max_abs(s.D_star));
        const double norm =
            max_abs(s.D_perp.transpose() * p.Omega * s.D_perp - MatrixXd::Identity(N - m, N - m));
        o.worst = std::max({o.worst, rec, orth, norm});
        ++o.instances;
    }
    return o;
}

inline Outcome maximizers_half_sum(int n = 40) {
    Outcome o{"DRLM maximizers satisfy AR = d / 2 (relative)", 0.0, 1e-8, 0};
    for (int i = 0; i < n; ++i) {
        FactorModel model = factor_instance(800 + i);
        KronGram g = kron_gram(*model.kronecker());
        const double d = constant_sum(model);
        for (double x : drlm_maximizers(g, d)) {
            const double ar = kron_point(g, VectorXd::Constant(1, x)).ar;
            o.worst = std::max(o.worst, std::abs(ar - d / 2.0) / std::max(1.0, d));
            ++o.instances;
        }
    }
    return o;
}

inline std::vector<Outcome> all() {
    return {drlm_below_klm(),        drlm_zero_at_stationary(),  constant_sum_spread(),
            derivative_vs_fd(),      charpoly_root_is_grid_min(), identification_dominates(),
            structural_svd(),        maximizers_half_sum()};
}

}  // namespace properties
