#include "drgmm/limitdist.hpp"

#include <cmath>
#include <limits>

#include "drgmm/errors.hpp"
#include "drgmm/solver.hpp"

namespace drgmm {

namespace {
constexpr std::uint64_t kLimitStream = 0x11D;
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

LimitExperimentParams limit_params(int N, double mu2, double D2, double lambda_star) {
    if (N < 2) throw InputError("limit experiment needs N >= 2");
    if (mu2 < 0.0 || D2 < 0.0) throw InputError("squared lengths must be non-negative");
    LimitExperimentParams p;
    p.N = N;
    p.m = 1;
    p.mu_bar = VectorXd::Zero(N);
    p.mu_bar(0) = std::sqrt(mu2);
    p.D_bar = MatrixXd::Zero(N, 1);
    p.D_bar(1, 0) = std::sqrt(D2);
    p.lambda_star = VectorXd::Constant(1, lambda_star);
    p.Q_FF = MatrixXd::Identity(1, 1);
    return p;
}

void validate(const LimitExperimentParams& p) {
    if (p.m < 1 || p.N <= p.m) throw InputError("limit experiment needs N > m >= 1");
    if (p.mu_bar.size() != p.N || p.D_bar.rows() != p.N || p.D_bar.cols() != p.m)
        throw InputError("limit experiment: mu_bar / D_bar dimensions do not match N, m");
    if (p.lambda_star.size() != 0 && p.lambda_star.size() != p.m)
        throw InputError("limit experiment: lambda_star must have m entries");
    const VectorXd cross = p.D_bar.transpose() * p.mu_bar;
    const double scale = std::max(1.0, p.mu_bar.norm() * p.D_bar.norm());
    if (cross.cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw InputError("limit experiment requires mu_bar orthogonal to every column of D_bar");
}

DriftMeans theorem7_means(double ls, const VectorXd& mu_bar, const VectorXd& D_bar) {
    const double c = 1.0 / std::sqrt(1.0 + ls * ls);
    return {c * (mu_bar - ls * D_bar), c * (D_bar + ls * mu_bar)};
}

DriftMeans drift_means(const LimitExperimentParams& p) {
    const double ls = p.lambda_star.size() ? p.lambda_star(0) : 0.0;
    if (p.m == 1) return theorem7_means(ls, p.mu_bar, p.D_bar.col(0));
    if (p.lambda_star.size() && p.lambda_star.cwiseAbs().maxCoeff() != 0.0)
        throw UnsupportedError("drifting pseudo-true values are implemented for m = 1");
    return {p.mu_bar, Eigen::Map<const VectorXd>(p.D_bar.data(), p.D_bar.size())};
}

KronGram limit_gram(const VectorXd& f, const MatrixXd& D) {
    const int m = static_cast<int>(D.cols());
    MatrixXd H(f.size(), m + 1);
    H.col(0) = f;
    H.rightCols(m) = -D;
    return {H.transpose() * H, MatrixXd::Identity(m + 1, m + 1), 1.0};
}

LimitStats limit_stats(const VectorXd& f, const MatrixXd& D) {
    KronGram g = limit_gram(f, D);
    const int m = g.m();
    KronPoint p = kron_point(g, VectorXd::Zero(m));
    LimitStats s;
    s.drlm = p.drlm;
    s.klm = p.klm;
    s.ar = p.ar;
    s.rank = p.rank;
    if (m == 1) {
        const double a = g.M(0, 0), b = g.M(0, 1), c = g.M(1, 1);
        const double h = 0.5 * (a + c), r = std::hypot(0.5 * (a - c), b);
        s.j = std::max(h - r, 0.0);
        s.lr = clr_statistic(p.ar, p.klm, p.rank);
    } else {
        s.j = std::max(sym_eig(g.M).values(0), 0.0);
        s.lr = std::max(p.ar - s.j, 0.0);
    }
    return s;
}

void limit_draw(const LimitExperimentParams& p, std::uint64_t seed, std::uint64_t rep, VectorXd& f,
                MatrixXd& D) {
    const DriftMeans mn = drift_means(p);
    RepRng rng(seed, kLimitStream, rep);
    f = mn.mean_f + rng.normal_vector(p.N);
    D = Eigen::Map<const MatrixXd>(mn.mean_D.data(), p.N, p.m) + rng.normal_matrix(p.N, p.m);
}

TestResult limit_enhanced(const KronGram& g, const CriticalValuePolicy& policy) {
    const int m = g.m();
    SegmentFn fn = [&](const VectorXd& t) {
        SegmentValue v;
        KronPoint p = kron_point(g, t);
        v.drlm = p.drlm;
        v.r = m == 1 ? std::max(p.ar, p.rank) : 0.0;
        v.cv = policy_cv(policy, m, v.r);
        v.ok = std::isfinite(p.drlm);
        return v;
    };
    CharPolySolution cp = char_poly(g);
    VectorXd zero = VectorXd::Zero(m);
    std::vector<VectorXd> extra;
    if (m == 1) {
        KronPoint p0 = kron_point(g, zero);
        for (double x : drlm_maximizers(g, p0.ar + p0.rank)) extra.push_back(VectorXd::Constant(1, x));
    }
    return enhanced_scan(zero, cp.argmins[0], 1.0, extra, fn);
}

LimitSample sample_limit_drlm(const LimitExperimentParams& p, long reps, std::uint64_t seed,
                              const CriticalValuePolicy& policy, bool keep_stream) {
    validate(p);
    if (reps < 1) throw InputError("reps must be positive");
    LimitSample out;
    out.reps = reps;
    VectorXd f;
    MatrixXd D;
    for (long r = 0; r < reps; ++r) {
        limit_draw(p, seed, static_cast<std::uint64_t>(r), f, D);
        LimitStats s = limit_stats(f, D);
        const double cv = policy_cv(policy, p.m, p.m == 1 ? std::max(s.ar, s.rank) : 0.0);
        out.rejections += s.drlm > cv;
        if (keep_stream) {
            out.drlm.push_back(s.drlm);
            out.klm.push_back(s.klm);
            out.ar.push_back(s.ar);
        }
    }
    out.frequency = static_cast<double>(out.rejections) / reps;
    out.se = std::sqrt(out.frequency * (1.0 - out.frequency) / reps);
    return out;
}

// ---------------------------------------------------------------- structural SVD

MatrixXd structural_target(const VectorXd& mu_R, const MatrixXd& beta, const MatrixXd& Omega,
                           const MatrixXd& Q_FF, double T_scale) {
    const Eigen::Index N = mu_R.size(), m = beta.cols();
    if (beta.rows() != N || Omega.rows() != N || Q_FF.rows() != m)
        throw InputError("svd_structural: dimension mismatch");
    if (N <= m) throw InputError("svd_structural: need N > m");
    MatrixXd H(N, m + 1);
    H.col(0) = mu_R;
    H.rightCols(m) = beta * sym_sqrt(Q_FF);
    return std::sqrt(T_scale) * sym_inv_sqrt(Omega) * H;
}

StructuralDecomposition svd_structural(const VectorXd& mu_R, const MatrixXd& beta, const MatrixXd& Omega,
                                       const MatrixXd& Q_FF, double T_scale) {
    const int N = static_cast<int>(mu_R.size()), m = static_cast<int>(beta.cols());
    MatrixXd A = structural_target(mu_R, beta, Omega, Q_FF, T_scale);
    Eigen::JacobiSVD<MatrixXd> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    MatrixXd U = svd.matrixU(), V = svd.matrixV();
    VectorXd sv = svd.singularValues();
    for (int j = 0; j < N; ++j) {
        int i = 0;
        while (i < N && std::abs(U(i, j)) < 1e-14) ++i;
        if (i < N && U(i, j) < 0.0) {
            U.col(j) *= -1.0;
            if (j <= m) V.col(j) *= -1.0;
        }
    }
    StructuralDecomposition out;
    out.singular_values = sv;
    out.degenerate = std::abs(sv(m - 1) - sv(m)) <= 1e-10 * std::max(1.0, sv(0));

    const MatrixXd U1 = U.leftCols(m), U2 = U.rightCols(N - m);
    const MatrixXd S1 = sv.head(m).asDiagonal();
    const MatrixXd V11 = V.block(0, 0, 1, m);      // 1 x m
    const double V12 = V(0, m);
    const MatrixXd V21 = V.block(1, 0, m, m);      // m x m
    const MatrixXd Qh = sym_sqrt(Q_FF), Qih = sym_inv_sqrt(Q_FF);
    const MatrixXd Oh = sym_sqrt(Omega), Oih = sym_inv_sqrt(Omega);

    out.D_star = -Oh * U1 * S1 * V21.transpose() * Qih;
    Eigen::FullPivLU<MatrixXd> lu(V21.transpose());
    if (std::abs(V12) > 1.0 - 1e-10 || !lu.isInvertible()) {
        out.lambda_star = VectorXd::Constant(m, kInf);
        const double sd = m == 1 && V21(0, 0) < 0.0 ? -1.0 : 1.0;
        for (int i = 0; i < m; ++i) out.lambda_star(i) = V11(0, i) * sd >= 0.0 ? kInf : -kInf;
    } else {
        out.lambda_star = Qh * lu.solve(V11.transpose());
    }

    const MatrixXd U22 = U.bottomRightCorner(N - m, N - m);
    const MatrixXd P = sym_inv_sqrt(symmetrize(U22 * U22.transpose()), 1e-14) * U22;
    VectorXd S2 = VectorXd::Zero(N - m);
    S2(0) = sv(m);
    const double sg = V12 >= 0.0 ? 1.0 : -1.0;
    out.delta = P * S2 * sg;
    out.D_perp = Oih * U2 * P.transpose();
    return out;
}

MatrixXd structural_reconstruction(const StructuralDecomposition& s, const MatrixXd& Omega,
                                   const MatrixXd& Q_FF) {
    const int m = static_cast<int>(s.D_star.cols());
    if (!s.lambda_star.allFinite()) throw NumericalError("reconstruction needs a finite lambda_star");
    const MatrixXd Qh = sym_sqrt(Q_FF), Qih = sym_inv_sqrt(Q_FF);
    MatrixXd L(m, m + 1);
    L.col(0) = s.lambda_star;
    L.rightCols(m) = MatrixXd::Identity(m, m);
    MatrixXd Dq = MatrixXd::Identity(m + 1, m + 1), Dqi = MatrixXd::Identity(m + 1, m + 1);
    Dq.bottomRightCorner(m, m) = Qh;
    Dqi.bottomRightCorner(m, m) = Qih;
    Eigen::RowVectorXd perp(m + 1);
    perp(0) = 1.0;
    perp.tail(m) = -s.lambda_star.transpose();
    perp /= std::sqrt(1.0 + s.lambda_star.dot(sym_inverse(Q_FF) * s.lambda_star));
    return -sym_inv_sqrt(Omega) * s.D_star * L * Dq + sym_sqrt(Omega) * s.D_perp * s.delta * perp * Dqi;
}

// ---------------------------------------------------------------- maximal invariant

MaximalInvariant maximal_invariant(const MomentEvaluation& e) {
    if (e.m() != 1) throw UnsupportedError("the maximal invariant is implemented for m = 1");
    MaximalInvariant s;
    s.S_perp_perp = scaled_cue_objective(e);
    s.S_l1_l1 = rank_quadratic_form(e);
    const VectorXd a = sym_inv_sqrt(e.V_ff) * e.f_T;
    const VectorXd b = sym_inv_sqrt(e.V_theta_theta_f, 1e-14) * e.D_hat.col(0);
    s.S_l1_perp = e.T * a.dot(b);
    return s;
}

MatrixXd noncentrality(double l1, double ls, const VectorXd& D_star, const VectorXd& delta, double Q,
                       const MatrixXd& Omega) {
    if (!(Q > 0.0)) throw InputError("Q_FF must be positive");
    const double dod = D_star.dot(Omega.ldlt().solve(D_star));
    const double dd = delta.squaredNorm();
    const double c1 = 1.0 / std::sqrt(1.0 + l1 * l1 / Q);
    const double c2 = 1.0 / std::sqrt(Q + l1 * l1);
    Eigen::Vector2d u((ls - l1) * c1, c2 * (Q + ls * l1));
    Eigen::Vector2d w(c1 * (1.0 + ls * l1 / Q), -c2 * (ls - l1));
    MatrixXd nc = u * u.transpose() * dod;
    if (dd > 0.0) nc += w * w.transpose() * dd / (1.0 + ls * ls / Q);
    return nc;
}

}  // namespace drgmm
