#include "drgmm/moments.hpp"

#include <cmath>
#include <string>

#include "drgmm/errors.hpp"

namespace drgmm {

MatrixXd MomentEvaluation::V_theta_f_stacked() const {
    const int k = k_f();
    MatrixXd out(k * m(), k);
    for (int i = 0; i < m(); ++i) out.middleRows(i * k, k) = V_theta_f[i];
    return out;
}

double singular_tolerance(const MatrixXd& v) {
    return 1e-12 * v.trace() / static_cast<double>(v.rows());
}

namespace {

// Inverts V_ff under the singularity rule; applies the opt-in ridge.
MatrixXd checked_vff_inverse(MatrixXd& vff, bool ridge, bool& applied) {
    applied = false;
    const double k = static_cast<double>(vff.rows());
    SymSpectrum s = sym_eig(vff);
    const double tr = vff.trace();
    const bool bad = !(tr > 0.0) || !std::isfinite(tr) || s.values(0) < 1e-12 * tr / k;
    if (bad) {
        if (!ridge || !(tr > 0.0) || !std::isfinite(tr)) {
            throw SingularCovarianceError("singular V_ff: smallest eigenvalue " +
                                          std::to_string(s.values(0)) + ", trace " +
                                          std::to_string(tr));
        }
        vff.diagonal().array() += 1e-10 * tr / k;
        applied = true;
        s = sym_eig(vff);
    }
    return s.vectors * s.values.cwiseInverse().asDiagonal() * s.vectors.transpose();
}

void check_theta(const MomentModel& model, const VectorXd& theta) {
    if (theta.size() != model.m())
        throw InputError("theta has dimension " + std::to_string(theta.size()) + ", model expects " +
                         std::to_string(model.m()));
    if (!theta.allFinite()) throw InputError("theta must be finite");
}

struct Stacked {
    MatrixXd F;   // k x T
    MatrixXd Qv;  // km x T, column t holds vec(q_t)
};

Stacked stack_observations(const MomentModel& model, const VectorXd& theta) {
    check_theta(model, theta);
    const int k = model.k_f(), m = model.m(), T = model.T();
    if (T < 2) throw InputError("at least two observations are required");
    Stacked s{MatrixXd(k, T), MatrixXd(k * m, T)};
    for (int t = 0; t < T; ++t) {
        VectorXd f = model.eval_f(theta, t);
        MatrixXd q = model.eval_q(theta, t);
        if (!f.allFinite() || !q.allFinite())
            throw NumericalError("non-finite moment value at observation " + std::to_string(t));
        s.F.col(t) = f;
        s.Qv.col(t) = Eigen::Map<const VectorXd>(q.data(), k * m);
    }
    return s;
}

}  // namespace

SampleMoments evaluate_sample_moments(const MomentModel& model, const VectorXd& theta) {
    Stacked s = stack_observations(model, theta);
    const int k = model.k_f(), m = model.m();
    VectorXd qbar = s.Qv.rowwise().mean();
    return {s.F.rowwise().mean(), Eigen::Map<MatrixXd>(qbar.data(), k, m)};
}

namespace {

CovarianceBlocks covariance_from_stack(const Stacked& s, int k, int m) {
    const double T = static_cast<double>(s.F.cols());
    MatrixXd Fc = s.F.colwise() - s.F.rowwise().mean();
    MatrixXd Qc = s.Qv.colwise() - s.Qv.rowwise().mean();
    CovarianceBlocks c;
    c.V_ff = symmetrize(Fc * Fc.transpose() / T);
    MatrixXd vtf = Qc * Fc.transpose() / T;
    for (int i = 0; i < m; ++i) c.V_theta_f.push_back(vtf.middleRows(i * k, k));
    c.V_theta_theta = symmetrize(Qc * Qc.transpose() / T);
    return c;
}

}  // namespace

CovarianceBlocks eicker_white_covariance(const MomentModel& model, const VectorXd& theta,
                                         const EvalOptions& opts) {
    MomentEvaluation e = evaluate(model, theta, EvalOptions{opts.ridge, false});
    return {e.V_ff, e.V_theta_f, e.V_theta_theta, e.V_theta_theta_f};
}

MatrixXd recentered_jacobian(const MomentEvaluation& eval) {
    VectorXd g = eval.V_ff_inv * eval.f_T;
    MatrixXd d = eval.q_T;
    for (int i = 0; i < eval.m(); ++i) d.col(i) -= eval.V_theta_f[i] * g;
    return d;
}

namespace {

void finish(MomentEvaluation& e, const EvalOptions& opts) {
    e.V_ff_inv = checked_vff_inverse(e.V_ff, opts.ridge, e.ridge_applied);
    MatrixXd vtf = e.V_theta_f_stacked();
    e.V_theta_theta_f = symmetrize(e.V_theta_theta - vtf * e.V_ff_inv * vtf.transpose());
    e.D_hat = recentered_jacobian(e);
}

}  // namespace

MomentEvaluation evaluate(const MomentModel& model, const VectorXd& theta, const EvalOptions& opts) {
    if (opts.closed_form && model.kronecker() != nullptr) {
        check_theta(model, theta);
        return evaluate_kronecker(*model.kronecker(), theta, opts);
    }
    Stacked s = stack_observations(model, theta);
    const int k = model.k_f(), m = model.m();
    MomentEvaluation e;
    e.theta = theta;
    e.T = static_cast<double>(model.T());
    e.f_T = s.F.rowwise().mean();
    VectorXd qbar = s.Qv.rowwise().mean();
    e.q_T = Eigen::Map<MatrixXd>(qbar.data(), k, m);
    CovarianceBlocks c = covariance_from_stack(s, k, m);
    e.V_ff = std::move(c.V_ff);
    e.V_theta_f = std::move(c.V_theta_f);
    e.V_theta_theta = std::move(c.V_theta_theta);
    finish(e, opts);
    return e;
}

MomentEvaluation evaluate_kronecker(const KroneckerForm& kf, const VectorXd& theta,
                                    const EvalOptions& opts) {
    const int m = kf.m();
    VectorXd b(m + 1);
    b(0) = 1.0;
    b.tail(m) = -theta;
    MomentEvaluation e;
    e.theta = theta;
    e.T = kf.T;
    e.f_T = kf.H * b;
    e.q_T = -kf.H.rightCols(m);
    const double vff = b.dot(kf.S * b);
    e.V_ff = vff * kf.Vbase;
    VectorXd vtf = -(kf.S.bottomRows(m) * b);
    for (int i = 0; i < m; ++i) e.V_theta_f.push_back(vtf(i) * kf.Vbase);
    e.V_theta_theta = kron(kf.S.bottomRightCorner(m, m), kf.Vbase);
    finish(e, opts);
    return e;
}

double cue_objective(const MomentEvaluation& eval) {
    return eval.f_T.dot(eval.V_ff_inv * eval.f_T);
}

double scaled_cue_objective(const MomentEvaluation& eval) { return eval.T * cue_objective(eval); }

}  // namespace drgmm
