#pragma once

#include <optional>
#include <vector>

#include "drgmm/linalg.hpp"

namespace drgmm {

// Linear moments with an iid Kronecker covariance structure:
//   f_T(theta) = H b,  b = (1, -theta')',
//   V_ff = (b'Sb) Vbase,  V_theta_i f = -(S_{i+1,.} b) Vbase,  V_theta_theta = S_22 (x) Vbase.
struct KroneckerForm {
    MatrixXd H;      // k_f x (m+1)
    MatrixXd Vbase;  // k_f x k_f
    MatrixXd S;      // (m+1) x (m+1)
    double T = 1.0;

    int k_f() const { return static_cast<int>(H.rows()); }
    int m() const { return static_cast<int>(H.cols()) - 1; }
};

class MomentModel {
public:
    virtual ~MomentModel() = default;
    virtual int k_f() const = 0;
    virtual int m() const = 0;
    virtual int T() const = 0;
    virtual VectorXd eval_f(const VectorXd& theta, int t) const = 0;
    virtual MatrixXd eval_q(const VectorXd& theta, int t) const = 0;
    virtual bool is_linear() const { return false; }
    // Closed-form iid covariance structure, when the model has one.
    virtual const KroneckerForm* kronecker() const { return nullptr; }
};

struct EvalOptions {
    bool ridge = false;        // add 1e-10 * trace/k_f to V_ff instead of failing
    bool closed_form = true;   // use the Kronecker closed form when available
};

struct SampleMoments {
    VectorXd f_T;
    MatrixXd q_T;
};

struct CovarianceBlocks {
    MatrixXd V_ff;
    std::vector<MatrixXd> V_theta_f;  // m blocks, k_f x k_f
    MatrixXd V_theta_theta;           // km x km
    MatrixXd V_theta_theta_f;         // km x km
};

struct MomentEvaluation {
    VectorXd theta;
    VectorXd f_T;
    MatrixXd q_T;
    MatrixXd V_ff;
    MatrixXd V_ff_inv;
    std::vector<MatrixXd> V_theta_f;
    MatrixXd V_theta_theta;
    MatrixXd V_theta_theta_f;
    MatrixXd D_hat;
    double T = 0.0;
    bool ridge_applied = false;

    int k_f() const { return static_cast<int>(f_T.size()); }
    int m() const { return static_cast<int>(theta.size()); }
    MatrixXd V_theta_f_stacked() const;  // km x k_f
};

double singular_tolerance(const MatrixXd& v);

SampleMoments evaluate_sample_moments(const MomentModel& model, const VectorXd& theta);
CovarianceBlocks eicker_white_covariance(const MomentModel& model, const VectorXd& theta,
                                         const EvalOptions& opts = {});
MatrixXd recentered_jacobian(const MomentEvaluation& eval);

// Full evaluation bundle: moments, covariances, V_ff inverse and D_hat.
MomentEvaluation evaluate(const MomentModel& model, const VectorXd& theta,
                          const EvalOptions& opts = {});
MomentEvaluation evaluate_kronecker(const KroneckerForm& kf, const VectorXd& theta,
                                    const EvalOptions& opts = {});

// Unscaled f_T' V_ff^{-1} f_T and its T-scaled companion.
double cue_objective(const MomentEvaluation& eval);
double scaled_cue_objective(const MomentEvaluation& eval);

}  // namespace drgmm
