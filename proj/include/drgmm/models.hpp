#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "drgmm/moments.hpp"

namespace drgmm {

// ---- linear asset pricing ----

struct FactorData {
    MatrixXd R;                 // T x (N+1) raw returns, or T x N excess returns
    MatrixXd F;                 // T x m factors
    bool excess = false;        // R already holds excess returns
    int subtract_index = -1;    // asset subtracted from the others; -1 means the last one
};

class FactorModel : public MomentModel {
public:
    explicit FactorModel(const FactorData& data);

    int k_f() const override { return static_cast<int>(rbar_.size()); }
    int m() const override { return static_cast<int>(Q_.rows()); }
    int T() const override { return static_cast<int>(r_.rows()); }
    VectorXd eval_f(const VectorXd& lambda, int t) const override;
    MatrixXd eval_q(const VectorXd& lambda, int t) const override;
    bool is_linear() const override { return true; }
    const KroneckerForm* kronecker() const override { return &kf_; }

    const MatrixXd& excess_returns() const { return r_; }
    const MatrixXd& demeaned_factors() const { return Fc_; }
    const VectorXd& mean_returns() const { return rbar_; }
    const VectorXd& factor_means() const { return fbar_; }
    const MatrixXd& beta() const { return beta_; }
    const MatrixXd& Q() const { return Q_; }
    const MatrixXd& Omega() const { return Omega_; }
    const MatrixXd& residuals() const { return U_; }

private:
    MatrixXd r_, Fc_, beta_, Q_, Qinv_, Omega_, U_;
    VectorXd rbar_, fbar_;
    KroneckerForm kf_;
};

// ---- linear instrumental variables ----

struct IvData {
    VectorXd y;              // T
    MatrixXd X;              // T x m endogenous regressors
    MatrixXd Z;              // T x k instruments
    MatrixXd W;              // T x p included exogenous regressors (may be empty)
    bool add_constant = true;
    bool iid = true;         // closed-form Kronecker covariance; Eicker-White otherwise
};

class IvModel : public MomentModel {
public:
    explicit IvModel(const IvData& data);

    int k_f() const override { return static_cast<int>(Z_.cols()); }
    int m() const override { return static_cast<int>(X_.cols()); }
    int T() const override { return static_cast<int>(y_.size()); }
    VectorXd eval_f(const VectorXd& theta, int t) const override;
    MatrixXd eval_q(const VectorXd& theta, int t) const override;
    bool is_linear() const override { return true; }
    const KroneckerForm* kronecker() const override { return iid_ ? &kf_ : nullptr; }

    // Kronecker structure regardless of the iid flag.
    const KroneckerForm& kronecker_form() const { return kf_; }
    const MatrixXd& first_stage() const { return Pi_; }       // k x m
    const MatrixXd& reduced_form_cov() const { return Sw_; }  // (1+m) x (1+m), 1/T scaling
    const MatrixXd& Qzz() const { return Qzz_; }
    int exogenous_count() const { return p_; }
    // Conventional first-stage F (m = 1), residual dof T - k - p.
    double first_stage_F() const;

private:
    VectorXd y_;
    MatrixXd X_, Z_, Pi_, Sw_, Qzz_;
    int p_ = 0;
    bool iid_ = true;
    KroneckerForm kf_;
};

// ---- CRRA Euler equation ----

class CrraModel : public MomentModel {
public:
    CrraModel(const VectorXd& consumption, const MatrixXd& returns, double delta0);

    int k_f() const override { return static_cast<int>(gross_.cols()); }
    int m() const override { return 1; }
    int T() const override { return static_cast<int>(gross_.rows()); }
    VectorXd eval_f(const VectorXd& gamma, int t) const override;
    MatrixXd eval_q(const VectorXd& gamma, int t) const override;

    // |gamma| bound keeping |gamma * log growth| <= 600.
    double safe_gamma_bound() const { return safe_; }

private:
    void check_gamma(double g) const;
    VectorXd lg_;
    MatrixXd gross_;
    double delta0_;
    double safe_;
};

struct CrraDgpParams {
    double delta0 = 0.95;
    VectorXd mu2;            // optional override of the correct-specification log-return mean
    double V_cc = 0.0;
    VectorXd V_rc;           // N, baseline covariances of log growth with log returns
    MatrixXd V_rr;           // N x N
    double c = 0.0;          // misspecification shift
    double c_tilde = 1.0;    // scales V_rc
    double gamma0 = 15.0;

    int N() const { return static_cast<int>(V_rc.size()); }
};

// Shipped calibration (also in data/crra_default.cfg).
CrraDgpParams default_crra_params();
void validate(const CrraDgpParams& p);
VectorXd crra_effective_vrc(const CrraDgpParams& p);
MatrixXd crra_joint_cov(const CrraDgpParams& p);   // (1+N) x (1+N), order (dc, r)
VectorXd crra_log_return_mean(const CrraDgpParams& p);

struct CrraPopulation {
    VectorXd mu_f;
    MatrixXd V_ff;
};
CrraPopulation crra_population(const CrraDgpParams& p, double gamma);
VectorXd crra_population_dmu(const CrraDgpParams& p, double gamma);
double crra_population_objective(const CrraDgpParams& p, double gamma);

struct CrraPseudoTrue {
    double gamma_star = 0.0;
    double min_obj = 0.0;
    bool at_edge = false;
};
CrraPseudoTrue crra_pseudo_true(const CrraDgpParams& p, double lo = -50.0, double hi = 100.0,
                                int grid = 15001);

struct CrraSample {
    VectorXd consumption;  // T+1
    MatrixXd returns;      // T x N
};
CrraSample crra_dgp_sample(const CrraDgpParams& p, int T, std::uint64_t seed, std::uint64_t rep = 0);

// Flat key-value serialization ("key = value", vectors comma separated,
// V_rr row-major).
std::map<std::string, std::string> read_kv_file(const std::string& path);
CrraDgpParams crra_params_from_kv(const std::map<std::string, std::string>& kv);
std::string crra_params_to_kv(const CrraDgpParams& p);

}  // namespace drgmm
