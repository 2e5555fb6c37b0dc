#pragma once

#include <optional>
#include <string>

#include "drgmm/models.hpp"
#include "drgmm/moments.hpp"

namespace drgmm {

enum class CvKind { FixedChi2, ConditionalCalibrated };

struct CriticalValuePolicy {
    CvKind kind = CvKind::FixedChi2;
    double alpha = 0.05;
};

struct TestResult {
    std::string name;
    double value = 0.0;
    int df = 0;
    double critical_value = 0.0;
    bool reject = false;
    double p_bound = 1.0;
    std::optional<double> conditioning_value;
};

// Calibrated conditional critical value for m = 1, alpha = 0.05.
double conditional_cv(double r, double alpha = 0.05);

// max(T f'V_ff^{-1} f, T D'V_thth.f^{-1} D) for m = 1.
double drlm_conditioning(const MomentEvaluation& eval);

// Critical value under a policy for an m-parameter score test with conditioning r.
double policy_cv(const CriticalValuePolicy& policy, int m, double r);

TestResult drlm(const MomentEvaluation& eval, const CriticalValuePolicy& policy = {});
TestResult klm(const MomentEvaluation& eval, double alpha = 0.05);
TestResult gmm_ar(const MomentEvaluation& eval, double alpha = 0.05);

// T vec(D)' V_thth.f^{-1} vec(D).
double rank_quadratic_form(const MomentEvaluation& eval);

TestResult rank_is_statistic(const FactorModel& model, double alpha = 0.05);
TestResult rank_is_statistic(const IvModel& model, double alpha = 0.05);

// m = 1 conditional likelihood ratio from AR, KLM and the rank statistic.
double clr_statistic(double ar, double klm, double rank_stat);
double clr_critical_value(int k, double rank_stat, double alpha = 0.05);
double clr_pvalue(int k, double rank_stat, double lr);
TestResult conditional_lr(const MomentEvaluation& eval, double rank_stat, double alpha = 0.05);

// Statistics at theta for a Kronecker-structured linear model computed from
// the Gram matrix M = H' Vbase^{-1} H; O(m^3) per point.
struct KronGram {
    MatrixXd M;
    MatrixXd S;
    double T = 1.0;
    int m() const { return static_cast<int>(M.rows()) - 1; }
};
KronGram kron_gram(const KroneckerForm& kf);

struct KronPoint {
    double ar = 0.0;
    double klm = 0.0;
    double drlm = 0.0;
    double rank = 0.0;   // T vec(D)' V_thth.f^{-1} vec(D)
    VectorXd score;      // T f' V_ff^{-1} D
};
KronPoint kron_point(const KronGram& g, const VectorXd& theta);

}  // namespace drgmm
