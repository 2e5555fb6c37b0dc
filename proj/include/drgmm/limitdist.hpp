#pragma once

#include <cstdint>
#include <vector>

#include "drgmm/linalg.hpp"
#include "drgmm/rng.hpp"
#include "drgmm/stats.hpp"

namespace drgmm {

struct LimitExperimentParams {
    int N = 25;
    int m = 1;
    VectorXd mu_bar;      // N
    MatrixXd D_bar;       // N x m
    VectorXd lambda_star; // m, drift of the pseudo-true value (zero under H0)
    MatrixXd Q_FF;        // m x m, identity by default
};

// mu_bar = sqrt(mu2) e_1, D_bar = sqrt(D2) e_2 (m = 1).
LimitExperimentParams limit_params(int N, double mu2, double D2, double lambda_star = 0.0);
void validate(const LimitExperimentParams& p);

// Means of the moment and Jacobian components at the hypothesized value 0.
struct DriftMeans {
    VectorXd mean_f;
    VectorXd mean_D;
};
DriftMeans theorem7_means(double lambda_star, const VectorXd& mu_bar, const VectorXd& D_bar);
DriftMeans drift_means(const LimitExperimentParams& p);

// Statistics of one limit-experiment draw, evaluated at the hypothesized value 0.
struct LimitStats {
    double drlm = 0.0;
    double klm = 0.0;
    double ar = 0.0;
    double rank = 0.0;
    double j = 0.0;   // minimum of the AR statistic over the parameter
    double lr = 0.0;  // conditional LR statistic (m = 1)
};

// Gram representation of a draw: H = (mean_f + psi, -(mean_D + Psi)), S = I, T = 1.
KronGram limit_gram(const VectorXd& f, const MatrixXd& D);
LimitStats limit_stats(const VectorXd& f, const MatrixXd& D);

// Draws psi ~ N(0, I_N) and Psi ~ N(0, I_{N x m}) for replication `rep`.
void limit_draw(const LimitExperimentParams& p, std::uint64_t seed, std::uint64_t rep, VectorXd& f,
                MatrixXd& D);

// Power-enhanced DRLM on the synthetic draw: segment from 0 to the CUE.
TestResult limit_enhanced(const KronGram& g, const CriticalValuePolicy& policy);

struct LimitSample {
    long reps = 0;
    long rejections = 0;
    double frequency = 0.0;
    double se = 0.0;
    std::vector<double> drlm, klm, ar;
};

LimitSample sample_limit_drlm(const LimitExperimentParams& p, long reps, std::uint64_t seed,
                              const CriticalValuePolicy& policy = {}, bool keep_stream = false);

// Singular-value parameterization of the factor model (m general).
struct StructuralDecomposition {
    MatrixXd D_star;      // N x m
    VectorXd lambda_star; // m, entries may be +-inf
    VectorXd delta;       // N - m
    MatrixXd D_perp;      // N x (N - m)
    VectorXd singular_values;
    bool degenerate = false;
};

StructuralDecomposition svd_structural(const VectorXd& mu_R, const MatrixXd& beta, const MatrixXd& Omega,
                                       const MatrixXd& Q_FF, double T_scale = 1.0);

// Left-hand side and reconstruction of the scaled data matrix.
MatrixXd structural_target(const VectorXd& mu_R, const MatrixXd& beta, const MatrixXd& Omega,
                           const MatrixXd& Q_FF, double T_scale = 1.0);
MatrixXd structural_reconstruction(const StructuralDecomposition& s, const MatrixXd& Omega,
                                   const MatrixXd& Q_FF);

struct MaximalInvariant {
    double S_perp_perp = 0.0;
    double S_l1_perp = 0.0;
    double S_l1_l1 = 0.0;
};
MaximalInvariant maximal_invariant(const MomentEvaluation& eval);

// 2 x 2 noncentrality in the order (perp, lambda) for m = 1.
MatrixXd noncentrality(double lambda1, double lambda_star, const VectorXd& D_star, const VectorXd& delta,
                       double Q_FF, const MatrixXd& Omega);

}  // namespace drgmm
