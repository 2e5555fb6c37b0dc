#pragma once

#include <functional>
#include <vector>

#include "drgmm/moments.hpp"
#include "drgmm/stats.hpp"

namespace drgmm {

struct SolverConfig {
    int grid = 2001;        // points of the 1-D atan grid
    int grid2 = 201;        // points per axis of the 2-D atan grid
    double scale = 0.0;     // atan scale s; <= 0 selects the moment-based default
    double tol = 1e-8;
    int starts = 9;         // multistart count for m >= 2
};

enum class PointKind { Min, Max, Saddle };

struct StationaryPoint {
    VectorXd theta;
    double objective = 0.0;  // unscaled f'V^{-1}f
    PointKind kind = PointKind::Min;
};

struct StationaryPointSet {
    VectorXd cue;                 // entries may be +-inf when the minimum is at infinity
    double objective_at_cue = 0.0;
    std::vector<StationaryPoint> other_points;
    bool exhaustive = true;
    double scale = 1.0;
};

// 10 * median |Gauss-Newton step from 0|, clamped to [1, 1e4].
double default_scale(const MomentModel& model);

StationaryPointSet cue_estimate(const MomentModel& model, const SolverConfig& config = {});

TestResult j_statistic(const MomentModel& model, const SolverConfig& config = {},
                       double alpha = 0.05);

struct CharPolySolution {
    VectorXd roots;                 // ascending
    std::vector<VectorXd> argmins;  // may hold +-inf sentinels
    double min_objective = 0.0;
};

CharPolySolution char_poly(const VectorXd& mu_R, const MatrixXd& beta, const MatrixXd& Omega,
                           const MatrixXd& Q_FF);
// Roots of the sample problem (unscaled objective) for a Kronecker model.
CharPolySolution char_poly(const KronGram& g);

struct FactorPseudoTrue {
    VectorXd lambda_star;
    double min_obj = 0.0;
    double is_measure = 0.0;
    bool structural_ok = false;
};
FactorPseudoTrue factor_pseudo_true(const VectorXd& mu_R, const MatrixXd& beta,
                                    const MatrixXd& Omega, const MatrixXd& Q_FF);

// Derivative of DRLM in theta for m = 1 linear moments.
double drlm_derivative(const MomentEvaluation& eval);
// Product form under the Kronecker structure.
double drlm_derivative(const KronGram& g, double theta);

// AR + rank statistic, constant in theta for Kronecker linear models.
double constant_sum(const MomentModel& model, const SolverConfig& config = {});

// Real solutions of T f'V_ff^{-1} f = d/2 (m = 1).
std::vector<double> drlm_maximizers(const KronGram& g, double d);
std::vector<double> drlm_maximizers(const MomentModel& model, double d);

// One evaluation along a power-enhancement segment.
struct SegmentValue {
    double drlm = 0.0;
    double cv = 0.0;
    double r = 0.0;
    bool ok = true;
};
using SegmentFn = std::function<SegmentValue(const VectorXd&)>;

// Scans the segment [theta1, cue] (cue may be infinite, then in atan space)
// at `points` points plus `extra`, refines around the most significant point
// and returns the outcome. The hypothesized point is checked first.
TestResult enhanced_scan(const VectorXd& theta1, const VectorXd& cue, double scale,
                         const std::vector<VectorXd>& extra, const SegmentFn& fn, int points = 201);

TestResult power_enhanced_test(const MomentModel& model, const VectorXd& theta1,
                               const CriticalValuePolicy& policy = {},
                               const StationaryPointSet* cue = nullptr,
                               const SolverConfig& config = {});

}  // namespace drgmm
