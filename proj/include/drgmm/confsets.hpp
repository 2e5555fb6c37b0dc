#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "drgmm/models.hpp"
#include "drgmm/solver.hpp"
#include "drgmm/stats.hpp"

namespace drgmm {

enum class StatKind { DRLM, DRLMEnhanced, KLM, AR, LR };

std::string to_string(StatKind k);
StatKind stat_kind_from_string(const std::string& s);

// Evaluation of one test at one hypothesized value.
struct PointTest {
    double value = 0.0;
    double cv = 0.0;
    bool reject = false;
    bool ok = true;   // false when the statistic could not be computed (treated as not rejected)
};
using PointTestFn = std::function<PointTest(const VectorXd&)>;

struct InversionContext {
    const MomentModel* model = nullptr;
    StationaryPointSet cue;
    double J = 0.0;   // T times the minimized objective
};

InversionContext make_context(const MomentModel& model, const SolverConfig& config = {});

// LR uses the conditional LR test for m = 1; for m > 1 the statistic AR - J is
// compared with the m = 1 conditional critical value with k - m + 1 moments,
// conditioning on the smallest root of the rank quadratic form.
PointTestFn make_point_test(const InversionContext& ctx, StatKind stat, const CriticalValuePolicy& policy,
                            double alpha = 0.05);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct CurvePoint {
    double theta = 0.0;
    double value = 0.0;
    double cv = 0.0;
    bool accept = true;
};

struct Grid1D {
    int points = 4001;
    double scale = 0.0;  // <= 0 selects the solver's default scale
    double tol = 1e-4;   // bisection tolerance in psi = atan(theta / scale)
};

struct ConfidenceSet1D {
    std::vector<Interval> intervals;
    double level = 0.95;
    std::string statistic;
    int points = 0;
    double scale = 1.0;
    double tol = 1e-4;
    int failed_points = 0;
    std::vector<CurvePoint> curve;

    bool empty() const { return intervals.empty(); }
    bool bounded() const;
    bool contains(double theta) const;
};

ConfidenceSet1D invert_1d(const PointTestFn& test, double scale, const Grid1D& grid = {},
                          const std::string& name = "");
ConfidenceSet1D invert_1d(const MomentModel& model, StatKind stat,
                          const CriticalValuePolicy& policy = {CvKind::ConditionalCalibrated, 0.05},
                          const Grid1D& grid = {}, const SolverConfig& config = {});

struct Grid2D {
    int points = 201;    // per axis
    double scale = 0.0;
};

struct ConfidenceSet2D {
    std::vector<double> axis0, axis1;   // theta values at the cell centres
    std::vector<char> mask;             // row-major, axis0 index outer
    std::string statistic;
    double level = 0.95;
    std::vector<std::vector<Interval>> projections;  // per axis
    int failed_points = 0;

    bool accepted(std::size_t i, std::size_t j) const { return mask[i * axis1.size() + j] != 0; }
};

ConfidenceSet2D invert_2d(const PointTestFn& test, double scale, const Grid2D& grid = {},
                          const std::string& name = "");
ConfidenceSet2D invert_2d(const MomentModel& model, StatKind stat,
                          const CriticalValuePolicy& policy = {CvKind::FixedChi2, 0.05},
                          const Grid2D& grid = {}, const SolverConfig& config = {});

// Union of accepted grid cells along one axis; outermost accepted cells extend to infinity.
std::vector<Interval> project_mask(const ConfidenceSet2D& s, int axis);

struct FamaMacBeth {
    VectorXd lambda_hat;
    VectorXd se;
    VectorXd t;
    std::vector<Interval> ci;   // estimate +- 1.96 se
};
FamaMacBeth fm_two_pass(const FactorData& data);

std::string set_to_json(const ConfidenceSet1D& s);
std::string set_to_json(const ConfidenceSet2D& s);
std::string format_interval_union(const std::vector<Interval>& v);

}  // namespace drgmm
