#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "drgmm/models.hpp"
#include "drgmm/stats.hpp"

namespace drgmm {

enum class ExperimentKind { Size, Power, JCdf, Crra };

std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& s);

// Grids are squared lengths mu_bar'mu_bar and D_bar'D_bar.
struct SimSpec {
    ExperimentKind kind = ExperimentKind::Size;
    std::vector<double> mu2_axis{0.0, 1.0, 4.4, 10.0, 30.0, 100.0};
    std::vector<double> D2_axis{0.0, 1.0, 4.4, 10.0, 30.0, 100.0};
    std::vector<double> lambda_axis;   // power: drift of the pseudo-true value
    std::vector<double> cdf_points;    // jcdf: evaluation points of the empirical CDF
    long reps = 10000;
    double alpha = 0.05;
    std::uint64_t seed = 1;
    int N = 25;
    int m = 1;
    CriticalValuePolicy policy;
    bool include_enhanced = false;     // size: also run the power-enhanced DRLM
    int threads = 0;                   // 0 selects the hardware concurrency

    // CRRA experiment.
    CrraDgpParams crra = default_crra_params();
    std::vector<double> c_axis{0.0};
    std::vector<double> c_tilde_axis{1.0};
    std::vector<double> gamma_axis;    // hypothesized values; empty tests at the pseudo-true value
    int T = 1000;
};

void validate(const SimSpec& spec);

struct SurfaceCell {
    std::vector<double> coords;
    std::string statistic;
    long reps = 0;
    long rejections = 0;
    double frequency = 0.0;
    double se = 0.0;
    std::string flag;
};

struct RejectionSurface {
    std::vector<std::string> axis_names;
    std::vector<SurfaceCell> cells;

    // First cell of `statistic` whose coordinates match `coords` to 1e-12.
    const SurfaceCell& at(const std::string& statistic, const std::vector<double>& coords) const;
    double max_frequency(const std::string& statistic) const;
};

SurfaceCell make_cell(std::vector<double> coords, std::string statistic, long reps, long rejections,
                      std::string flag = {});

// Runs body(rep) for rep in [0, reps) on `threads` workers; the body must only
// write to storage indexed by rep.
void parallel_reps(long reps, int threads, const std::function<void(long)>& body);
int resolve_threads(int requested);

RejectionSurface run_size_surface(const SimSpec& spec);
RejectionSurface run_power_curve(const SimSpec& spec);
RejectionSurface run_jstat_cdf(const SimSpec& spec);
RejectionSurface run_crra_experiment(const SimSpec& spec);
RejectionSurface run_experiment(const SimSpec& spec);

void write_surface_csv(const RejectionSurface& s, std::ostream& out);
std::string spec_to_json(const SimSpec& spec);
SimSpec spec_from_json(const std::string& text);
std::string manifest_json(const SimSpec& spec, const std::vector<std::string>& outputs);

}  // namespace drgmm
