#include <doctest.h>

#include <atomic>
#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <drgmm/errors.hpp>
#include <drgmm/limitdist.hpp>
#include <drgmm/montecarlo.hpp>
#include <sstream>

using namespace drgmm;

namespace {

SimSpec small_size_spec() {
    SimSpec s;
    s.mu2_axis = {0.0, 10.0};
    s.D2_axis = {0.0, 30.0};
    s.reps = 1500;
    s.seed = 42;
    return s;
}

bool same_cells(const RejectionSurface& a, const RejectionSurface& b) {
    if (a.cells.size() != b.cells.size()) return false;
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        const SurfaceCell &x = a.cells[i], &y = b.cells[i];
        if (x.coords != y.coords || x.statistic != y.statistic || x.rejections != y.rejections ||
            x.frequency != y.frequency || x.se != y.se || x.flag != y.flag)
            return false;
    }
    return true;
}

// AR in the drifted limit experiment is noncentral chi2(N) with
// noncentrality (mu'mu + ls^2 D'D) / (1 + ls^2).
double ar_power_oracle(int N, double mu2, double D2, double ls, double alpha) {
    const double nc = (mu2 + ls * ls * D2) / (1.0 + ls * ls);
    const double cv = chi2_quantile(N, 1.0 - alpha);
    if (nc == 0.0) return alpha;
    return boost::math::cdf(boost::math::complement(boost::math::non_central_chi_squared(N, nc), cv));
}

// KLM with D_bar = 0: noncentral chi2(1) with noncentrality mu'mu * B,
// B ~ Beta(1/2, (N-1)/2) the squared cosine between mu_bar and the Jacobian draw.
double klm_size_oracle(int N, double mu2) {
    namespace bm = boost::math;
    bm::beta_distribution<double> B(0.5, 0.5 * (N - 1));
    const double cv = chi2_quantile(1, 0.95);
    // Substitute b = u^2 to remove the endpoint singularity.
    auto f = [&](double u) {
        const double b = u * u;
        if (b <= 0.0 || b >= 1.0) return 0.0;
        const double tail = bm::cdf(bm::complement(bm::non_central_chi_squared(1, mu2 * b), cv));
        return 2.0 * u * bm::pdf(B, b) * tail;
    };
    return bm::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 15, 1e-12);
}

}  // namespace

TEST_SUITE("montecarlo") {

TEST_CASE("spec validation") {
    SimSpec s = small_size_spec();
    CHECK_NOTHROW(validate(s));
    s.mu2_axis = {1.0, 1.0};
    CHECK_THROWS_AS(validate(s), InputError);
    s = small_size_spec();
    s.reps = 0;
    CHECK_THROWS_AS(validate(s), InputError);
    s = small_size_spec();
    s.D2_axis = {-1.0, 2.0};
    CHECK_THROWS_AS(validate(s), InputError);
    s = small_size_spec();
    s.kind = ExperimentKind::Power;
    CHECK_THROWS_AS(validate(s), InputError);
    s.lambda_axis = {0.0};
    s.m = 2;
    CHECK_THROWS_AS(validate(s), UnsupportedError);
    CHECK_THROWS_AS(experiment_kind_from_string("bogus"), InputError);
    for (auto k : {ExperimentKind::Size, ExperimentKind::Power, ExperimentKind::JCdf, ExperimentKind::Crra})
        CHECK(experiment_kind_from_string(to_string(k)) == k);
}

TEST_CASE("cells carry binomial standard errors") {
    SurfaceCell c = make_cell({1.0}, "DRLM", 400, 20);
    CHECK(c.frequency == 0.05);
    CHECK(c.se == doctest::Approx(std::sqrt(0.05 * 0.95 / 400)).epsilon(1e-15));
    CHECK(make_cell({}, "x", 10, 0).se == 0.0);
    CHECK(make_cell({}, "x", 10, 10).se == 0.0);
}

TEST_CASE("parallel replication visits every index once and propagates errors") {
    for (int threads : {1, 3, 8}) {
        std::vector<std::atomic<int>> hits(1000);
        parallel_reps(1000, threads, [&](long r) { hits[r]++; });
        bool ok = true;
        for (auto& h : hits) ok = ok && h.load() == 1;
        CHECK(ok);
    }
    CHECK_THROWS_AS(parallel_reps(500, 4,
                                  [](long r) {
                                      if (r == 321) throw NumericalError("boom");
                                  }),
                    NumericalError);
}

TEST_CASE("surfaces are bitwise identical across worker counts") {
    SimSpec s = small_size_spec();
    s.reps = 600;
    s.include_enhanced = true;
    s.threads = 1;
    RejectionSurface a = run_size_surface(s);
    s.threads = 4;
    RejectionSurface b = run_size_surface(s);
    CHECK(same_cells(a, b));
    s.seed = 43;
    CHECK_FALSE(same_cells(a, run_size_surface(s)));

    SimSpec p;
    p.kind = ExperimentKind::Power;
    p.mu2_axis = {4.4};
    p.D2_axis = {10.0};
    p.lambda_axis = {-1.0, 0.0, 2.0};
    p.reps = 300;
    p.threads = 1;
    RejectionSurface c = run_power_curve(p);
    p.threads = 5;
    CHECK(same_cells(c, run_power_curve(p)));
}

TEST_CASE("size surface agrees with the limit sampler and bounds") {
    SimSpec s = small_size_spec();
    RejectionSurface surf = run_size_surface(s);
    CHECK(surf.cells.size() == 8);
    for (double mu2 : s.mu2_axis)
        for (double D2 : s.D2_axis) {
            LimitSample ref = sample_limit_drlm(limit_params(s.N, mu2, D2), s.reps, s.seed);
            const SurfaceCell& c = surf.at("DRLM", {mu2, D2});
            CHECK(c.rejections == ref.rejections);
            CHECK(c.frequency <= 0.05 + 3.0 * c.se + 1e-12);
            CHECK(c.frequency >= 0.0);
        }
    const SurfaceCell& k = surf.at("KLM", {10.0, 0.0});
    CHECK(std::abs(k.frequency - klm_size_oracle(s.N, 10.0)) <= 3.0 * k.se);
    CHECK(surf.max_frequency("DRLM") <= 0.05 + 3.0 * std::sqrt(0.05 * 0.95 / s.reps));
    CHECK_THROWS_AS(surf.at("DRLM", {3.0, 3.0}), InputError);
}

TEST_CASE("conditional policy raises rejection away from the conservative corner") {
    SimSpec s = small_size_spec();
    s.mu2_axis = {10.0};
    s.D2_axis = {10.0};
    s.reps = 3000;
    RejectionSurface fixed = run_size_surface(s);
    s.policy.kind = CvKind::ConditionalCalibrated;
    RejectionSurface cond = run_size_surface(s);
    CHECK(cond.at("DRLM", {10.0, 10.0}).rejections >= fixed.at("DRLM", {10.0, 10.0}).rejections);
}

TEST_CASE("enhanced DRLM size cells are flagged when the minimizer is at infinity") {
    SimSpec s;
    s.mu2_axis = {0.0, 4.4};
    s.D2_axis = {1.0, 30.0};
    s.reps = 1500;
    s.include_enhanced = true;
    RejectionSurface surf = run_size_surface(s);
    CHECK(surf.at("DRLM_enhanced", {4.4, 1.0}).flag == "not_size_measurement");
    CHECK(surf.at("DRLM_enhanced", {0.0, 1.0}).flag.empty());
    for (auto [mu2, D2] : std::vector<std::pair<double, double>>{{0.0, 1.0}, {0.0, 30.0}, {4.4, 30.0}}) {
        const SurfaceCell& e = surf.at("DRLM_enhanced", {mu2, D2});
        const SurfaceCell& d = surf.at("DRLM", {mu2, D2});
        CHECK(e.rejections >= d.rejections);
        CHECK(e.frequency <= d.frequency + 3.0 * std::sqrt(0.05 * 0.95 / s.reps));
    }
}

TEST_CASE("power curve: AR matches its noncentral chi-square law") {
    SimSpec p;
    p.kind = ExperimentKind::Power;
    p.mu2_axis = {4.4};
    p.D2_axis = {0.0, 30.0};
    p.lambda_axis = {-2.0, 0.0, 0.5, 3.0};
    p.reps = 3000;
    p.seed = 5;
    RejectionSurface c = run_power_curve(p);
    CHECK(c.cells.size() == 2 * 4 * 5);
    for (double D2 : p.D2_axis)
        for (double ls : p.lambda_axis) {
            const SurfaceCell& ar = c.at("AR", {4.4, D2, ls});
            const double want = ar_power_oracle(25, 4.4, D2, ls, 0.05);
            CHECK(std::abs(ar.frequency - want) <= 3.0 * std::sqrt(want * (1 - want) / p.reps));
            CHECK(c.at("DRLM_enhanced", {4.4, D2, ls}).rejections >= c.at("DRLM", {4.4, D2, ls}).rejections);
        }
    CHECK(c.at("DRLM", {4.4, 30.0, 0.0}).frequency <= 0.05 + 3.0 * std::sqrt(0.05 * 0.95 / p.reps));
    const SurfaceCell& plain = c.at("DRLM", {4.4, 30.0, 3.0});
    const SurfaceCell& enh = c.at("DRLM_enhanced", {4.4, 30.0, 3.0});
    CHECK(enh.frequency > plain.frequency + 3.0 * std::hypot(enh.se, plain.se));
}

TEST_CASE("J CDF: monotone, complementary rejection, strong-ID chi-square limit") {
    SimSpec s;
    s.kind = ExperimentKind::JCdf;
    s.mu2_axis = {0.0};
    s.D2_axis = {0.0, 1e4};
    s.cdf_points = {5.0, 15.0, 25.0, 40.0};
    s.reps = 4000;
    RejectionSurface j = run_jstat_cdf(s);
    const double cv = chi2_quantile(24, 0.95);
    for (double D2 : s.D2_axis) {
        double prev = -1.0;
        for (double x : s.cdf_points) {
            const double f = j.at("J_cdf", {0.0, D2, x}).frequency;
            CHECK(f >= prev);
            prev = f;
        }
    }
    const SurfaceCell& strong = j.at("J", {0.0, 1e4, cv});
    CHECK(std::abs(strong.frequency - 0.05) <= 3.0 * std::sqrt(0.05 * 0.95 / s.reps) + 0.005);
    CHECK(j.at("J", {0.0, 0.0, cv}).frequency < strong.frequency);
}

TEST_CASE("CRRA experiment at the truth under correct specification") {
    SimSpec s;
    s.kind = ExperimentKind::Crra;
    s.c_axis = {0.0};
    s.c_tilde_axis = {1.0};
    s.T = 400;
    s.reps = 400;
    s.seed = 9;
    RejectionSurface r = run_crra_experiment(s);
    REQUIRE(r.cells.size() == 2);
    const SurfaceCell& d = r.at("DRLM", {0.0, 1.0, r.cells[0].coords[2], r.cells[0].coords[3]});
    CHECK(std::abs(d.coords[3] - 15.0) < 1e-3);
    CHECK(d.flag.empty());
    CHECK(d.frequency <= 0.05 + 3.0 * std::sqrt(0.05 * 0.95 / s.reps));
    s.threads = 3;
    CHECK(same_cells(r, run_crra_experiment(s)));
}

TEST_CASE("CSV rows and JSON spec round trip") {
    SimSpec s = small_size_spec();
    s.reps = 50;
    RejectionSurface surf = run_size_surface(s);
    std::ostringstream os;
    write_surface_csv(surf, os);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "mu2,D2,statistic,reps,rejections,frequency,se,flag");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == static_cast<int>(surf.cells.size()));

    s.kind = ExperimentKind::Crra;
    s.policy.kind = CvKind::ConditionalCalibrated;
    s.gamma_axis = {10.0, 20.0};
    SimSpec t = spec_from_json(spec_to_json(s));
    CHECK(t.kind == s.kind);
    CHECK(t.mu2_axis == s.mu2_axis);
    CHECK(t.seed == s.seed);
    CHECK(t.policy.kind == CvKind::ConditionalCalibrated);
    CHECK(t.gamma_axis == s.gamma_axis);
    CHECK((t.crra.V_rr - s.crra.V_rr).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(spec_from_json("{"), InputError);
    CHECK_THROWS_AS(spec_from_json(R"({"kind":"size","reps":0})"), InputError);
    const std::string man = manifest_json(s, {"out.csv"});
    CHECK(man.find("\"seed\": 42") != std::string::npos);
    CHECK(man.find("out.csv") != std::string::npos);
}

}  // TEST_SUITE
