#include <doctest.h>

#include <cmath>
#include <drgmm/confsets.hpp>
#include <drgmm/errors.hpp>
#include <json.hpp>
#include <limits>

#include "helpers.hpp"

using namespace drgmm;
using namespace testing_util;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

PointTestFn region_test(std::function<bool(double)> accept) {
    return [accept](const VectorXd& t) {
        PointTest p;
        p.value = accept(t(0)) ? 0.0 : 10.0;
        p.cv = 1.0;
        p.reject = !accept(t(0));
        return p;
    };
}

IvModel strong_iv(std::uint64_t seed, int T = 400) { return IvModel(random_iv_data(T, 4, 1, seed, 1.0)); }

}  // namespace

TEST_SUITE("confsets") {

TEST_CASE("statistic names round trip") {
    for (auto k : {StatKind::DRLM, StatKind::DRLMEnhanced, StatKind::KLM, StatKind::AR, StatKind::LR})
        CHECK(stat_kind_from_string(to_string(k)) == k);
    CHECK(stat_kind_from_string("drlm") == StatKind::DRLM);
    CHECK_THROWS_AS(stat_kind_from_string("wald"), InputError);
}

TEST_CASE("synthetic regions are recovered with refined endpoints") {
    ConfidenceSet1D s = invert_1d(region_test([](double x) { return std::abs(x - 2.0) <= 1.0; }), 1.0);
    REQUIRE(s.intervals.size() == 1);
    CHECK(s.intervals[0].lo == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(s.intervals[0].hi == doctest::Approx(3.0).epsilon(1e-3));
    CHECK(s.bounded());
    CHECK(s.contains(2.0));
    CHECK_FALSE(s.contains(3.5));

    ConfidenceSet1D all = invert_1d(region_test([](double) { return true; }), 1.0);
    REQUIRE(all.intervals.size() == 1);
    CHECK(all.intervals[0].lo == -kInf);
    CHECK(all.intervals[0].hi == kInf);
    CHECK_FALSE(all.bounded());

    ConfidenceSet1D none = invert_1d(region_test([](double) { return false; }), 1.0);
    CHECK(none.empty());
    CHECK(format_interval_union(none.intervals) == "{}");

    ConfidenceSet1D two = invert_1d(region_test([](double x) { return x < -100.0 || x > 18.0; }), 10.0);
    REQUIRE(two.intervals.size() == 2);
    CHECK(two.intervals[0].lo == -kInf);
    CHECK(two.intervals[0].hi == doctest::Approx(-100.0).epsilon(1e-3));
    CHECK(two.intervals[1].lo == doctest::Approx(18.0).epsilon(1e-3));
    CHECK(two.intervals[1].hi == kInf);
    CHECK(format_interval_union({{-kInf, -101.4}, {18.3, kInf}}) == "(-inf, -101.40] U [18.30, +inf)");
    CHECK(format_interval_union({{-kInf, kInf}}) == "(-inf, +inf)");

    CHECK_THROWS_AS(invert_1d(region_test([](double) { return true; }), 0.0), InputError);
}

TEST_CASE("JSON encodes infinite endpoints as strings") {
    ConfidenceSet1D two = invert_1d(region_test([](double x) { return x > 1.0; }), 1.0);
    auto j = nlohmann::json::parse(set_to_json(two));
    CHECK(j["intervals"][0][1] == "inf");
    CHECK(j["intervals"][0][0].get<double>() == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(j["bounded"] == false);
}

TEST_CASE("reported endpoints straddle the critical value") {
    IvModel model = strong_iv(3, 200);
    InversionContext ctx = make_context(model);
    for (StatKind k : {StatKind::DRLM, StatKind::KLM, StatKind::AR, StatKind::LR}) {
        PointTestFn t = make_point_test(ctx, k, {CvKind::FixedChi2, 0.05});
        const double s = ctx.cue.scale;
        ConfidenceSet1D set = invert_1d(t, s, {801, s, 1e-6});
        for (const Interval& iv : set.intervals)
            for (double e : {iv.lo, iv.hi}) {
                if (!std::isfinite(e)) continue;
                const double psi = std::atan(e / s), h = 2e-6;
                const bool a = t(VectorXd::Constant(1, s * std::tan(psi - h))).reject;
                const bool b = t(VectorXd::Constant(1, s * std::tan(psi + h))).reject;
                CHECK(a != b);
            }
    }
}

TEST_CASE("strongly identified correct specification: bounded sets with nominal coverage") {
    IvModel model = strong_iv(11);
    for (StatKind k : {StatKind::DRLM, StatKind::DRLMEnhanced, StatKind::KLM, StatKind::AR, StatKind::LR}) {
        ConfidenceSet1D s = invert_1d(model, k, {CvKind::FixedChi2, 0.05}, {1001});
        CHECK_MESSAGE(s.bounded(), to_string(k));
        CHECK_MESSAGE(!s.empty(), to_string(k));
        CHECK_MESSAGE(s.contains(1.0), to_string(k));
    }
    // Coverage equals the non-rejection rate at the truth.
    const int R = 300;
    int cover[4] = {0, 0, 0, 0};
    for (int r = 0; r < R; ++r) {
        IvModel mr = strong_iv(1000 + r);
        InversionContext ctx = make_context(mr);
        int i = 0;
        for (StatKind k : {StatKind::DRLM, StatKind::KLM, StatKind::AR, StatKind::LR})
            cover[i++] += !make_point_test(ctx, k, {CvKind::FixedChi2, 0.05})(VectorXd::Constant(1, 1.0)).reject;
    }
    const double band = 3.0 * std::sqrt(0.05 * 0.95 / R);
    for (int c : cover) CHECK(static_cast<double>(c) / R >= 0.95 - band);
}

TEST_CASE("power-enhanced DRLM set is nested in the DRLM set") {
    FactorModel model(random_factor_data(240, 10, 1, 21, 0.4, 0.4));
    Grid1D g{601};
    CriticalValuePolicy pol{CvKind::ConditionalCalibrated, 0.05};
    ConfidenceSet1D plain = invert_1d(model, StatKind::DRLM, pol, g);
    ConfidenceSet1D enh = invert_1d(model, StatKind::DRLMEnhanced, pol, g);
    REQUIRE(plain.curve.size() == enh.curve.size());
    int extra = 0;
    for (std::size_t i = 0; i < plain.curve.size(); ++i) {
        CHECK(plain.curve[i].theta == enh.curve[i].theta);
        if (enh.curve[i].accept) CHECK(plain.curve[i].accept);
        extra += plain.curve[i].accept && !enh.curve[i].accept;
    }
    MESSAGE("grid points removed by power enhancement: " << extra);
}

TEST_CASE("2-D masks: KLM within DRLM, projections consistent") {
    FactorModel model(random_factor_data(300, 8, 2, 5, 0.2, 1.0));
    Grid2D g{41};
    ConfidenceSet2D d = invert_2d(model, StatKind::DRLM, {CvKind::FixedChi2, 0.05}, g);
    ConfidenceSet2D k = invert_2d(model, StatKind::KLM, {CvKind::FixedChi2, 0.05}, g);
    REQUIRE(d.mask.size() == k.mask.size());
    for (std::size_t c = 0; c < d.mask.size(); ++c)
        if (k.mask[c]) CHECK(d.mask[c]);
    for (int axis = 0; axis < 2; ++axis) {
        const std::vector<double>& ax = axis == 0 ? d.axis0 : d.axis1;
        for (std::size_t i = 0; i < ax.size(); ++i) {
            bool any = false;
            for (std::size_t j = 0; j < ax.size(); ++j) any = any || (axis == 0 ? d.accepted(i, j) : d.accepted(j, i));
            bool in = false;
            for (const Interval& iv : d.projections[axis]) in = in || (ax[i] >= iv.lo && ax[i] <= iv.hi);
            CHECK(any == in);
        }
    }
    InversionContext ctx = make_context(model);
    PointTest at_cue = make_point_test(ctx, StatKind::LR, {CvKind::FixedChi2, 0.05})(ctx.cue.cue);
    CHECK(at_cue.ok);
    CHECK(at_cue.value < 1e-6);
    CHECK_FALSE(at_cue.reject);
    auto j = nlohmann::json::parse(set_to_json(d));
    CHECK(j["projections"].size() == 2);
    CHECK_THROWS_AS(invert_2d(FactorModel(random_factor_data(100, 5, 1, 1)), StatKind::DRLM), InputError);
    CHECK_THROWS_AS(invert_1d(model, StatKind::DRLM), InputError);
}

TEST_CASE("Fama-MacBeth two-pass: exact pricing and rank deficiency") {
    const int T = 120, N = 6, m = 2;
    RepRng rng(8, 8, 8);
    MatrixXd B = rng.normal_matrix(N, m);
    MatrixXd F = rng.normal_matrix(T, m);
    VectorXd lam(2);
    lam << 0.7, -1.3;
    MatrixXd Fc = F.rowwise() - F.colwise().mean();
    FactorData d;
    d.excess = true;
    d.F = F;
    d.R = (Fc.rowwise() + lam.transpose()) * B.transpose();
    FamaMacBeth fm = fm_two_pass(d);
    CHECK(max_abs(fm.lambda_hat - lam) < 1e-10);
    VectorXd sd = (Fc.colwise().squaredNorm().transpose() / (T - 1.0)).cwiseSqrt();
    CHECK(max_abs(fm.se - sd / std::sqrt(static_cast<double>(T))) < 1e-10);
    CHECK(fm.ci[0].lo == doctest::Approx(fm.lambda_hat(0) - 1.96 * fm.se(0)));
    CHECK(fm.t(1) == doctest::Approx(fm.lambda_hat(1) / fm.se(1)));

    FactorData bad = d;
    bad.F.col(1) = bad.F.col(0);
    CHECK_THROWS_AS(fm_two_pass(bad), Error);
}

}  // TEST_SUITE
