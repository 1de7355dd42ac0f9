#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <boost/math/distributions/beta.hpp>

#include "doctest.h"
#include "shield/conformal.hpp"
#include "shield/errors.hpp"

using namespace shield;

namespace {

std::vector<double> iota_from_one(int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    std::iota(v.begin(), v.end(), 1.0);
    return v;
}

}  // namespace

TEST_CASE("trajectory score order statistic") {
    auto us = iota_from_one(20);
    CHECK(traj_score(us, 0.05) == 19.0);
    CHECK(traj_score(us, 0.0) == 20.0);
    std::vector<double> flat(7, 0.25);
    CHECK(traj_score(flat, 0.3) == 0.25);
    CHECK(traj_score(std::vector{4.0}, 0.9) == 4.0);
    CHECK_THROWS_AS(traj_score(std::vector<double>{}, 0.05), Error);

    std::mt19937_64 rng(1);
    std::shuffle(us.begin(), us.end(), rng);
    CHECK(traj_score(us, 0.05) == 19.0);
}

TEST_CASE("calibration rank rule") {
    CalibrationConfig c{0.05, 0.05};
    const auto r = calibrate(iota_from_one(19), c);
    CHECK(r.epsilonHat == 19.0);
    CHECK_FALSE(r.degenerate);
    CHECK(r.N == 19);

    CalibrationConfig half{0.5, 0.05};
    CHECK(calibrate({3.0, 1.0, 2.0}, half).epsilonHat == 2.0);

    const auto small = calibrate({1, 2, 3, 4}, c);
    CHECK(std::isinf(small.epsilonHat));
    CHECK(small.degenerate);

    CHECK_THROWS_AS(calibrate({1.0}, CalibrationConfig{0.0, 0.05}), Error);
    CHECK_THROWS_AS(calibrate({1.0}, CalibrationConfig{0.1, 1.0}), Error);
}

TEST_CASE("calibration keeps ties and is monotone in alpha") {
    const auto tied = calibrate({1, 1, 1, 2, 2}, CalibrationConfig{0.4, 0.0});
    CHECK(tied.epsilonHat == 2.0);

    std::mt19937_64 rng(3);
    std::exponential_distribution<double> e(1.0);
    std::vector<double> s(300);
    for (auto& x : s) x = e(rng);
    double prev = -1.0;
    for (double a : {0.5, 0.3, 0.2, 0.1, 0.05, 0.02, 0.01}) {
        const double eps = calibrate(s, CalibrationConfig{a, 0.05}).epsilonHat;
        CHECK(eps >= prev);
        prev = eps;
    }
}

TEST_CASE("coverage check") {
    const auto inf = calibrate({1, 2, 3}, CalibrationConfig{0.05, 0.05});
    CHECK(coverage_check(inf, std::vector{100.0, 1e9}).empirical == 1.0);

    const auto scores = iota_from_one(500);
    const auto r = calibrate(scores, CalibrationConfig{0.05, 0.05});
    const auto rep = coverage_check(r, scores);
    const double rank = std::ceil(0.95 * 501.0);
    CHECK(rep.empirical >= (rank - 1.0) / 500.0);
    CHECK(rep.betaA == 476.0);
    CHECK(rep.betaB == 25.0);

    const auto alt = calibrate(scores, CalibrationConfig{0.1, 0.05});
    CHECK(coverage_check(alt, scores, BetaAlpha::Trans).betaB == 25.0);
    CHECK(coverage_check(alt, scores, BetaAlpha::Cal).betaB == 50.0);
}

TEST_CASE("coverage over repeated exchangeable draws follows the Beta law") {
    // N = 500, alpha = 0.05: the exact coverage F(epsHat) of a continuous score
    // distribution is Beta(476, 25); with uniform scores F(epsHat) = epsHat.
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const CalibrationConfig cfg{0.05, 0.05};
    const boost::math::beta_distribution<double> law(476.0, 25.0);
    const double lo = boost::math::quantile(law, 0.005), hi = boost::math::quantile(law, 0.995);

    int inside = 0;
    double meanEmpirical = 0.0;
    std::vector<double> cal(500), test(2000);
    for (int rep = 0; rep < 1000; ++rep) {
        for (auto& x : cal) x = u(rng);
        for (auto& x : test) x = u(rng);
        const auto r = calibrate(cal, cfg);
        inside += (r.epsilonHat >= lo && r.epsilonHat <= hi) ? 1 : 0;
        meanEmpirical += coverage_check(r, test).empirical;
    }
    meanEmpirical /= 1000.0;
    CHECK(meanEmpirical >= 1.0 - cfg.alphaCal - 0.01);
    // 99% central interval; allow sampling slack on 1000 repetitions.
    CHECK(inside >= 975);
}

TEST_CASE("dataset scores match per-transition measures and skip empty trajectories") {
    Ensemble ens(3, 17, 1e-4, 8);
    ens.set_output_scale({0.3, 0.3, 0.1});
    ens.set_output_anchor({0, 0, 1});
    const WorldConfig w;
    Dataset d;
    d.trajectories = gen_random(40, 15, w, 9);
    d.trajectories.push_back(Trajectory{TrajectorySource::Random, {{0.0, 0.0, 0.0}}, {}, {-1}});
    const auto scores = score_dataset(ens, UncertaintyMethod::JRD, d, 0.1);
    std::size_t k = 0;
    for (const auto& tr : d.trajectories) {
        if (tr.length() == 0) continue;
        std::vector<double> us;
        for (std::size_t t = 0; t < tr.length(); ++t) {
            us.push_back(measure(ens, tr.states[t], tr.actions[t], UncertaintyMethod::JRD));
        }
        REQUIRE(k < scores.size());
        CHECK(scores[k] == doctest::Approx(traj_score(us, 0.1)).epsilon(1e-12));
        ++k;
    }
    CHECK(k == scores.size());

    Dataset empty;
    empty.trajectories = {Trajectory{TrajectorySource::Random, {{0.0, 0.0, 0.0}}, {}, {-1}}};
    CHECK_THROWS_AS(score_dataset(ens, UncertaintyMethod::JRD, empty, 0.1), Error);
}
