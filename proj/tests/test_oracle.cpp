#include <doctest.h>

#include <cmath>

#include "surro/oracle.hpp"

using namespace surro;

namespace {

AbmSchedule flat_schedule(double i0, double alpha, double beta, double gamma, int horizon) {
    AbmSchedule s;
    s.i0 = i0;
    s.thetas.assign(horizon, ParamVector{alpha, beta, gamma});
    return s;
}

} // namespace

TEST_CASE("initial-state masses are binomial in the infected count") {
    // Four agents at i0 = 1/2: P(two infected) = C(4,2) / 16 = 6/16.
    LatticeConfig cfg{2, 0};
    PushforwardResult p = exact_pushforward(cfg, flat_schedule(0.5, 0.3, 0.2, 0.1, 0));
    REQUIRE(p.outcomes.size() == 5);
    CHECK(p.total_mass == doctest::Approx(1.0).epsilon(1e-14));
    AggregateTrajectory two;
    two.counts = {{2, 2, 0}};
    CHECK(trajectory_probability(p, two) == doctest::Approx(6.0 / 16.0).epsilon(1e-13));
    AggregateTrajectory none;
    none.counts = {{4, 0, 0}};
    CHECK(trajectory_probability(p, none) == doctest::Approx(1.0 / 16.0).epsilon(1e-13));
}

TEST_CASE("zero-probability branches are pruned from the enumeration") {
    LatticeConfig cfg{2, 2};
    PushforwardResult p = exact_pushforward(cfg, flat_schedule(0.0, 0.9, 0.5, 0.5, 2));
    // Nobody ever gets infected: one outcome, full mass.
    REQUIRE(p.outcomes.size() == 1);
    CHECK(p.outcomes[0].second == doctest::Approx(1.0).epsilon(1e-15));
    for (const auto& c : p.outcomes[0].first.counts) CHECK(c == std::array<int, 3>{4, 0, 0});
}

TEST_CASE("deterministic parameter corners walk the status cycle") {
    // a=1, beta=1, gamma=1: everyone I -> R -> S -> (alpha=0 keeps S).
    LatticeConfig cfg{2, 3};
    PushforwardResult p = exact_pushforward(cfg, flat_schedule(1.0, 0.0, 1.0, 1.0, 3));
    REQUIRE(p.outcomes.size() == 1);
    const auto& y = p.outcomes[0].first.counts;
    CHECK(y[0] == std::array<int, 3>{0, 4, 0});
    CHECK(y[1] == std::array<int, 3>{0, 0, 4});
    CHECK(y[2] == std::array<int, 3>{4, 0, 0});
    CHECK(y[3] == std::array<int, 3>{4, 0, 0});
}

TEST_CASE("outcome masses sum to one for a dense case") {
    LatticeConfig cfg{2, 3};
    PushforwardResult p = exact_pushforward(cfg, flat_schedule(0.37, 0.62, 0.28, 0.45, 3));
    CHECK(std::abs(p.total_mass - 1.0) <= 1e-12);
    for (const auto& [y, m] : p.outcomes) CHECK(m > 0.0);
}

TEST_CASE("a tiny node budget trips the size guard") {
    LatticeConfig cfg{3, 4};
    CHECK_THROWS_WITH(exact_pushforward(cfg, flat_schedule(0.5, 0.5, 0.5, 0.5, 4), 1000),
                      "size guard exceeded");
}

TEST_CASE("empirical distribution converges to the exact one") {
    LatticeConfig cfg{2, 2};
    AbmSchedule sched = flat_schedule(0.41, 0.73, 0.33, 0.21, 2);
    PushforwardResult exact = exact_pushforward(cfg, sched);
    PushforwardResult emp = empirical_pushforward(cfg, sched, 20000, RngStream(17));
    CHECK(total_variation(exact, emp) < 0.05);
    CHECK(total_variation(exact, exact) == 0.0);
}
