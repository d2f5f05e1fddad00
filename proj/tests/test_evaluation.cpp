#include <doctest.h>

#include <cmath>
#include <limits>

#include "surro/evaluation.hpp"

using namespace surro;

namespace {

TrainedPair untrained_pair(Family family, int agents, int horizon, std::uint64_t seed) {
    RngStream rng(seed);
    TrainedPair pair;
    pair.model = make_model(family, agents, horizon, rng);
    pair.phi = make_omega_params(family, rng);
    return pair;
}

} // namespace

TEST_CASE("nearest-rank quartiles of five values pick the 2nd, 3rd and 4th") {
    Quartiles q = quartiles({5.0, 1.0, 4.0, 2.0, 3.0});
    CHECK(q.q1 == 2.0);
    CHECK(q.med == 3.0);
    CHECK(q.q3 == 4.0);

    Quartiles single = quartiles({7.0});
    CHECK(single.q1 == 7.0);
    CHECK(single.med == 7.0);
    CHECK(single.q3 == 7.0);

    Quartiles four = quartiles({4.0, 3.0, 2.0, 1.0});
    CHECK(four.q1 == 1.0); // ceil(0.25 * 4) = 1st value
    CHECK(four.med == 2.0);
    CHECK(four.q3 == 3.0);

    CHECK_THROWS(quartiles({}));
}

TEST_CASE("record log-likelihood translates before scoring") {
    TrainedPair pair = untrained_pair(Family::Lode, 16, 8, 3);
    AbmIntervention iota;
    iota.v = {0.5, 0.4, 0.3};
    iota.a = 0.5;

    SurrogateIntervention si = omega_apply(omega_spec(pair.model.family), pair.phi, iota);
    SurrogateSchedule sched = apply_to_surrogate(si, pair.model.horizon);
    RngStream rng(4);
    AggregateTrajectory y = sample_trajectory(pair.model, sched, rng);

    CHECK(record_log_likelihood(pair, iota, y) ==
          doctest::Approx(log_likelihood(pair.model, sched, y)).epsilon(1e-12));
}

TEST_CASE("amse vanishes when records already match the surrogate samples") {
    TrainedPair pair = untrained_pair(Family::Lode, 16, 8, 5);

    // Build records whose trajectories are exactly what the surrogate will
    // draw for them under the amse seeding scheme.
    std::uint64_t seed = 77;
    RngStream master(seed);
    std::vector<Record> records;
    for (int r = 0; r < 3; ++r) {
        Record rec;
        rec.iota.v = {0.6, 0.3, 0.2};
        rec.iota.a = 0.4;
        SurrogateIntervention si = omega_apply(omega_spec(pair.model.family), pair.phi, rec.iota);
        SurrogateSchedule sched = apply_to_surrogate(si, pair.model.horizon);
        RngStream stream = master.split(static_cast<std::uint64_t>(r)).split(0);
        rec.y = sample_trajectory(pair.model, sched, stream);
        records.push_back(rec);
    }
    CHECK(amse(pair, records, seed, 1) == 0.0);

    // Perturbing one count by one in one step changes the error by exactly
    // 2 / (N^2 R (T + 1)) (two components move by one).
    records[0].y.counts[3][0] += 1;
    records[0].y.counts[3][1] -= 1;
    double expected = 2.0 / (16.0 * 16.0 * 3.0 * 9.0);
    CHECK(amse(pair, records, seed, 1) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("anll averages finite records and counts impossible ones") {
    TrainedPair pair = untrained_pair(Family::Lrnn, 9, 8, 6);
    AbmIntervention iota;
    iota.v = {0.5, 0.5, 0.5};
    iota.a = 0.5;
    SurrogateIntervention si = omega_apply(omega_spec(pair.model.family), pair.phi, iota);
    SurrogateSchedule sched = apply_to_surrogate(si, pair.model.horizon);

    RngStream rng(7);
    Record fine;
    fine.iota = iota;
    fine.y = sample_trajectory(pair.model, sched, rng);
    Record impossible = fine;
    impossible.y.counts[0] = {8, 0, 1}; // recovered agents at step 0

    AnllResult both = anll(pair, std::vector<Record>{fine, impossible});
    CHECK(both.infinite_records == 1);
    CHECK(both.value ==
          doctest::Approx(-record_log_likelihood(pair, iota, fine.y)).epsilon(1e-12));
}

TEST_CASE("counterfactual curves compare locked and unlocked runs") {
    TrainedPair pair = untrained_pair(Family::Lode, 16, 12, 8);
    LatticeConfig cfg{4, 12};
    AbmIntervention locked;
    locked.kind = InterventionKind::InitLock;
    locked.v = {0.8, 0.2, 0.1};
    locked.a = 0.3;
    locked.t_lock = 5;

    CounterfactualCurves curves = lockdown_counterfactual(pair, cfg, locked, 50, 11);
    REQUIRE(curves.abm_lock.size() == 13);
    REQUIRE(curves.abm_nolock.size() == 13);
    REQUIRE(curves.sur_lock.size() == 13);
    REQUIRE(curves.sur_nolock.size() == 13);

    // Identical streams drive both arms, so the curves agree before the
    // lockdown can act.
    for (int t = 0; t <= 5; ++t)
        CHECK(curves.abm_lock[static_cast<std::size_t>(t)] ==
              curves.abm_nolock[static_cast<std::size_t>(t)]);
    for (double v : curves.sur_lock) {
        CHECK(v >= 0.0);
        CHECK(v <= 16.0);
    }

    AbmIntervention not_locked = locked;
    not_locked.kind = InterventionKind::Init;
    CHECK_THROWS(lockdown_counterfactual(pair, cfg, not_locked, 10, 1));

    CounterfactualCurves toy;
    toy.abm_lock = {1.0, 2.0};
    toy.abm_nolock = {2.0, 5.0};
    toy.sur_lock = {1.0, 1.0};
    toy.sur_nolock = {2.0, 4.0};
    CounterfactualGap gap = counterfactual_gap(toy);
    CHECK(gap.abm == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(gap.surrogate == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("eta grid enumerates the level combinations") {
    EtaDistribution init{EtaDistribution::Type::UniformInit};
    std::vector<AbmIntervention> g1 = eta_grid(init, 20);
    CHECK(g1.size() == 81);
    for (const AbmIntervention& iota : g1) CHECK(iota.kind == InterventionKind::Init);

    EtaDistribution uni{EtaDistribution::Type::UniformUnion, 0.5};
    std::vector<AbmIntervention> g2 = eta_grid(uni, 20);
    CHECK(g2.size() == 81 * 7); // plain plus six lockdown onsets
    int locked = 0;
    for (const AbmIntervention& iota : g2) locked += iota.kind == InterventionKind::InitLock;
    CHECK(locked == 81 * 6);

    // Short horizons keep only the onsets whose window fits.
    std::vector<AbmIntervention> g3 = eta_grid(uni, 12);
    CHECK(g3.size() == 81 * 3); // t_lock in {5, 6} plus the plain points
}

TEST_CASE("exact kl decomposes as cross-entropy minus entropy") {
    LatticeConfig cfg{2, 2};
    AbmIntervention iota;
    iota.v = {0.5, 0.5, 0.5};
    iota.a = 0.5;

    TrainedPair pair = untrained_pair(Family::Lode, 4, 2, 9);
    SurrogateLogPmf q = log_pmf_of(pair);
    KlResult res = exact_kl(cfg, iota, q);
    CHECK(std::isfinite(res.kl));
    CHECK(res.kl == doctest::Approx(res.cross_entropy - res.entropy).epsilon(1e-12));
    CHECK(res.kl >= 0.0);
    CHECK(res.entropy > 0.0);
}

TEST_CASE("a surrogate matching the pushforward exactly has zero abstraction error") {
    LatticeConfig cfg{2, 2};

    // Oracle-backed lookup table: score a trajectory by its exact pushforward
    // probability under the same intervention.
    SurrogateLogPmf table = [&cfg](const AbmIntervention& iota, const AggregateTrajectory& y) {
        AbmSchedule sched = apply_to_abm(iota, cfg.horizon);
        double p = trajectory_probability(exact_pushforward(cfg, sched), y);
        return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
    };

    AbmIntervention iota;
    iota.v = {0.7, 0.4, 0.2};
    iota.a = 0.6;
    KlResult res = exact_kl(cfg, iota, table);
    CHECK(std::abs(res.kl) <= 1e-12);

    std::vector<AbmIntervention> grid{iota};
    AbmIntervention other;
    other.v = {0.3, 0.9, 0.5};
    other.a = 0.2;
    grid.push_back(other);
    CHECK(abstraction_error_on_grid(cfg, grid, table) <= 1e-12);
}

TEST_CASE("markov bound holds on a small grid") {
    LatticeConfig cfg{2, 2};
    TrainedPair pair = untrained_pair(Family::Lode, 4, 2, 10);
    SurrogateLogPmf q = log_pmf_of(pair);

    EtaDistribution init{EtaDistribution::Type::UniformInit};
    std::vector<AbmIntervention> grid = eta_grid(init, cfg.horizon);
    std::vector<double> eps{0.1, 0.5, 1.0, 2.0};
    std::vector<BoundCheck> checks = markov_bound_check(cfg, grid, q, eps);
    REQUIRE(checks.size() == 4);
    for (const BoundCheck& c : checks) {
        CHECK(c.bound == doctest::Approx(c.expected_ce / c.epsilon).epsilon(1e-12));
        CHECK(c.mass_exceeding >= 0.0);
        CHECK(c.mass_exceeding <= 1.0);
        CHECK(c.holds);
        CHECK(c.mass_exceeding <= c.bound);
    }
}
