#include <doctest.h>

#include <cmath>
#include <limits>

#include "surro/ode.hpp"
#include "surro/surrogate.hpp"

using namespace surro;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SurrogateSchedule flat_schedule(double i0, std::array<double, 3> theta, int horizon) {
    SurrogateSchedule sched;
    sched.i0 = i0;
    sched.thetas.assign(static_cast<std::size_t>(horizon), theta);
    return sched;
}

} // namespace

TEST_CASE("family names round-trip and sizes line up") {
    for (Family f : {Family::Lode, Family::LodeRnn, Family::Lrnn})
        CHECK(family_from_string(to_string(f)) == f);
    CHECK_THROWS(family_from_string("nope"));

    CHECK(psi_parameter_count(Family::Lode) == 0);
    CHECK(joint_parameter_count(Family::Lode) == 12739);
    CHECK(joint_parameter_count(Family::LodeRnn) == 13798);
    CHECK(joint_parameter_count(Family::Lrnn) == 13798);

    RngStream rng(5);
    SurrogateModel m = make_model(Family::LodeRnn, 100, 20, rng);
    CHECK(m.psi.scalar_count() == psi_parameter_count(Family::LodeRnn));
    ParameterStore phi = make_omega_params(Family::LodeRnn, rng);
    CHECK(phi.scalar_count() == parameter_count(omega_spec(Family::LodeRnn)));
}

TEST_CASE("lode emissions are the integrated mean-field fractions") {
    RngStream rng(1);
    SurrogateModel model = make_model(Family::Lode, 100, 6, rng);
    SurrogateSchedule sched = flat_schedule(0.3, {0.5, 0.2, 0.1}, 6);

    EmissionResult em = emission_log_probs(model, sched);
    REQUIRE(em.log_probs.size() == 7);
    CHECK(em.clamped == 0);

    auto traj = euler_trajectory(0.3, sched.thetas);
    for (std::size_t t = 0; t < traj.size(); ++t)
        for (int c = 0; c < 3; ++c) {
            double expected = traj[t][static_cast<std::size_t>(c)];
            double got = std::exp(em.log_probs[t][static_cast<std::size_t>(c)]);
            if (expected == 0.0)
                CHECK(got == 0.0);
            else
                CHECK(got == doctest::Approx(expected).epsilon(1e-13));
        }
}

TEST_CASE("emission rows are normalised log-probabilities for every family") {
    RngStream rng(2);
    for (Family f : {Family::Lode, Family::LodeRnn, Family::Lrnn}) {
        SurrogateModel model = make_model(f, 50, 8, rng);
        SurrogateSchedule sched = flat_schedule(0.4, {0.6, 0.3, 0.2}, 8);
        EmissionResult em = emission_log_probs(model, sched);
        REQUIRE(em.log_probs.size() == 9);
        for (const auto& row : em.log_probs) {
            double mass = 0.0;
            for (double lp : row) {
                CHECK(lp <= 1e-12); // log of a probability
                mass += lp == -kInf ? 0.0 : std::exp(lp);
            }
            CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
        }
    }
}

TEST_CASE("lrnn fixes the first emission at (1 - a, a, 0)") {
    RngStream rng(3);
    SurrogateModel model = make_model(Family::Lrnn, 30, 5, rng);
    SurrogateSchedule sched = flat_schedule(0.25, {0.5, 0.5, 0.5}, 5);
    EmissionResult em = emission_log_probs(model, sched);
    CHECK(em.log_probs[0][0] == std::log(0.75));
    CHECK(em.log_probs[0][1] == std::log(0.25));
    CHECK(em.log_probs[0][2] == -kInf);
}

TEST_CASE("multinomial log-pmf is exact and normalised at small sizes") {
    std::array<double, 3> p{0.5, 0.3, 0.2};
    CHECK(mn_log_pmf({2, 0, 0}, p) == doctest::Approx(std::log(0.25)).epsilon(1e-14));
    CHECK(mn_log_pmf({1, 1, 0}, p) == doctest::Approx(std::log(2.0 * 0.5 * 0.3)).epsilon(1e-14));

    // Zero probability with zero count contributes nothing; with a positive
    // count the outcome is impossible.
    std::array<double, 3> q{0.7, 0.3, 0.0};
    CHECK(std::isfinite(mn_log_pmf({3, 2, 0}, q)));
    CHECK(mn_log_pmf({3, 1, 1}, q) == -kInf);

    double total = 0.0;
    for (int s = 0; s <= 5; ++s)
        for (int i = 0; s + i <= 5; ++i) total += std::exp(mn_log_pmf({s, i, 5 - s - i}, p));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));

    std::array<double, 3> logp{std::log(0.5), std::log(0.3), std::log(0.2)};
    CHECK(mn_log_pmf_from_logp({2, 2, 1}, logp) ==
          doctest::Approx(mn_log_pmf({2, 2, 1}, p)).epsilon(1e-13));
}

TEST_CASE("sampling is deterministic, conserves agents, and follows the first emission") {
    RngStream rng(4);
    SurrogateModel model = make_model(Family::Lode, 100, 10, rng);
    SurrogateSchedule sched = flat_schedule(0.2, {0.7, 0.3, 0.1}, 10);

    RngStream a(99), b(99);
    AggregateTrajectory ya = sample_trajectory(model, sched, a);
    AggregateTrajectory yb = sample_trajectory(model, sched, b);
    REQUIRE(ya.counts.size() == 11);
    CHECK(ya.counts == yb.counts);
    for (const auto& c : ya.counts) CHECK(c[0] + c[1] + c[2] == 100);
    CHECK(ya.counts[0][2] == 0); // no recovered mass at step 0
}

TEST_CASE("log-likelihood decomposes over steps") {
    RngStream rng(6);
    SurrogateModel model = make_model(Family::LodeRnn, 40, 4, rng);
    SurrogateSchedule sched = flat_schedule(0.3, {0.5, 0.4, 0.3}, 4);
    RngStream sampler(7);
    AggregateTrajectory y = sample_trajectory(model, sched, sampler);

    EmissionResult em = emission_log_probs(model, sched);
    double manual = 0.0;
    for (std::size_t t = 0; t < y.counts.size(); ++t)
        manual += mn_log_pmf_from_logp(y.counts[t], em.log_probs[t]);
    CHECK(log_likelihood(model, sched, y) == doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("batch objective matches the record-by-record likelihood") {
    RngStream rng(8);
    for (Family f : {Family::Lode, Family::LodeRnn, Family::Lrnn}) {
        // Horizon 16 accommodates the latest lockdown window (10 .. 15).
        SurrogateModel model = make_model(f, 25, 16, rng);
        ParameterStore phi = make_omega_params(f, rng);
        FeedForwardSpec spec = omega_spec(f);

        // Mix plain and lockdown interventions so the masked parameter path
        // is exercised too.
        std::vector<Record> records;
        RngStream sim(10);
        EtaDistribution eta{EtaDistribution::Type::UniformUnion, 0.5};
        for (int r = 0; r < 6; ++r) {
            Record rec;
            rec.iota = sample_intervention(eta, sim);
            SurrogateIntervention si = omega_apply(spec, phi, rec.iota);
            SurrogateSchedule sched = apply_to_surrogate(si, model.horizon);
            rec.y = sample_trajectory(model, sched, sim);
            records.push_back(rec);
        }

        ad::Tape tape;
        BatchGraph graph = build_batch_nll(tape, model, spec, phi, records);
        REQUIRE(graph.record_ll.size() == records.size());
        CHECK(graph.excluded == 0);

        double mean_nll = 0.0;
        for (std::size_t r = 0; r < records.size(); ++r) {
            SurrogateIntervention si = omega_apply(spec, phi, records[r].iota);
            SurrogateSchedule sched = apply_to_surrogate(si, model.horizon);
            double plain = log_likelihood(model, sched, records[r].y);
            CHECK(graph.record_ll[r] == doctest::Approx(plain).epsilon(1e-10));
            mean_nll -= plain / static_cast<double>(records.size());
        }
        CHECK(tape.val(graph.loss).v[0] == doctest::Approx(mean_nll).epsilon(1e-10));

        // Gradients exist for every trainable tensor and are finite.
        tape.backward(graph.loss);
        for (double g : collect_grads(tape, graph.phi_leaves)) CHECK(std::isfinite(g));
        for (double g : collect_grads(tape, graph.psi_leaves)) CHECK(std::isfinite(g));
    }
}

TEST_CASE("impossible records are excluded from the batch mean") {
    RngStream rng(11);
    SurrogateModel model = make_model(Family::Lrnn, 10, 8, rng);
    ParameterStore phi = make_omega_params(Family::Lrnn, rng);
    FeedForwardSpec spec = omega_spec(Family::Lrnn);

    // a = 0 makes any infected count at step 0 impossible under this family.
    Record good;
    good.iota.kind = InterventionKind::Init;
    good.iota.v = {0.5, 0.5, 0.5};
    good.iota.a = 0.4;
    {
        SurrogateIntervention si = omega_apply(spec, phi, good.iota);
        RngStream sampler(12);
        good.y = sample_trajectory(model, apply_to_surrogate(si, model.horizon), sampler);
    }
    Record bad = good;
    bad.iota.a = 0.0;

    ad::Tape tape;
    std::vector<Record> records{good, bad};
    // Force the bad record to be impossible at step 0.
    records[1].y.counts[0] = {9, 1, 0};
    BatchGraph graph = build_batch_nll(tape, model, spec, phi, records);
    CHECK(graph.excluded == 1);
    CHECK(graph.record_ll[1] == -kInf);
    CHECK(std::isfinite(tape.val(graph.loss).v[0]));
    // Mean over the single kept record.
    CHECK(tape.val(graph.loss).v[0] == doctest::Approx(-graph.record_ll[0]).epsilon(1e-12));

    tape.backward(graph.loss);
    for (double g : collect_grads(tape, graph.phi_leaves)) CHECK(std::isfinite(g));
    for (double g : collect_grads(tape, graph.psi_leaves)) CHECK(std::isfinite(g));
}

TEST_CASE("batch build validates record shapes") {
    RngStream rng(13);
    SurrogateModel model = make_model(Family::Lode, 10, 5, rng);
    ParameterStore phi = make_omega_params(Family::Lode, rng);
    FeedForwardSpec spec = omega_spec(Family::Lode);

    Record rec;
    rec.iota.v = {0.5, 0.5, 0.5};
    rec.iota.a = 0.3;
    rec.y.counts.assign(6, {10, 0, 0});
    rec.y.counts[2] = {9, 2, 0}; // totals 11, not the configured 10

    ad::Tape tape;
    std::vector<Record> records{rec};
    CHECK_THROWS(build_batch_nll(tape, model, spec, phi, records));

    rec.y.counts[2] = {10, 0, 0};
    rec.y.counts.pop_back(); // wrong horizon
    ad::Tape tape2;
    std::vector<Record> records2{rec};
    CHECK_THROWS(build_batch_nll(tape2, model, spec, phi, records2));
}
