#include "surro/surrogate.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace surro {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kHidden = 32;

void check_unit(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
}

// Emission nodes per step. For Lrnn the step-0 emission is a fixed
// distribution, recorded value-side instead of as a node.
struct EmissionNodes {
    std::vector<ad::Node> steps;
    bool logits = false;
    std::vector<std::array<double, 3>> t0_logp;
};

EmissionNodes build_emission_nodes(ad::Tape& tp, const SurrogateModel& model,
                                   const StoreLeaves& psi, const std::vector<ad::Node>& thetas,
                                   std::span<const double> i0s) {
    std::size_t batch = i0s.size();
    int horizon = model.horizon;
    EmissionNodes em;
    em.steps.resize(horizon + 1);

    auto initial_fractions = [&] {
        ad::Tensor z0(batch, 3);
        for (std::size_t r = 0; r < batch; ++r) {
            z0.at(r, 0) = 1.0 - i0s[r];
            z0.at(r, 1) = i0s[r];
        }
        return tp.constant(std::move(z0));
    };

    switch (model.family) {
    case Family::Lode: {
        ad::Node z = initial_fractions();
        em.steps[0] = tp.clamp_simplex(z);
        for (int t = 1; t <= horizon; ++t) {
            z = tp.sirs_euler_step(z, thetas[t - 1], 1.0);
            em.steps[t] = tp.clamp_simplex(z);
        }
        break;
    }
    case Family::LodeRnn: {
        em.logits = true;
        FeedForwardSpec head = head_spec();
        ad::Node z = initial_fractions();
        ad::Node h = tp.constant(ad::Tensor(batch, kHidden));
        for (int t = 0; t <= horizon; ++t) {
            if (t > 0) z = tp.sirs_euler_step(z, thetas[t - 1], 1.0);
            h = gru_step(tp, psi, "gru", z, h);
            em.steps[t] = ff_forward(tp, head, psi, "head", h);
        }
        break;
    }
    case Family::Lrnn: {
        em.logits = true;
        FeedForwardSpec head = head_spec();
        em.t0_logp.resize(batch);
        ad::Tensor h0(batch, kHidden);
        for (std::size_t r = 0; r < batch; ++r) {
            h0.at(r, 0) = 1.0 - i0s[r];
            h0.at(r, 1) = i0s[r];
            em.t0_logp[r] = {std::log(1.0 - i0s[r]), std::log(i0s[r]), -kInf};
        }
        ad::Node h = tp.constant(std::move(h0));
        for (int t = 1; t <= horizon; ++t) {
            h = gru_step(tp, psi, "gru", thetas[t - 1], h);
            em.steps[t] = ff_forward(tp, head, psi, "head", h);
        }
        break;
    }
    }
    return em;
}

std::array<double, 3> softmax3(const double* o) {
    double m = std::max(o[0], std::max(o[1], o[2]));
    double e0 = std::exp(o[0] - m), e1 = std::exp(o[1] - m), e2 = std::exp(o[2] - m);
    double z = e0 + e1 + e2;
    return {e0 / z, e1 / z, e2 / z};
}

void validate_schedule_shape(const SurrogateModel& model, const SurrogateSchedule& sched) {
    if (static_cast<int>(sched.thetas.size()) != model.horizon)
        throw std::invalid_argument("schedule needs exactly one parameter vector per transition");
    check_unit(sched.i0, "i0");
}

// Shared single-record evaluation: emissions as probabilities.
struct ProbsResult {
    std::vector<std::array<double, 3>> probs;
    long clamped = 0;
};

ProbsResult eval_probs(const SurrogateModel& model, const SurrogateSchedule& sched) {
    validate_schedule_shape(model, sched);
    ad::Tape tp;
    StoreLeaves psi = register_store(tp, model.psi);
    std::vector<ad::Node> thetas(model.horizon);
    for (int t = 0; t < model.horizon; ++t) {
        ad::Tensor th(1, 3);
        for (int j = 0; j < 3; ++j) th.v[j] = sched.thetas[t][j];
        thetas[t] = tp.constant(std::move(th));
    }
    double i0 = sched.i0;
    EmissionNodes em = build_emission_nodes(tp, model, psi, thetas, std::span(&i0, 1));

    ProbsResult res;
    res.probs.resize(model.horizon + 1);
    for (int t = 0; t <= model.horizon; ++t) {
        if (!em.steps[t].valid()) { // Lrnn step 0
            res.probs[t] = {1.0 - i0, i0, 0.0};
            continue;
        }
        const ad::Tensor& v = tp.val(em.steps[t]);
        if (em.logits)
            res.probs[t] = softmax3(&v.v[0]);
        else
            res.probs[t] = {v.v[0], v.v[1], v.v[2]};
    }
    res.clamped = tp.clamp_events();
    return res;
}

void validate_counts(const SurrogateModel& model, const AggregateTrajectory& y) {
    if (static_cast<int>(y.counts.size()) != model.horizon + 1)
        throw std::invalid_argument("trajectory length does not match the model horizon");
    for (const auto& c : y.counts) {
        if (c[0] < 0 || c[1] < 0 || c[2] < 0 || c[0] + c[1] + c[2] != model.agents)
            throw std::invalid_argument("step counts must be non-negative and sum to the "
                                        "agent count");
    }
}

} // namespace

std::string to_string(Family family) {
    switch (family) {
    case Family::Lode: return "lode";
    case Family::LodeRnn: return "lodernn";
    case Family::Lrnn: return "lrnn";
    }
    throw std::logic_error("unreachable");
}

Family family_from_string(std::string_view name) {
    if (name == "lode") return Family::Lode;
    if (name == "lodernn") return Family::LodeRnn;
    if (name == "lrnn") return Family::Lrnn;
    throw std::invalid_argument("unknown family: " + std::string(name));
}

FeedForwardSpec omega_spec(Family family) {
    FeedForwardSpec spec;
    spec.output = FeedForwardSpec::Output::Sigmoid;
    if (family == Family::Lode)
        spec.widths = {3, 32, 64, 64, 64, 32, 3};
    else
        spec.widths = {3, 32, 64, 32, 3};
    return spec;
}

FeedForwardSpec head_spec() {
    FeedForwardSpec spec;
    spec.widths = {32, 32, 64, 32, 16, 3};
    spec.output = FeedForwardSpec::Output::Identity;
    return spec;
}

GruSpec recur_spec() { return GruSpec{3, kHidden}; }

std::size_t psi_parameter_count(Family family) {
    if (family == Family::Lode) return 0;
    return parameter_count(recur_spec()) + parameter_count(head_spec());
}

std::size_t joint_parameter_count(Family family) {
    return psi_parameter_count(family) + parameter_count(omega_spec(family));
}

SurrogateModel make_model(Family family, int agents, int horizon, RngStream& rng) {
    if (agents < 1 || horizon < 0)
        throw std::invalid_argument("model needs at least one agent and a non-negative horizon");
    SurrogateModel model;
    model.family = family;
    model.agents = agents;
    model.horizon = horizon;
    if (family != Family::Lode) {
        init_gru(model.psi, "gru", recur_spec(), rng);
        init_feed_forward(model.psi, "head", head_spec(), rng);
    }
    return model;
}

ParameterStore make_omega_params(Family family, RngStream& rng) {
    ParameterStore phi;
    init_feed_forward(phi, "omega", omega_spec(family), rng);
    return phi;
}

EmissionResult emission_log_probs(const SurrogateModel& model, const SurrogateSchedule& sched) {
    ProbsResult pr = eval_probs(model, sched);
    EmissionResult res;
    res.clamped = pr.clamped;
    res.log_probs.resize(pr.probs.size());
    for (std::size_t t = 0; t < pr.probs.size(); ++t)
        for (int j = 0; j < 3; ++j)
            res.log_probs[t][j] = pr.probs[t][j] > 0.0 ? std::log(pr.probs[t][j]) : -kInf;
    return res;
}

double mn_log_pmf(const std::array<int, 3>& counts, const std::array<double, 3>& probs) {
    int n = counts[0] + counts[1] + counts[2];
    double ll = ad::log_factorial(n);
    for (int j = 0; j < 3; ++j) {
        ll -= ad::log_factorial(counts[j]);
        if (counts[j] == 0) continue;
        if (probs[j] <= 0.0) return -kInf;
        ll += counts[j] * std::log(probs[j]);
    }
    return ll;
}

double mn_log_pmf_from_logp(const std::array<int, 3>& counts,
                            const std::array<double, 3>& log_probs) {
    int n = counts[0] + counts[1] + counts[2];
    double ll = ad::log_factorial(n);
    for (int j = 0; j < 3; ++j) {
        ll -= ad::log_factorial(counts[j]);
        if (counts[j] == 0) continue;
        if (log_probs[j] == -kInf) return -kInf;
        ll += counts[j] * log_probs[j];
    }
    return ll;
}

double log_likelihood(const SurrogateModel& model, const SurrogateSchedule& sched,
                      const AggregateTrajectory& y) {
    validate_counts(model, y);
    EmissionResult em = emission_log_probs(model, sched);
    double ll = 0.0;
    for (std::size_t t = 0; t < em.log_probs.size(); ++t) {
        double term = mn_log_pmf_from_logp(y.counts[t], em.log_probs[t]);
        if (term == -kInf) return -kInf;
        ll += term;
    }
    return ll;
}

AggregateTrajectory sample_trajectory(const SurrogateModel& model,
                                      const SurrogateSchedule& sched, RngStream& rng) {
    ProbsResult pr = eval_probs(model, sched);
    AggregateTrajectory y;
    y.counts.reserve(pr.probs.size());
    for (const auto& p : pr.probs) {
        double c0 = p[0], c1 = p[0] + p[1];
        std::array<int, 3> counts{0, 0, 0};
        for (int i = 0; i < model.agents; ++i) {
            double u = rng.uniform();
            if (u < c0)
                ++counts[0];
            else if (u < c1)
                ++counts[1];
            else
                ++counts[2];
        }
        y.counts.push_back(counts);
    }
    return y;
}

BatchGraph build_batch_nll(ad::Tape& tape, const SurrogateModel& model,
                           const FeedForwardSpec& om_spec, const ParameterStore& phi,
                           std::span<const Record> records) {
    if (records.empty()) throw std::invalid_argument("batch must be non-empty");
    std::size_t batch = records.size();
    int horizon = model.horizon;
    for (const Record& rec : records) {
        validate_intervention(rec.iota, horizon);
        validate_counts(model, rec.y);
    }

    BatchGraph g;
    g.psi_leaves = register_store(tape, model.psi);
    g.phi_leaves = register_store(tape, phi);

    // Translate every intervention's v through the omega net in one batch.
    ad::Tensor vin(batch, 3);
    std::vector<double> i0s(batch);
    for (std::size_t r = 0; r < batch; ++r) {
        vin.at(r, 0) = records[r].iota.v.alpha;
        vin.at(r, 1) = records[r].iota.v.beta;
        vin.at(r, 2) = records[r].iota.v.gamma;
        i0s[r] = records[r].iota.a;
    }
    ad::Node theta_tilde = ff_forward(tape, om_spec, g.phi_leaves, "omega",
                                      tape.constant(std::move(vin)));

    // Per-transition parameters; lockdown windows zero the infection rate.
    std::vector<ad::Node> thetas(horizon);
    for (int t = 0; t < horizon; ++t) {
        bool any_locked = false;
        ad::Tensor mask(batch, 3, 1.0);
        for (std::size_t r = 0; r < batch; ++r) {
            const AbmIntervention& iota = records[r].iota;
            if (iota.kind == InterventionKind::InitLock && t >= iota.t_lock &&
                t < iota.t_lock + 6) {
                mask.at(r, 0) = 0.0;
                any_locked = true;
            }
        }
        thetas[t] = any_locked ? tape.mul(theta_tilde, tape.constant(std::move(mask)))
                               : theta_tilde;
    }

    EmissionNodes em = build_emission_nodes(tape, model, g.psi_leaves, thetas, i0s);

    ad::Node ll{};
    if (model.family == Family::Lrnn) {
        ad::Tensor t0(batch, 1);
        for (std::size_t r = 0; r < batch; ++r)
            t0.v[r] = mn_log_pmf_from_logp(records[r].y.counts[0], em.t0_logp[r]);
        ll = tape.constant(std::move(t0));
    }
    std::vector<std::array<int, 3>> counts(batch);
    for (int t = 0; t <= horizon; ++t) {
        if (!em.steps[t].valid()) continue;
        for (std::size_t r = 0; r < batch; ++r) counts[r] = records[r].y.counts[t];
        ad::Node term = em.logits ? tape.mn_logpmf_logits(counts, em.steps[t])
                                  : tape.mn_logpmf_probs(counts, em.steps[t]);
        ll = ll.valid() ? tape.add(ll, term) : term;
    }

    const ad::Tensor& llv = tape.val(ll);
    g.record_ll.assign(llv.v.begin(), llv.v.end());
    ad::Tensor w(batch, 1);
    int kept = 0;
    for (std::size_t r = 0; r < batch; ++r)
        if (std::isfinite(g.record_ll[r])) ++kept;
    g.excluded = static_cast<int>(batch) - kept;
    if (kept > 0) {
        for (std::size_t r = 0; r < batch; ++r)
            if (std::isfinite(g.record_ll[r])) w.v[r] = -1.0 / kept;
    }
    g.loss = tape.weighted_sum(ll, std::move(w));
    return g;
}

} // namespace surro
