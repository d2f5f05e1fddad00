#include "surro/interventions.hpp"

#include <stdexcept>

#include "surro/nets.hpp"

namespace surro {

namespace {

constexpr int kLockSpan = 6;    // transitions t_lock .. t_lock + 5 lose alpha
constexpr int kLockEarliest = 5;
constexpr int kLockLatest = 10;

bool in_lock_window(int t, int t_lock) { return t >= t_lock && t < t_lock + kLockSpan; }

void check_unit(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
}

} // namespace

void validate_intervention(const AbmIntervention& iota, int horizon) {
    check_unit(iota.v.alpha, "alpha");
    check_unit(iota.v.beta, "beta");
    check_unit(iota.v.gamma, "gamma");
    check_unit(iota.a, "a");
    if (iota.kind == InterventionKind::InitLock) {
        if (iota.t_lock < kLockEarliest || iota.t_lock > kLockLatest)
            throw std::invalid_argument("t_lock must lie in {5, ..., 10}");
        if (horizon < iota.t_lock + kLockSpan)
            throw std::invalid_argument("horizon too short for the lockdown window");
    }
}

AbmIntervention sample_intervention(const EtaDistribution& eta, RngStream& rng) {
    AbmIntervention iota;
    bool locked = false;
    if (eta.type == EtaDistribution::Type::UniformUnion)
        locked = rng.uniform() < eta.p_lock;
    iota.kind = locked ? InterventionKind::InitLock : InterventionKind::Init;
    iota.v.alpha = rng.uniform();
    iota.v.beta = rng.uniform();
    iota.v.gamma = rng.uniform();
    iota.a = rng.uniform();
    if (locked) iota.t_lock = rng.uniform_int(kLockEarliest, kLockLatest);
    return iota;
}

AbmSchedule apply_to_abm(const AbmIntervention& iota, int horizon) {
    validate_intervention(iota, horizon);
    AbmSchedule sched;
    sched.i0 = iota.a;
    sched.thetas.assign(horizon, iota.v);
    if (iota.kind == InterventionKind::InitLock)
        for (int t = 0; t < horizon; ++t)
            if (in_lock_window(t, iota.t_lock)) sched.thetas[t].alpha = 0.0;
    return sched;
}

SurrogateSchedule apply_to_surrogate(const SurrogateIntervention& iota, int horizon) {
    if (iota.kind == InterventionKind::InitLock && horizon < iota.t_lock + kLockSpan)
        throw std::invalid_argument("horizon too short for the lockdown window");
    SurrogateSchedule sched;
    sched.i0 = iota.a;
    sched.thetas.assign(horizon, iota.v);
    if (iota.kind == InterventionKind::InitLock)
        for (int t = 0; t < horizon; ++t)
            if (in_lock_window(t, iota.t_lock)) sched.thetas[t][0] = 0.0;
    return sched;
}

InterventionOrder compare(const AbmIntervention& lhs, const AbmIntervention& rhs, int horizon) {
    validate_intervention(lhs, horizon);
    validate_intervention(rhs, horizon);
    // Both sides pin the same variables (every transition plus the initial
    // probability), so inclusion can only hold as full equality of the
    // induced assignments.
    AbmSchedule a = apply_to_abm(lhs, horizon);
    AbmSchedule b = apply_to_abm(rhs, horizon);
    if (a.i0 != b.i0) return InterventionOrder::Incomparable;
    for (int t = 0; t < horizon; ++t) {
        if (a.thetas[t].alpha != b.thetas[t].alpha || a.thetas[t].beta != b.thetas[t].beta ||
            a.thetas[t].gamma != b.thetas[t].gamma)
            return InterventionOrder::Incomparable;
    }
    return InterventionOrder::Equal;
}

SurrogateIntervention omega_apply(const FeedForwardSpec& spec, const ParameterStore& phi,
                                  const AbmIntervention& iota) {
    std::array<double, 3> vin{iota.v.alpha, iota.v.beta, iota.v.gamma};
    std::vector<double> vout = ff_eval(spec, phi, "omega", vin);
    if (vout.size() != 3) throw std::invalid_argument("omega net must map R^3 to R^3");
    SurrogateIntervention out;
    out.kind = iota.kind;
    out.v = {vout[0], vout[1], vout[2]};
    out.a = iota.a;
    out.t_lock = iota.t_lock;
    return out;
}

} // namespace surro
