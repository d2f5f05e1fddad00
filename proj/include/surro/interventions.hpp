#pragma once

#include <array>
#include <vector>

#include "surro/abm.hpp"
#include "surro/rng.hpp"

namespace surro {

struct FeedForwardSpec;
class ParameterStore;

enum class InterventionKind { Init, InitLock };

// Hard intervention on the simulator: pin every transition to v and the
// initial infection probability to a. InitLock additionally zeroes alpha over
// the six transitions t_lock .. t_lock + 5.
struct AbmIntervention {
    InterventionKind kind = InterventionKind::Init;
    ParamVector v;
    double a = 0.0;
    int t_lock = -1; // meaningful only for InitLock
};

// Counterpart on the surrogate, acting on the translated parameters.
struct SurrogateIntervention {
    InterventionKind kind = InterventionKind::Init;
    std::array<double, 3> v{0.0, 0.0, 0.0};
    double a = 0.0;
    int t_lock = -1;
};

// Per-step surrogate inputs after applying an intervention.
struct SurrogateSchedule {
    double i0 = 0.0;
    std::vector<std::array<double, 3>> thetas;
};

// Distribution over interventions used for training and evaluation.
// UniformInit draws (v, a) ~ U[0,1]^4 and always yields Init.
// UniformUnion mixes Init (w.p. 1 - p_lock) with InitLock (w.p. p_lock),
// where t_lock ~ U{5..10}. Draw order per sample: mixture branch (union
// only), v.alpha, v.beta, v.gamma, a, then t_lock when locked.
struct EtaDistribution {
    enum class Type { UniformInit, UniformUnion };
    Type type = Type::UniformInit;
    double p_lock = 0.5;
};

AbmIntervention sample_intervention(const EtaDistribution& eta, RngStream& rng);

// Resolve an intervention into per-step simulator inputs over horizon T.
// InitLock requires T >= t_lock + 6 so the whole window fits.
AbmSchedule apply_to_abm(const AbmIntervention& iota, int horizon);
SurrogateSchedule apply_to_surrogate(const SurrogateIntervention& iota, int horizon);

void validate_intervention(const AbmIntervention& iota, int horizon);

// Partial order on interventions by inclusion of their induced assignments.
// Two interventions here always pin the same variable set, so the only
// possible verdicts are Equal and Incomparable.
enum class InterventionOrder { Equal, Less, Greater, Incomparable };
InterventionOrder compare(const AbmIntervention& lhs, const AbmIntervention& rhs, int horizon);

// Translate a simulator intervention for the surrogate: v is mapped through
// the learned network, a and the lockdown timing carry over unchanged.
SurrogateIntervention omega_apply(const FeedForwardSpec& spec, const ParameterStore& phi,
                                  const AbmIntervention& iota);

} // namespace surro
