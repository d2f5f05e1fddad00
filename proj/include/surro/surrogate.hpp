#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "surro/interventions.hpp"
#include "surro/nets.hpp"
#include "surro/rng.hpp"
#include "surro/tape.hpp"

namespace surro {

// The three macromodel families. All emit per-step multinomial counts over
// (S, I, R), independent across steps given the intervention:
//  - Lode: emission probabilities are the Euler-integrated SIRS fractions;
//    no trainable state parameters.
//  - LodeRnn: a GRU reads the Euler fractions and a head net produces logits.
//  - Lrnn: a GRU reads the per-step parameters directly; the step-0 emission
//    is fixed at (1 - a, a, 0).
enum class Family { Lode, LodeRnn, Lrnn };

std::string to_string(Family family);
Family family_from_string(std::string_view name);

FeedForwardSpec omega_spec(Family family);
FeedForwardSpec head_spec();
GruSpec recur_spec();

std::size_t psi_parameter_count(Family family);
std::size_t joint_parameter_count(Family family); // state + translation nets

struct SurrogateModel {
    Family family = Family::Lode;
    int agents = 0;  // multinomial size per step
    int horizon = 0; // transitions; emissions cover steps 0..horizon
    ParameterStore psi;
};

SurrogateModel make_model(Family family, int agents, int horizon, RngStream& rng);
ParameterStore make_omega_params(Family family, RngStream& rng);

// One training/evaluation record: the intervention that produced a simulator
// run plus its aggregate trajectory.
struct Record {
    AbmIntervention iota;
    AggregateTrajectory y;
};

// Normalised per-step log emission probabilities under a resolved schedule.
struct EmissionResult {
    std::vector<std::array<double, 3>> log_probs;
    long clamped = 0; // rows the simplex guard had to adjust
};
EmissionResult emission_log_probs(const SurrogateModel& model, const SurrogateSchedule& sched);

// Multinomial log-pmf helpers; zero counts contribute nothing even when the
// matching probability is zero, impossible outcomes give -inf.
double mn_log_pmf(const std::array<int, 3>& counts, const std::array<double, 3>& probs);
double mn_log_pmf_from_logp(const std::array<int, 3>& counts,
                            const std::array<double, 3>& log_probs);

double log_likelihood(const SurrogateModel& model, const SurrogateSchedule& sched,
                      const AggregateTrajectory& y);

// Draws agent statuses step by step, one uniform per agent in status order.
AggregateTrajectory sample_trajectory(const SurrogateModel& model,
                                      const SurrogateSchedule& sched, RngStream& rng);

// Joint objective over a batch: mean negative log-likelihood of the records
// under the surrogate after translating each intervention through the omega
// net. Records with -inf likelihood are excluded from the mean (and counted)
// so the gradient stays finite.
struct BatchGraph {
    ad::Node loss;
    StoreLeaves psi_leaves;
    StoreLeaves phi_leaves;
    std::vector<double> record_ll;
    int excluded = 0;
};

BatchGraph build_batch_nll(ad::Tape& tape, const SurrogateModel& model,
                           const FeedForwardSpec& om_spec, const ParameterStore& phi,
                           std::span<const Record> records);

} // namespace surro
