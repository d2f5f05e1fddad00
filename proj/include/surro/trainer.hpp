#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "surro/abm.hpp"
#include "surro/interventions.hpp"
#include "surro/surrogate.hpp"

namespace surro {

struct DatasetHeader {
    int side = 0;
    int horizon = 0;
    int agents = 0;
    EtaDistribution eta;
    std::uint64_t seed = 0;
};

struct Dataset {
    DatasetHeader header;
    std::vector<Record> records;
};

// Record r is produced from an independent stream derived as split(r) of the
// master seed: first the intervention draws, then the simulator draws. The
// result does not depend on generation order or on jobs.
Dataset generate_dataset(const LatticeConfig& cfg, const EtaDistribution& eta, int count,
                         std::uint64_t seed, int jobs = 1);

struct AdamState {
    std::vector<double> m, v;
    long step = 0;
};

// One bias-corrected Adam update in place. Returns false (and leaves params
// and moments untouched) when any gradient entry is non-finite.
bool adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               double lr, double beta1, double beta2, double eps);

// Patience on strict validation decrease. The first observed epoch sets the
// running best; every later epoch either improves strictly (counter resets)
// or burns one unit of patience, so a flat curve stops after
// patience + 1 epochs.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    // Returns true when training should stop after this epoch.
    bool observe(double val);

    int best_epoch() const { return best_epoch_; }
    double best() const { return best_; }
    int epochs_seen() const { return seen_; }

private:
    int patience_;
    int seen_ = 0;
    int best_epoch_ = 0;
    int stale_ = 0;
    double best_ = 0.0;
};

struct TrainConfig {
    double lr = 1e-2;
    int max_epochs = 1000;
    int batch_size = 50;
    int patience = 20;
    int train_size = 800;
    int val_size = 200;
    int splits = 5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // A training epoch excluding more than this fraction of its records (for
    // -inf likelihood) aborts the run rather than silently fitting the rest.
    double max_excluded_frac = 0.01;
    std::uint64_t seed = 0;
};

struct SplitResult {
    int split = 0;
    ParameterStore psi; // checkpoint with the lowest validation NLL
    ParameterStore phi;
    int checkpoint_epoch = 0; // 0 means the pre-training state was never beaten
    int best_epoch = 0;       // best trained epoch per the stopper
    int stopped_epoch = 0;    // trained epochs before stopping
    double best_val = 0.0;
    std::vector<double> train_curve; // mean batch NLL per trained epoch
    std::vector<double> val_curve;   // index 0 is the pre-training validation
    long excluded_records = 0;
    long skipped_steps = 0;
};

// Mean NLL of records under (model, phi), with -inf records excluded.
struct NllEval {
    double value = 0.0;
    int excluded = 0;
};
NllEval dataset_nll(const SurrogateModel& model, const FeedForwardSpec& om_spec,
                    const ParameterStore& phi, std::span<const Record> records);

// Batch objective value and flat gradients (aligned with psi/phi flatten()).
struct BatchNllResult {
    double value = 0.0;
    std::vector<double> psi_grad, phi_grad;
    std::vector<double> record_ll;
    int excluded = 0;
};
BatchNllResult batch_nll(const SurrogateModel& model, const FeedForwardSpec& om_spec,
                         const ParameterStore& phi, std::span<const Record> records);

// Joint surrogate/translation training over independent shuffled splits of
// the dataset. Each split draws its own initial parameters, trains with Adam
// under early stopping, and returns the best-validation checkpoint.
std::vector<SplitResult> train(Family family, const Dataset& data, const TrainConfig& cfg);

// Central-difference check of the batch objective's gradient, coordinate by
// coordinate over the joint (state, translation) parameter vector. The
// differences come from an independent forward pass evaluated at escalating
// precision (double, long double, quadruple) so that rounding noise in the
// difference quotient stays well under the tolerance; cheap tiers may only
// accept, the quadruple tier issues the verdicts. Step sizes scale with the
// coordinate, h * max(1, |theta_i|), where h is a tier-specific multiple of
// `step`. Coordinates whose analytic gradient is below abs_floor are compared
// absolutely at abs_floor; everything else must match within rel_tol relative
// error. `stride` checks every stride-th coordinate (1 = all of them).
struct GradCheckConfig {
    Family family = Family::Lode;
    LatticeConfig lattice{10, 20};
    EtaDistribution eta{EtaDistribution::Type::UniformUnion, 0.5};
    int records = 10;
    double step = 1e-8;
    double rel_tol = 1e-4;
    double abs_floor = 1e-8;
    std::uint64_t seed = 0;
    int stride = 1;
};

struct GradCheckResult {
    std::size_t coords = 0;
    std::size_t failed = 0;
    double max_rel_err = 0.0;      // over coordinates compared relatively
    double max_abs_err = 0.0;      // over the near-zero coordinates
    double value = 0.0;            // objective at the base point
    bool passed = false;
    std::size_t tier_double = 0;   // resolved by the double-precision tier
    std::size_t tier_long = 0;     // resolved by the long double tier
    std::size_t tier_quad = 0;     // needed the quadruple-precision tier
};

GradCheckResult gradient_check(const GradCheckConfig& cfg);

} // namespace surro
