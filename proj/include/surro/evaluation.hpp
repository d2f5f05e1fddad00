#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "surro/oracle.hpp"
#include "surro/surrogate.hpp"
#include "surro/trainer.hpp"

namespace surro {

// A trained surrogate together with its translation-net parameters.
struct TrainedPair {
    SurrogateModel model;
    ParameterStore phi;
};

// Log-likelihood of a simulator record after translating the intervention.
double record_log_likelihood(const TrainedPair& pair, const AbmIntervention& iota,
                             const AggregateTrajectory& y);

// Average mean squared error between sampled surrogate trajectories and the
// recorded ones, normalised by agents^2 and per-step:
//   (1 / (N^2 R k)) sum_r sum_s mean_t || ytilde_t - y_t ||^2.
// Record r, sample s uses the stream seed.split(r).split(s).
double amse(const TrainedPair& pair, std::span<const Record> records, std::uint64_t seed,
            int samples_per_record = 1);

// Mean negative log-likelihood over records with finite likelihood;
// impossible records are counted separately, never averaged in.
struct AnllResult {
    double value = 0.0;
    int infinite_records = 0;
};
AnllResult anll(const TrainedPair& pair, std::span<const Record> records);

struct Quartiles {
    double q1 = 0.0, med = 0.0, q3 = 0.0;
};
// Nearest-rank quartiles of the sorted values (for five entries: the 2nd,
// 3rd and 4th).
Quartiles quartiles(std::vector<double> values);

struct MetricsRow {
    Family family = Family::Lode;
    EtaDistribution::Type train_eta = EtaDistribution::Type::UniformUnion;
    EtaDistribution::Type test_eta = EtaDistribution::Type::UniformUnion;
    Quartiles anll_q;
    Quartiles amse_q;
    std::vector<double> anll_splits; // per split, in split order
    std::vector<double> amse_splits;
    int infinite_records = 0; // summed over splits
};

struct TableConfig {
    LatticeConfig lattice{10, 20};
    int train_records = 1000;
    int test_records = 1000;
    TrainConfig train;
    double p_lock = 0.5;
    std::uint64_t data_seed = 1;
    std::uint64_t eval_seed = 2;
    int amse_samples = 1;
    int jobs = 1;
};

// Called once per (family, training regime) with the freshly trained splits,
// before they are evaluated. Lets callers keep checkpoints the table run
// would otherwise discard.
using TrainingObserver =
    std::function<void(Family, EtaDistribution::Type, std::span<const SplitResult>)>;

// Full metric grid: three families x two training regimes (intervention
// mixture vs init-only), each evaluated on both held-out test sets. Rows are
// ordered family-major, then train regime (union first), then test set
// (union first).
std::vector<MetricsRow> reproduce_table(const TableConfig& cfg,
                                        const TrainingObserver& observer = {});

// Lockdown counterfactual: mean infected per step under the locked and
// unlocked variants of one intervention, from the simulator (sample mean
// over `runs`) and from the surrogate (exact emission expectation).
struct CounterfactualCurves {
    std::vector<double> abm_lock, abm_nolock;
    std::vector<double> sur_lock, sur_nolock;
};
CounterfactualCurves lockdown_counterfactual(const TrainedPair& pair, const LatticeConfig& cfg,
                                             const AbmIntervention& locked, int runs,
                                             std::uint64_t seed);

// Mean over steps of (nolock - lock) infected counts.
struct CounterfactualGap {
    double abm = 0.0;
    double surrogate = 0.0;
};
CounterfactualGap counterfactual_gap(const CounterfactualCurves& curves);

// Surrogate trajectory log-pmf as a function of the raw intervention, the
// shape the exact error analysis consumes. Lets lookup-table surrogates plug
// into the same machinery as trained ones.
using SurrogateLogPmf =
    std::function<double(const AbmIntervention&, const AggregateTrajectory&)>;

SurrogateLogPmf log_pmf_of(const TrainedPair& pair);

// KL(P || Q), cross-entropy and entropy of the exact simulator pushforward P
// against the surrogate Q under one intervention, by full enumeration.
struct KlResult {
    double kl = 0.0;
    double cross_entropy = 0.0;
    double entropy = 0.0;
};
KlResult exact_kl(const LatticeConfig& cfg, const AbmIntervention& iota, const SurrogateLogPmf& q);

// Deterministic grid discretisation of eta: v and a over {0, 1/2, 1}^4, plus
// every t_lock in {5..10} that fits the horizon when eta includes lockdowns.
std::vector<AbmIntervention> eta_grid(const EtaDistribution& eta, int horizon);

// Mean KL over the grid points (the abstraction error under the discretised
// eta).
double abstraction_error_on_grid(const LatticeConfig& cfg,
                                 std::span<const AbmIntervention> grid,
                                 const SurrogateLogPmf& q);

// Markov bound P(KL >= eps) <= E[CE] / eps checked pointwise on the grid.
struct BoundCheck {
    double epsilon = 0.0;
    double mass_exceeding = 0.0; // fraction of grid points with KL >= eps
    double expected_ce = 0.0;
    double bound = 0.0; // expected_ce / eps
    bool holds = false;
};
std::vector<BoundCheck> markov_bound_check(const LatticeConfig& cfg,
                                           std::span<const AbmIntervention> grid,
                                           const SurrogateLogPmf& q,
                                           std::span<const double> epsilons);

} // namespace surro
