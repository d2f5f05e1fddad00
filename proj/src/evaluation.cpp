#include "surro/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace surro {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kEvalChunk = 200; // records per likelihood tape

SurrogateSchedule translate(const TrainedPair& pair, const AbmIntervention& iota) {
    SurrogateIntervention tilde = omega_apply(omega_spec(pair.model.family), pair.phi, iota);
    return apply_to_surrogate(tilde, pair.model.horizon);
}

} // namespace

double record_log_likelihood(const TrainedPair& pair, const AbmIntervention& iota,
                             const AggregateTrajectory& y) {
    return log_likelihood(pair.model, translate(pair, iota), y);
}

double amse(const TrainedPair& pair, std::span<const Record> records, std::uint64_t seed,
            int samples_per_record) {
    if (records.empty()) throw std::invalid_argument("amse needs at least one record");
    if (samples_per_record < 1) throw std::invalid_argument("samples_per_record must be positive");
    RngStream master(seed);
    double n2 = static_cast<double>(pair.model.agents) * pair.model.agents;
    double acc = 0.0;
    for (std::size_t r = 0; r < records.size(); ++r) {
        SurrogateSchedule sched = translate(pair, records[r].iota);
        RngStream rec_stream = master.split(r);
        for (int s = 0; s < samples_per_record; ++s) {
            RngStream rng = rec_stream.split(static_cast<std::uint64_t>(s));
            AggregateTrajectory ytilde = sample_trajectory(pair.model, sched, rng);
            double per_step = 0.0;
            for (std::size_t t = 0; t < ytilde.counts.size(); ++t) {
                for (int j = 0; j < 3; ++j) {
                    double d = ytilde.counts[t][j] - records[r].y.counts[t][j];
                    per_step += d * d;
                }
            }
            acc += per_step / static_cast<double>(ytilde.counts.size());
        }
    }
    return acc / (n2 * static_cast<double>(records.size()) * samples_per_record);
}

AnllResult anll(const TrainedPair& pair, std::span<const Record> records) {
    if (records.empty()) throw std::invalid_argument("anll needs at least one record");
    FeedForwardSpec om = omega_spec(pair.model.family);
    double sum = 0.0;
    long kept = 0;
    AnllResult res;
    for (std::size_t off = 0; off < records.size(); off += kEvalChunk) {
        std::size_t hi = std::min(records.size(), off + kEvalChunk);
        ad::Tape tape;
        BatchGraph g = build_batch_nll(tape, pair.model, om, pair.phi,
                                       records.subspan(off, hi - off));
        for (double ll : g.record_ll) {
            if (std::isfinite(ll)) {
                sum -= ll;
                ++kept;
            } else {
                ++res.infinite_records;
            }
        }
    }
    res.value = kept > 0 ? sum / kept : kInf;
    return res;
}

Quartiles quartiles(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("quartiles of an empty set");
    std::sort(values.begin(), values.end());
    auto rank = [&](double p) {
        std::size_t idx = static_cast<std::size_t>(
            std::ceil(p * static_cast<double>(values.size())));
        return values[std::max<std::size_t>(idx, 1) - 1];
    };
    return Quartiles{rank(0.25), rank(0.5), rank(0.75)};
}

std::vector<MetricsRow> reproduce_table(const TableConfig& cfg,
                                        const TrainingObserver& observer) {
    EtaDistribution eta_union{EtaDistribution::Type::UniformUnion, cfg.p_lock};
    EtaDistribution eta_init{EtaDistribution::Type::UniformInit, cfg.p_lock};

    RngStream data_master(cfg.data_seed);
    Dataset train_union = generate_dataset(cfg.lattice, eta_union, cfg.train_records,
                                           data_master.split(0).seed(), cfg.jobs);
    Dataset train_init = generate_dataset(cfg.lattice, eta_init, cfg.train_records,
                                          data_master.split(1).seed(), cfg.jobs);
    Dataset test_union = generate_dataset(cfg.lattice, eta_union, cfg.test_records,
                                          data_master.split(2).seed(), cfg.jobs);
    Dataset test_init = generate_dataset(cfg.lattice, eta_init, cfg.test_records,
                                         data_master.split(3).seed(), cfg.jobs);

    RngStream train_seeds(cfg.train.seed);
    RngStream eval_master(cfg.eval_seed);

    std::vector<MetricsRow> rows;
    int pair_index = 0;
    for (Family family : {Family::Lode, Family::LodeRnn, Family::Lrnn}) {
        for (const Dataset* train_set : {&train_union, &train_init}) {
            TrainConfig tc = cfg.train;
            tc.seed = train_seeds.split(static_cast<std::uint64_t>(pair_index)).seed();
            std::vector<SplitResult> splits = train(family, *train_set, tc);
            if (observer) observer(family, train_set->header.eta.type, splits);

            int test_index = 0;
            for (const Dataset* test_set : {&test_union, &test_init}) {
                MetricsRow row;
                row.family = family;
                row.train_eta = train_set->header.eta.type;
                row.test_eta = test_set->header.eta.type;
                for (const SplitResult& sr : splits) {
                    TrainedPair pair;
                    pair.model.family = family;
                    pair.model.agents = cfg.lattice.agents();
                    pair.model.horizon = cfg.lattice.horizon;
                    pair.model.psi = sr.psi;
                    pair.phi = sr.phi;
                    AnllResult a = anll(pair, test_set->records);
                    row.anll_splits.push_back(a.value);
                    row.infinite_records += a.infinite_records;
                    std::uint64_t amse_seed =
                        eval_master.split(static_cast<std::uint64_t>(pair_index))
                            .split(static_cast<std::uint64_t>(test_index))
                            .split(static_cast<std::uint64_t>(sr.split))
                            .seed();
                    row.amse_splits.push_back(
                        amse(pair, test_set->records, amse_seed, cfg.amse_samples));
                }
                row.anll_q = quartiles(row.anll_splits);
                row.amse_q = quartiles(row.amse_splits);
                rows.push_back(std::move(row));
                ++test_index;
            }
            ++pair_index;
        }
    }
    return rows;
}

CounterfactualCurves lockdown_counterfactual(const TrainedPair& pair, const LatticeConfig& cfg,
                                             const AbmIntervention& locked, int runs,
                                             std::uint64_t seed) {
    if (locked.kind != InterventionKind::InitLock)
        throw std::invalid_argument("counterfactual needs a lockdown intervention");
    if (runs < 1) throw std::invalid_argument("runs must be positive");
    AbmIntervention unlocked = locked;
    unlocked.kind = InterventionKind::Init;
    unlocked.t_lock = -1;

    CounterfactualCurves curves;
    int steps = cfg.horizon + 1;
    RngStream master(seed);
    // Both arms replay the same draws per replicate (common random numbers),
    // so the curves are identical until the lockdown takes effect and the
    // estimated gap reflects only the divergence it causes.
    AbmSchedule lock_sched = apply_to_abm(locked, cfg.horizon);
    AbmSchedule nolock_sched = apply_to_abm(unlocked, cfg.horizon);
    curves.abm_lock.assign(steps, 0.0);
    curves.abm_nolock.assign(steps, 0.0);
    for (int r = 0; r < runs; ++r) {
        RngStream lock_rng = master.split(static_cast<std::uint64_t>(r));
        RngStream nolock_rng = lock_rng;
        AggregateTrajectory y_lock = aggregate(simulate(cfg, lock_sched, lock_rng));
        AggregateTrajectory y_nolock = aggregate(simulate(cfg, nolock_sched, nolock_rng));
        for (int t = 0; t < steps; ++t) {
            curves.abm_lock[t] += y_lock.counts[t][1];
            curves.abm_nolock[t] += y_nolock.counts[t][1];
        }
    }
    for (double& m : curves.abm_lock) m /= runs;
    for (double& m : curves.abm_nolock) m /= runs;

    auto sur_mean = [&](const AbmIntervention& iota) {
        SurrogateSchedule sched = translate(pair, iota);
        EmissionResult em = emission_log_probs(pair.model, sched);
        std::vector<double> mean(steps, 0.0);
        for (int t = 0; t < steps; ++t) {
            double p = em.log_probs[t][1] == -kInf ? 0.0 : std::exp(em.log_probs[t][1]);
            mean[t] = p * pair.model.agents;
        }
        return mean;
    };
    curves.sur_lock = sur_mean(locked);
    curves.sur_nolock = sur_mean(unlocked);
    return curves;
}

CounterfactualGap counterfactual_gap(const CounterfactualCurves& curves) {
    CounterfactualGap gap;
    std::size_t steps = curves.abm_lock.size();
    for (std::size_t t = 0; t < steps; ++t) {
        gap.abm += curves.abm_nolock[t] - curves.abm_lock[t];
        gap.surrogate += curves.sur_nolock[t] - curves.sur_lock[t];
    }
    gap.abm /= static_cast<double>(steps);
    gap.surrogate /= static_cast<double>(steps);
    return gap;
}

SurrogateLogPmf log_pmf_of(const TrainedPair& pair) {
    return [&pair](const AbmIntervention& iota, const AggregateTrajectory& y) {
        return record_log_likelihood(pair, iota, y);
    };
}

KlResult exact_kl(const LatticeConfig& cfg, const AbmIntervention& iota,
                  const SurrogateLogPmf& q) {
    PushforwardResult p = exact_pushforward(cfg, apply_to_abm(iota, cfg.horizon));
    KlResult res;
    for (const auto& [y, mass] : p.outcomes) {
        double logp = std::log(mass);
        double logq = q(iota, y);
        res.entropy -= mass * logp;
        if (logq == -kInf) {
            res.cross_entropy = kInf;
            res.kl = kInf;
        } else if (res.cross_entropy != kInf) {
            res.cross_entropy -= mass * logq;
        }
    }
    if (res.cross_entropy != kInf) res.kl = res.cross_entropy - res.entropy;
    return res;
}

std::vector<AbmIntervention> eta_grid(const EtaDistribution& eta, int horizon) {
    const double levels[3] = {0.0, 0.5, 1.0};
    std::vector<AbmIntervention> grid;
    for (double al : levels)
        for (double be : levels)
            for (double ga : levels)
                for (double a : levels) {
                    AbmIntervention iota;
                    iota.v = ParamVector{al, be, ga};
                    iota.a = a;
                    grid.push_back(iota);
                    if (eta.type != EtaDistribution::Type::UniformUnion) continue;
                    for (int tl = 5; tl <= 10; ++tl) {
                        if (horizon < tl + 6) continue;
                        AbmIntervention lock = iota;
                        lock.kind = InterventionKind::InitLock;
                        lock.t_lock = tl;
                        grid.push_back(lock);
                    }
                }
    return grid;
}

double abstraction_error_on_grid(const LatticeConfig& cfg,
                                 std::span<const AbmIntervention> grid,
                                 const SurrogateLogPmf& q) {
    if (grid.empty()) throw std::invalid_argument("empty intervention grid");
    double acc = 0.0;
    for (const AbmIntervention& iota : grid) {
        KlResult kl = exact_kl(cfg, iota, q);
        if (kl.kl == kInf) return kInf;
        acc += kl.kl;
    }
    return acc / static_cast<double>(grid.size());
}

std::vector<BoundCheck> markov_bound_check(const LatticeConfig& cfg,
                                           std::span<const AbmIntervention> grid,
                                           const SurrogateLogPmf& q,
                                           std::span<const double> epsilons) {
    if (grid.empty()) throw std::invalid_argument("empty intervention grid");
    std::vector<KlResult> kls;
    kls.reserve(grid.size());
    for (const AbmIntervention& iota : grid) kls.push_back(exact_kl(cfg, iota, q));

    double ce_sum = 0.0;
    for (const KlResult& k : kls) ce_sum += k.cross_entropy;
    double expected_ce = ce_sum / static_cast<double>(kls.size());

    std::vector<BoundCheck> checks;
    for (double eps : epsilons) {
        BoundCheck c;
        c.epsilon = eps;
        int over = 0;
        for (const KlResult& k : kls)
            if (k.kl >= eps) ++over;
        c.mass_exceeding = static_cast<double>(over) / static_cast<double>(kls.size());
        c.expected_ce = expected_ce;
        c.bound = expected_ce / eps;
        c.holds = c.mass_exceeding <= c.bound;
        checks.push_back(c);
    }
    return checks;
}

} // namespace surro
