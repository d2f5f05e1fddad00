#include "surro/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace surro {

namespace {

// Aggregate trajectories are keyed by packing per-step (S, I) counts into a
// uint64, base (n+1)^2 per step. R is implied by n - S - I.
struct KeyCodec {
    int n;
    int steps; // T + 1
    std::uint64_t step_base;

    KeyCodec(int n_, int steps_) : n(n_), steps(steps_) {
        step_base = static_cast<std::uint64_t>(n + 1) * static_cast<std::uint64_t>(n + 1);
        double bits = steps * std::log2(static_cast<double>(step_base));
        if (bits >= 64.0) throw std::runtime_error("size guard exceeded");
    }

    std::uint64_t append(std::uint64_t key, int s_count, int i_count) const {
        return key * step_base + static_cast<std::uint64_t>(s_count) * (n + 1) + i_count;
    }

    std::uint64_t encode(const AggregateTrajectory& y) const {
        std::uint64_t key = 0;
        for (const auto& c : y.counts) key = append(key, c[0], c[1]);
        return key;
    }

    AggregateTrajectory decode(std::uint64_t key) const {
        AggregateTrajectory y;
        y.counts.resize(steps);
        for (int t = steps - 1; t >= 0; --t) {
            std::uint64_t code = key % step_base;
            key /= step_base;
            int s = static_cast<int>(code / (n + 1));
            int i = static_cast<int>(code % (n + 1));
            y.counts[t] = {s, i, n - s - i};
        }
        return y;
    }
};

struct Enumerator {
    const AbmSchedule& sched;
    std::vector<std::vector<int>> table;
    KeyCodec codec;
    std::uint64_t budget;
    std::uint64_t visited = 0;
    int n;
    int horizon;
    std::unordered_map<std::uint64_t, double> mass;
    // One state buffer per time level; a level's buffer is stable while its
    // subtree is explored, deeper levels write only their own buffers.
    std::vector<MicroState> buf;

    Enumerator(const LatticeConfig& cfg, const AbmSchedule& s, std::uint64_t node_budget)
        : sched(s), table(neighbour_table(cfg.side)), codec(cfg.agents(), cfg.horizon + 1),
          budget(node_budget), n(cfg.agents()), horizon(cfg.horizon),
          buf(cfg.horizon + 1, MicroState(cfg.agents())) {}

    void touch() {
        if (++visited > budget) throw std::runtime_error("size guard exceeded");
    }

    std::uint64_t state_key(std::uint64_t prefix, const MicroState& x) const {
        auto c = aggregate_counts(x);
        return codec.append(prefix, c[0], c[1]);
    }

    void run() {
        enum_init(0, 1.0);
    }

    // Branch agent i of the initial state: Infected w.p. i0, else Susceptible.
    void enum_init(int i, double p) {
        if (i == n) {
            touch();
            descend(0, state_key(0, buf[0]), p);
            return;
        }
        if (1.0 - sched.i0 > 0.0) {
            buf[0][i] = HealthStatus::Susceptible;
            enum_init(i + 1, p * (1.0 - sched.i0));
        }
        if (sched.i0 > 0.0) {
            buf[0][i] = HealthStatus::Infected;
            enum_init(i + 1, p * sched.i0);
        }
    }

    void descend(int t, std::uint64_t key, double p) {
        if (t == horizon) {
            mass[key] += p;
            return;
        }
        enum_agent(t, 0, key, p);
    }

    // Branch agent i of the step t -> t+1, writing candidates into buf[t+1].
    void enum_agent(int t, int i, std::uint64_t key, double p) {
        if (i == n) {
            touch();
            descend(t + 1, state_key(key, buf[t + 1]), p);
            return;
        }
        const ParamVector& th = sched.thetas[t];
        const MicroState& x = buf[t];
        double p_move = 0.0; // probability of leaving the current status
        HealthStatus stay = x[i], move = x[i];
        switch (x[i]) {
        case HealthStatus::Susceptible: {
            int k = 0;
            for (int nb : table[i])
                if (x[nb] == HealthStatus::Infected) ++k;
            p_move = infection_probability(th.alpha, k);
            move = HealthStatus::Infected;
            break;
        }
        case HealthStatus::Infected:
            p_move = th.beta;
            move = HealthStatus::Recovered;
            break;
        case HealthStatus::Recovered:
            p_move = th.gamma;
            move = HealthStatus::Susceptible;
            break;
        }
        if (1.0 - p_move > 0.0) {
            buf[t + 1][i] = stay;
            enum_agent(t, i + 1, key, p * (1.0 - p_move));
        }
        if (p_move > 0.0) {
            buf[t + 1][i] = move;
            enum_agent(t, i + 1, key, p * p_move);
        }
    }
};

PushforwardResult collect(const std::unordered_map<std::uint64_t, double>& mass,
                          const KeyCodec& codec, std::uint64_t visited) {
    std::vector<std::pair<std::uint64_t, double>> items(mass.begin(), mass.end());
    std::sort(items.begin(), items.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    PushforwardResult res;
    res.outcomes.reserve(items.size());
    res.paths_visited = visited;
    // Neumaier summation; outcome counts can reach the hundreds of thousands.
    double sum = 0.0, comp = 0.0;
    for (const auto& [key, m] : items) {
        res.outcomes.emplace_back(codec.decode(key), m);
        double t = sum + m;
        comp += std::abs(sum) >= std::abs(m) ? (sum - t) + m : (m - t) + sum;
        sum = t;
    }
    res.total_mass = sum + comp;
    return res;
}

KeyCodec codec_for(const PushforwardResult& p) {
    const auto& y0 = p.outcomes.front().first;
    const auto& c0 = y0.counts.front();
    return KeyCodec(c0[0] + c0[1] + c0[2], static_cast<int>(y0.counts.size()));
}

} // namespace

PushforwardResult exact_pushforward(const LatticeConfig& cfg, const AbmSchedule& schedule,
                                    std::uint64_t node_budget) {
    validate_schedule(cfg, schedule);
    Enumerator e(cfg, schedule, node_budget);
    e.run();
    return collect(e.mass, e.codec, e.visited);
}

PushforwardResult empirical_pushforward(const LatticeConfig& cfg, const AbmSchedule& schedule,
                                        int runs, const RngStream& base) {
    validate_schedule(cfg, schedule);
    if (runs < 1) throw std::invalid_argument("runs must be positive");
    KeyCodec codec(cfg.agents(), cfg.horizon + 1);
    std::unordered_map<std::uint64_t, double> mass;
    double w = 1.0 / runs;
    for (int r = 0; r < runs; ++r) {
        RngStream rng = base.split(static_cast<std::uint64_t>(r));
        auto agg = aggregate(simulate(cfg, schedule, rng));
        mass[codec.encode(agg)] += w;
    }
    return collect(mass, codec, static_cast<std::uint64_t>(runs));
}

double total_variation(const PushforwardResult& p, const PushforwardResult& q) {
    if (p.outcomes.empty() || q.outcomes.empty())
        throw std::invalid_argument("total_variation needs non-empty distributions");
    KeyCodec codec = codec_for(p);
    std::size_t i = 0, j = 0;
    double acc = 0.0;
    while (i < p.outcomes.size() || j < q.outcomes.size()) {
        std::uint64_t ki = i < p.outcomes.size() ? codec.encode(p.outcomes[i].first) : UINT64_MAX;
        std::uint64_t kj = j < q.outcomes.size() ? codec.encode(q.outcomes[j].first) : UINT64_MAX;
        if (ki < kj) {
            acc += p.outcomes[i++].second;
        } else if (kj < ki) {
            acc += q.outcomes[j++].second;
        } else {
            acc += std::abs(p.outcomes[i++].second - q.outcomes[j++].second);
        }
    }
    return 0.5 * acc;
}

double trajectory_probability(const PushforwardResult& p, const AggregateTrajectory& y) {
    if (p.outcomes.empty()) return 0.0;
    KeyCodec codec = codec_for(p);
    std::uint64_t key = codec.encode(y);
    for (const auto& [out, m] : p.outcomes)
        if (codec.encode(out) == key) return m;
    return 0.0;
}

} // namespace surro
