#include "surro/abm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace surro {

std::vector<std::vector<int>> neighbour_table(int side) {
    if (side < 1) throw std::invalid_argument("lattice side must be positive");
    int n = side * side;
    std::vector<std::vector<int>> table(n);
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            int self = r * side + c;
            auto& nb = table[self];
            int up = ((r - 1 + side) % side) * side + c;
            int down = ((r + 1) % side) * side + c;
            int left = r * side + (c - 1 + side) % side;
            int right = r * side + (c + 1) % side;
            for (int cand : {up, down, left, right}) {
                if (cand == self) continue;
                if (std::find(nb.begin(), nb.end(), cand) == nb.end()) nb.push_back(cand);
            }
            std::sort(nb.begin(), nb.end());
        }
    }
    return table;
}

double infection_probability(double alpha, int k) {
    double keep = 1.0;
    for (int i = 0; i < k; ++i) keep *= 1.0 - alpha;
    return 1.0 - keep;
}

static void check_unit(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
}

void validate_schedule(const LatticeConfig& cfg, const AbmSchedule& schedule) {
    if (cfg.side < 1) throw std::invalid_argument("lattice side must be positive");
    if (cfg.horizon < 0) throw std::invalid_argument("horizon must be non-negative");
    check_unit(schedule.i0, "i0");
    if (static_cast<int>(schedule.thetas.size()) != cfg.horizon)
        throw std::invalid_argument("schedule needs exactly one parameter vector per transition");
    for (const auto& th : schedule.thetas) {
        check_unit(th.alpha, "alpha");
        check_unit(th.beta, "beta");
        check_unit(th.gamma, "gamma");
    }
}

MicroState sample_initial_state(const LatticeConfig& cfg, double i0, RngStream& rng) {
    MicroState x(cfg.agents());
    for (auto& s : x)
        s = rng.uniform() < i0 ? HealthStatus::Infected : HealthStatus::Susceptible;
    return x;
}

MicroState step_state(const LatticeConfig& cfg, const MicroState& x, const ParamVector& theta,
                      RngStream& rng) {
    static thread_local std::vector<std::vector<int>> table;
    static thread_local int table_side = -1;
    if (table_side != cfg.side) {
        table = neighbour_table(cfg.side);
        table_side = cfg.side;
    }

    int n = cfg.agents();
    MicroState next(n);
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform();
        switch (x[i]) {
        case HealthStatus::Susceptible: {
            int k = 0;
            for (int nb : table[i])
                if (x[nb] == HealthStatus::Infected) ++k;
            next[i] = u < infection_probability(theta.alpha, k) ? HealthStatus::Infected
                                                                : HealthStatus::Susceptible;
            break;
        }
        case HealthStatus::Infected:
            next[i] = u < theta.beta ? HealthStatus::Recovered : HealthStatus::Infected;
            break;
        case HealthStatus::Recovered:
            next[i] = u < theta.gamma ? HealthStatus::Susceptible : HealthStatus::Recovered;
            break;
        }
    }
    return next;
}

MicroTrajectory simulate(const LatticeConfig& cfg, const AbmSchedule& schedule, RngStream& rng) {
    validate_schedule(cfg, schedule);
    MicroTrajectory traj;
    traj.states.reserve(cfg.horizon + 1);
    traj.states.push_back(sample_initial_state(cfg, schedule.i0, rng));
    for (int t = 0; t < cfg.horizon; ++t)
        traj.states.push_back(step_state(cfg, traj.states.back(), schedule.thetas[t], rng));
    return traj;
}

std::array<int, 3> aggregate_counts(const MicroState& x) {
    std::array<int, 3> c{0, 0, 0};
    for (auto s : x) ++c[static_cast<int>(s)];
    return c;
}

AggregateTrajectory aggregate(const MicroTrajectory& traj) {
    AggregateTrajectory agg;
    agg.counts.reserve(traj.states.size());
    for (const auto& x : traj.states) agg.counts.push_back(aggregate_counts(x));
    return agg;
}

} // namespace surro
