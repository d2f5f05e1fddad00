#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "surro/abm.hpp"

namespace surro {

// Exact distribution of the aggregate trajectory under a fully resolved
// schedule, obtained by enumerating every micro trajectory. Outcomes are
// sorted by their per-step count codes so the order is reproducible.
struct PushforwardResult {
    std::vector<std::pair<AggregateTrajectory, double>> outcomes;
    double total_mass = 0.0;
    std::uint64_t paths_visited = 0;
};

// Throws std::runtime_error("size guard exceeded") once the enumeration tree
// grows past node_budget states, so infeasible configurations fail fast
// instead of running forever.
PushforwardResult exact_pushforward(const LatticeConfig& cfg, const AbmSchedule& schedule,
                                    std::uint64_t node_budget = 80'000'000);

// Monte Carlo estimate of the same distribution from `runs` simulations.
PushforwardResult empirical_pushforward(const LatticeConfig& cfg, const AbmSchedule& schedule,
                                        int runs, const RngStream& base);

// Total variation distance between two aggregate-trajectory distributions.
double total_variation(const PushforwardResult& p, const PushforwardResult& q);

// Exact probability of one aggregate trajectory (sum over matching outcomes).
double trajectory_probability(const PushforwardResult& p, const AggregateTrajectory& y);

} // namespace surro
