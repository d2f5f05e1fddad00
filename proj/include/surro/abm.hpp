#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "surro/rng.hpp"

namespace surro {

enum class HealthStatus : std::uint8_t { Susceptible = 0, Infected = 1, Recovered = 2 };

// Square lattice of agents with periodic boundaries. Neighbour sets are the
// distinct cells at von Neumann offsets, so they shrink below four when wrapping
// makes offsets coincide (L = 1 or 2).
struct LatticeConfig {
    int side = 2;     // L
    int horizon = 3;  // T, number of transitions; trajectories have T+1 states

    int agents() const { return side * side; }
};

// One step's transition parameters (alpha, beta, gamma), each in [0, 1].
struct ParamVector {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
};

// Fully resolved simulator input: initial infection probability plus one
// parameter vector per transition.
struct AbmSchedule {
    double i0 = 0.0;
    std::vector<ParamVector> thetas; // thetas[t] drives the step t -> t+1
};

using MicroState = std::vector<HealthStatus>; // one entry per cell, row-major

struct MicroTrajectory {
    std::vector<MicroState> states; // states[t] for t = 0..T
};

// Aggregate observation: per-step (S, I, R) counts.
struct AggregateTrajectory {
    std::vector<std::array<int, 3>> counts;
};

// Distinct von Neumann neighbours of every cell, in ascending cell order.
std::vector<std::vector<int>> neighbour_table(int side);

// P(infection) for a susceptible agent with k infected neighbours: 1-(1-alpha)^k.
double infection_probability(double alpha, int k);

MicroState sample_initial_state(const LatticeConfig& cfg, double i0, RngStream& rng);

// Synchronous update of all agents; consumes one uniform draw per agent in
// cell-index order.
MicroState step_state(const LatticeConfig& cfg, const MicroState& x, const ParamVector& theta,
                      RngStream& rng);

MicroTrajectory simulate(const LatticeConfig& cfg, const AbmSchedule& schedule, RngStream& rng);

std::array<int, 3> aggregate_counts(const MicroState& x);
AggregateTrajectory aggregate(const MicroTrajectory& traj);

void validate_schedule(const LatticeConfig& cfg, const AbmSchedule& schedule);

} // namespace surro
