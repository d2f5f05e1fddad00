#pragma once

#include <array>
#include <vector>

namespace surro {

// Mean-field SIRS rates for z = (S, I, R) fractions and theta = (alpha, beta,
// gamma):
//   dS = gamma R - alpha I S,  dI = alpha I S - beta I,  dR = beta I - gamma R.
std::array<double, 3> sirs_derivative(const std::array<double, 3>& z,
                                      const std::array<double, 3>& theta);

std::array<double, 3> euler_step(const std::array<double, 3>& z,
                                 const std::array<double, 3>& theta, double dt);

// States z_0..z_T from z_0 = (1 - i0, i0, 0) under per-step parameters.
std::vector<std::array<double, 3>> euler_trajectory(double i0,
                                                    const std::vector<std::array<double, 3>>& thetas,
                                                    double dt = 1.0);

} // namespace surro
