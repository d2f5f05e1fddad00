#include "surro/ode.hpp"

namespace surro {

std::array<double, 3> sirs_derivative(const std::array<double, 3>& z,
                                      const std::array<double, 3>& theta) {
    double infect = theta[0] * z[1] * z[0];
    double recover = theta[1] * z[1];
    double wane = theta[2] * z[2];
    return {wane - infect, infect - recover, recover - wane};
}

std::array<double, 3> euler_step(const std::array<double, 3>& z,
                                 const std::array<double, 3>& theta, double dt) {
    auto d = sirs_derivative(z, theta);
    return {z[0] + dt * d[0], z[1] + dt * d[1], z[2] + dt * d[2]};
}

std::vector<std::array<double, 3>> euler_trajectory(double i0,
                                                    const std::vector<std::array<double, 3>>& thetas,
                                                    double dt) {
    std::vector<std::array<double, 3>> zs;
    zs.reserve(thetas.size() + 1);
    zs.push_back({1.0 - i0, i0, 0.0});
    for (const auto& th : thetas) zs.push_back(euler_step(zs.back(), th, dt));
    return zs;
}

} // namespace surro
