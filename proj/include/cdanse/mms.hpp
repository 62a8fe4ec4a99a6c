#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "cdanse/spaces.hpp"

namespace cdanse {

/// Velocity Jacobian, G[i][j] = d u_i / d x_j.
using Mat2 = std::array<std::array<double, 2>, 2>;

/// Exact (u, p) pair with hand-coded closed-form derivatives; the forcing
/// f = -nu lap(u) + (u.grad)u + grad(p) is derived, never stored.
struct ManufacturedSolution {
    std::string name;
    VectorFn velocity;
    std::function<Mat2(Vec2)> velocity_gradient;
    VectorFn velocity_laplacian;
    ScalarFn pressure;
    VectorFn pressure_gradient;
    bool divergence_free = false;

    double divergence(Vec2 p) const {
        Mat2 g = velocity_gradient(p);
        return g[0][0] + g[1][1];
    }
};

inline VectorFn forcing_from_solution(const ManufacturedSolution& sol, double nu) {
    if (!(nu > 0.0)) throw std::invalid_argument("forcing_from_solution: viscosity must be positive");
    return [sol, nu](Vec2 p) {
        Vec2 u = sol.velocity(p);
        Mat2 g = sol.velocity_gradient(p);
        Vec2 lap = sol.velocity_laplacian(p);
        Vec2 gp = sol.pressure_gradient(p);
        return Vec2{-nu * lap.x + u.x * g[0][0] + u.y * g[0][1] + gp.x,
                    -nu * lap.y + u.x * g[1][0] + u.y * g[1][1] + gp.y};
    };
}

/// Forcing for the Stokes problem sharing the same (u, p): convection dropped.
inline VectorFn stokes_forcing_from_solution(const ManufacturedSolution& sol, double nu) {
    if (!(nu > 0.0)) throw std::invalid_argument("stokes_forcing_from_solution: viscosity must be positive");
    return [sol, nu](Vec2 p) {
        Vec2 lap = sol.velocity_laplacian(p);
        Vec2 gp = sol.pressure_gradient(p);
        return Vec2{-nu * lap.x + gp.x, -nu * lap.y + gp.y};
    };
}

/// u = (x^2 y^2 + e^{-y}, -2xy^3/3 + 2 - pi sin(pi x)), p = 0; divergence-free
/// but nonzero on the boundary of the unit square, so runs impose its trace as
/// Dirichlet data.
inline ManufacturedSolution builtin_paper_solution() {
    const double pi = M_PI;
    ManufacturedSolution s;
    s.name = "paper";
    s.divergence_free = true;
    s.velocity = [pi](Vec2 p) {
        return Vec2{p.x * p.x * p.y * p.y + std::exp(-p.y),
                    -2.0 / 3.0 * p.x * p.y * p.y * p.y + 2.0 - pi * std::sin(pi * p.x)};
    };
    s.velocity_gradient = [pi](Vec2 p) {
        Mat2 g;
        g[0][0] = 2.0 * p.x * p.y * p.y;
        g[0][1] = 2.0 * p.x * p.x * p.y - std::exp(-p.y);
        g[1][0] = -2.0 / 3.0 * p.y * p.y * p.y - pi * pi * std::cos(pi * p.x);
        g[1][1] = -2.0 * p.x * p.y * p.y;
        return g;
    };
    s.velocity_laplacian = [pi](Vec2 p) {
        return Vec2{2.0 * p.y * p.y + 2.0 * p.x * p.x + std::exp(-p.y),
                    pi * pi * pi * std::sin(pi * p.x) - 4.0 * p.x * p.y};
    };
    s.pressure = [](Vec2) { return 0.0; };
    s.pressure_gradient = [](Vec2) { return Vec2{0.0, 0.0}; };
    return s;
}

/// Stream-function solution psi = x^2(1-x)^2 y^2(1-y)^2, u = curl psi,
/// p = sin(pi x) cos(pi y); u and grad(u) n vanish on the boundary, exercising
/// the homogeneous Dirichlet setting.
inline ManufacturedSolution builtin_homogeneous_solution() {
    const double pi = M_PI;
    // a(t) = t^2 (1-t)^2 and derivatives
    auto a0 = [](double t) { return t * t - 2.0 * t * t * t + t * t * t * t; };
    auto a1 = [](double t) { return 2.0 * t - 6.0 * t * t + 4.0 * t * t * t; };
    auto a2 = [](double t) { return 2.0 - 12.0 * t + 12.0 * t * t; };
    auto a3 = [](double t) { return -12.0 + 24.0 * t; };
    ManufacturedSolution s;
    s.name = "homogeneous";
    s.divergence_free = true;
    s.velocity = [a0, a1](Vec2 p) { return Vec2{a0(p.x) * a1(p.y), -a1(p.x) * a0(p.y)}; };
    s.velocity_gradient = [a0, a1, a2](Vec2 p) {
        Mat2 g;
        g[0][0] = a1(p.x) * a1(p.y);
        g[0][1] = a0(p.x) * a2(p.y);
        g[1][0] = -a2(p.x) * a0(p.y);
        g[1][1] = -a1(p.x) * a1(p.y);
        return g;
    };
    s.velocity_laplacian = [a0, a1, a2, a3](Vec2 p) {
        return Vec2{a2(p.x) * a1(p.y) + a0(p.x) * a3(p.y),
                    -a3(p.x) * a0(p.y) - a1(p.x) * a2(p.y)};
    };
    s.pressure = [pi](Vec2 p) { return std::sin(pi * p.x) * std::cos(pi * p.y); };
    s.pressure_gradient = [pi](Vec2 p) {
        return Vec2{pi * std::cos(pi * p.x) * std::cos(pi * p.y),
                    -pi * std::sin(pi * p.x) * std::sin(pi * p.y)};
    };
    return s;
}

inline ManufacturedSolution get_builtin_solution(const std::string& name) {
    if (name == "paper") return builtin_paper_solution();
    if (name == "homogeneous") return builtin_homogeneous_solution();
    throw std::invalid_argument("unknown builtin solution: " + name);
}

}  // namespace cdanse
