#pragma once

#include <vector>

namespace kaclab {

struct QuadratureRule {
    std::vector<double> x;
    std::vector<double> w;
};

// n-point Gauss-Legendre rule on [a, b].
QuadratureRule gauss_legendre(int n, double a = -1.0, double b = 1.0);

// Composite Simpson rule in u = log t over [t_lo, t_hi] with n_nodes
// (odd) log-spaced nodes. Weights include the Jacobian dt = t du, so
// sum_i w_i f(t_i) approximates the integral of f dt.
QuadratureRule log_simpson(double t_lo, double t_hi, int n_nodes);

}  // namespace kaclab
