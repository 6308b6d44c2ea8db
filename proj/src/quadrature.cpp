#include "kaclab/quadrature.hpp"

#include <cmath>
#include <stdexcept>

#include <gsl/gsl_integration.h>

namespace kaclab {

namespace {

// P_n(x) and P_n'(x) by the three-term recurrence in extended precision.
void legendre_pair(int n, long double x, long double& p, long double& dp)
{
    long double p0 = 1.0L, p1 = x;
    for (int k = 2; k <= n; ++k) {
        const long double pk = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = pk;
    }
    p = n == 0 ? 1.0L : p1;
    dp = n * (x * p - p0) / (x * x - 1.0L);
}

}  // namespace

QuadratureRule gauss_legendre(int n, double a, double b)
{
    if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
    gsl_integration_glfixed_table* table = gsl_integration_glfixed_table_alloc(n);
    if (table == nullptr) throw std::runtime_error("gauss_legendre: allocation failed");
    QuadratureRule rule;
    rule.x.resize(n);
    rule.w.resize(n);
    for (int i = 0; i < n; ++i) {
        double x, w;
        gsl_integration_glfixed_point(-1.0, 1.0, static_cast<size_t>(i), &x, &w, table);
        // GSL's computed (non-tabulated) rules are good to ~1e-11; two Newton
        // steps in long double bring nodes and weights to full precision.
        long double xl = x, p = 0, dp = 0;
        if (n > 1) {
            for (int it = 0; it < 2; ++it) {
                legendre_pair(n, xl, p, dp);
                xl -= p / dp;
            }
            legendre_pair(n, xl, p, dp);
            w = static_cast<double>(2.0L / ((1.0L - xl * xl) * dp * dp));
        }
        rule.x[i] = 0.5 * (b - a) * static_cast<double>(xl) + 0.5 * (a + b);
        rule.w[i] = 0.5 * (b - a) * w;
    }
    gsl_integration_glfixed_table_free(table);
    return rule;
}

QuadratureRule log_simpson(double t_lo, double t_hi, int n_nodes)
{
    if (!(t_lo > 0.0) || !(t_hi > t_lo)) throw std::invalid_argument("log_simpson: bad interval");
    if (n_nodes < 3 || n_nodes % 2 == 0) throw std::invalid_argument("log_simpson: need odd n >= 3");
    const double u0 = std::log(t_lo);
    const double h = (std::log(t_hi) - u0) / (n_nodes - 1);
    QuadratureRule rule;
    rule.x.resize(n_nodes);
    rule.w.resize(n_nodes);
    for (int i = 0; i < n_nodes; ++i) {
        const double t = std::exp(u0 + h * i);
        double c = (i == 0 || i == n_nodes - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        rule.x[i] = t;
        rule.w[i] = c * h / 3.0 * t;
    }
    return rule;
}

}  // namespace kaclab
