#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kaclab/geometry.hpp"

namespace kaclab {

class KernelError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Inverse power-law interaction of exponent q.
struct PowerLawParams {
    double q = 7.0 / 3.0;
    double gamma = -2.0;            // (q - 5) / (q - 1)
    double s = 0.75;                // 1 / (q - 1)
    double moment_threshold = 0.0;  // (5 - q)(q + 3) / ((q - 1)(3q - 5))
};

// Accepts q in (2, 7/3].
PowerLawParams power_law(double q);

// Subordination weight omega(t) >= 0 on (0, inf). Tables are interpolated
// linearly in log-log coordinates and extended by their end slopes.
class OmegaWeight {
  public:
    static OmegaWeight power(double s);
    static OmegaWeight table(std::vector<double> t, std::vector<double> w);
    // Two-column CSV (t, omega); lines starting with '#' and a non-numeric
    // header are skipped.
    static OmegaWeight from_csv(const std::string& path);

    double operator()(double t) const;
    bool is_power() const { return table_t_.empty(); }
    // Near 0, omega ~ A t^{-1-s}; s lies in (0, 1) for admissible weights.
    double s() const { return s_; }
    double small_prefactor() const { return a0_; }
    // Near infinity, omega ~ B t^{p}.
    double large_exponent() const { return p_inf_; }
    double large_prefactor() const { return a_inf_; }

    // Integral over [eps, inf) of e^{-lambda t} omega(t).
    double laplace_tail(double lambda, double eps) const;
    // Integral over [eps, inf) of (1 - e^{-lambda t}) omega(t); eps may be 0.
    double bernstein(double lambda, double eps) const;

  private:
    double s_ = 0.75;
    double a0_ = 1.0, p_inf_ = -1.75, a_inf_ = 1.0;
    std::vector<double> table_t_, log_t_, log_w_;
    double integrate_table(const std::function<double(double)>& g, double lo, double hi) const;
};

// Angular kernel b(c), c = sigma . sigma'.
struct AngularKernel {
    std::string name;
    std::function<double(double)> b;
    std::function<double(double)> b_theta;  // b(cos theta), accurate near 0
    double bbar = 0.0;
    std::optional<double> bound;  // present iff b is bounded
    bool antipodal = false;       // b(c) = b(-c)
};

// (1/2) 2 pi int (1 - c) b(c) dc, refined towards c = 1 in log(1 - c) with an
// analytic power tail below 1 - c = 1e-10. Throws when the tail exponent shows
// a non-integrable singularity.
double bbar(const std::function<double(double)>& b);

// int_0^inf Phi_t(c) omega(t) dt for c < 1.
double subordinate_kernel(double c, const OmegaWeight& w);

// int_eps^inf Phi_t(c) omega(t) dt through its Legendre series, c in [-1, 1],
// eps > 0. The Laplace coefficients are computed once.
class TruncatedSubordinate {
  public:
    TruncatedSubordinate(const OmegaWeight& w, double eps);
    double operator()(double c) const;
    double eps() const { return eps_; }
    int terms() const { return static_cast<int>(m_.size()); }

  private:
    double eps_;
    std::vector<double> m_;  // (2l + 1) / (4 pi) * laplace_tail(lambda_l, eps)
};

// Lower bound 3 int(1 - e^{-2 L t}) omega / int(1 - e^{-6t}) omega with
// omega restricted to t >= eps and L = lambda_loc.
double lambda_lower_bound(const OmegaWeight& w, double eps, double lambda_loc = 5.5);
// 2 sqrt(Lambda (1 - lambda)) - |gamma|.
double h1_margin(double lambda_bound, double gamma, double lambda = 0.05);

// Kernel block of the configuration.
struct KernelSpec {
    std::string type = "power_law";  // power_law | frac_laplacian | table | maxwell
    double q = 7.0 / 3.0;
    double s = 0.75;          // frac_laplacian only
    double gamma = -2.0;      // frac_laplacian and table
    int k = 8;
    double lambda = 0.05;
    double c_b = 1.0;
    double maxwell_b = 0.0;   // 0 selects 1 / (4 pi)
    std::string omega_table_path;
};

// Inverse-CDF sampler of sigma' with density b(sigma.sigma') / ||b||_{L1},
// tabulated on `cells` equal theta cells. Immutable, shareable.
class AngularSampler {
  public:
    AngularSampler(const std::function<double(double)>& b, int cells = 4096, int order = 8);
    // Maps two uniforms in [0, 1) to sigma'.
    Vec3 sample(const Vec3& sigma, double u_theta, double u_phi) const;
    double sample_theta(double u) const;
    double l1_norm() const { return total_; }
    // Tabulated fraction of the mass in theta' <= theta (interpolated in-cell).
    double cdf_theta(double theta) const;
    int cells() const { return static_cast<int>(cdf_.size()) - 1; }

  private:
    double h_;
    std::vector<double> cdf_;
    double total_ = 0.0;
};

// B^k = alpha^k(r) b^k(c) together with its construction data.
class RegularizedKernel {
  public:
    static std::shared_ptr<const RegularizedKernel> build(const KernelSpec& spec);

    const KernelSpec& spec() const { return spec_; }
    int k() const { return spec_.k; }
    double gamma() const { return gamma_; }
    double s() const { return s_; }
    bool bounded_base() const { return base_.bound.has_value(); }

    const AngularKernel& base() const { return base_; }  // b
    double bk(double c) const;                             // b^k
    double bk_theta(double theta) const;
    double bt_k(double c) const;                           // int_{eps_k} Phi_t omega
    double psi(double c) const;
    double alpha(double r) const;           // (r^2 + 1/k^2)^{gamma/2}
    double alpha_base(double r) const;      // r^gamma
    double alpha_bound() const { return alpha_bound_; }  // k^{-gamma}

    double eps_k() const { return eps_k_; }
    double rho_k() const { return rho_k_; }
    double u_k() const { return u_k_; }
    double sup_bk() const { return sup_bk_; }
    double l1_norm() const { return sampler_->l1_norm(); }
    double bbar_k() const { return bbar_k_; }
    double ratio() const { return ratio_; }  // b / b-tilde
    const OmegaWeight& omega() const { return omega_; }
    const AngularSampler& sampler() const { return *sampler_; }

    // mu_l = 2 pi int b (1 - P_l), l = 0..size-1, for b^k and for b.
    const std::vector<double>& symbols_k() const { return mu_k_; }
    const std::vector<double>& symbols_base() const { return mu_base_; }

    // Lambda lower bound for the truncated weight and its H1 margin.
    double lambda_bound() const { return lambda_bound_; }
    double margin() const { return h1_margin(lambda_bound_, gamma_, spec_.lambda); }

    // c values on which the construction is verified.
    static std::vector<double> check_grid(int k);

  private:
    RegularizedKernel() = default;
    KernelSpec spec_;
    double gamma_ = 0.0, s_ = 0.0, ratio_ = 1.0;
    double eps_k_ = 0.0, rho_k_ = 0.0, u_k_ = 0.0, sup_bk_ = 0.0, bbar_k_ = 0.0;
    double alpha_bound_ = 1.0, lambda_bound_ = 0.0;
    AngularKernel base_;
    OmegaWeight omega_;
    std::shared_ptr<const TruncatedSubordinate> trunc_;
    std::shared_ptr<const AngularSampler> sampler_;
    std::vector<double> mu_k_, mu_base_;
};

// Solves ratio * int_u^inf Phi_t(1) omega(t) dt = rho for u by bisection in
// log u, relative tolerance 1e-10.
double solve_u_k(const OmegaWeight& w, double ratio, double rho);

// --------------------------------------------------------------- A(phi)

struct TestPhi {
    std::function<double(const Vec3&)> f;
    double hessian_bound = 1.0;  // sup |D^2 phi|
};

// A exp(-|x - x0|^2 / (2 l^2)).
struct GaussianBump {
    Vec3 center;
    double width = 1.0;
    double amplitude = 1.0;
    double operator()(const Vec3& x) const;
    double hessian_bound() const { return amplitude / (width * width); }
    TestPhi as_test() const;
};

struct APhiOptions {
    int theta_panels = 24;
    int theta_order = 8;
    int phi_nodes = 32;       // even; azimuths come in antipodal pairs
    double theta_cap = 1e-3;  // below it the ring average is its theta^2 term
};

struct APhiResult {
    double value = 0.0;
    // |value| / (sup|D^2 phi| bbar |v - w|^{gamma + 2})
    double constant = 0.0;
};

// (1/2) alpha(r) int [phi(v') - phi(v) + phi(w') - phi(w)] b dsigma' by
// quadrature around sigma. The unregularized kernel uses the principal value
// with antipodal azimuth pairs.
APhiResult a_phi(const TestPhi& phi, const Vec3& v, const Vec3& w, const RegularizedKernel& kernel,
                 bool regularized, const APhiOptions& opt = {});

// Same quantity for a Gaussian bump through the Funk-Hecke series in the
// zonal symbols of the kernel.
double a_phi_bump(const GaussianBump& phi, const Vec3& v, const Vec3& w, const RegularizedKernel& kernel,
                  bool regularized);

}  // namespace kaclab
