#pragma once

#include <array>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "kaclab/geometry.hpp"

namespace kaclab {

class SphereError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Gauss-Legendre nodes in c = cos(theta) times equiangular nodes in phi.
struct SphereGrid {
    int L = 0;
    int n_theta = 0;
    int n_phi = 0;
    std::vector<double> cos_theta;
    std::vector<double> sin_theta;
    std::vector<double> weight;  // Gauss weights in c, summing to 2
    std::vector<double> phi;

    SphereGrid() = default;
    SphereGrid(int band_limit, int n_theta, int n_phi);

    // n_theta = 2L + 2, n_phi = 2(2L + 1); L = 32 gives the 66 x 130 grid.
    static SphereGrid for_band_limit(int L);

    std::size_t size() const { return static_cast<std::size_t>(n_theta) * n_phi; }
    std::size_t index(int j, int k) const { return static_cast<std::size_t>(j) * n_phi + k; }
    Vec3 point(int j, int k) const;
    double area_weight(int j) const;
    double total_weight() const;
};

inline int sh_index(int l, int m) { return l * l + l + m; }
inline int sh_count(int L) { return (L + 1) * (L + 1); }
inline double sh_eigenvalue(int l) { return static_cast<double>(l) * (l + 1); }

// Coefficients in the orthonormal real basis Y_{l,0} = P_l^0,
// Y_{l,m} = sqrt(2) P_l^m cos(m phi), Y_{l,-m} = sqrt(2) P_l^m sin(m phi).
struct HarmonicSpectrum {
    int L = 0;
    std::vector<double> c;

    HarmonicSpectrum() = default;
    explicit HarmonicSpectrum(int band_limit) : L(band_limit), c(sh_count(band_limit), 0.0) {}

    double& at(int l, int m) { return c[sh_index(l, m)]; }
    double at(int l, int m) const { return c[sh_index(l, m)]; }
    HarmonicSpectrum resized(int new_L) const;
    double norm2() const;
};

struct TangentField {
    std::vector<double> x, y, z;
};

// Precomputed transform plan: Legendre tables, trig tables and weights.
// Immutable after construction and safe to share between threads.
class SphereTransform {
  public:
    explicit SphereTransform(SphereGrid grid);

    const SphereGrid& grid() const { return grid_; }
    int band_limit() const { return grid_.L; }

    HarmonicSpectrum analysis(const std::vector<double>& values) const;
    std::vector<double> synthesis(const HarmonicSpectrum& spec) const;
    TangentField gradient(const HarmonicSpectrum& spec) const;
    // u_k = b_k(sigma) . grad g at every node, k = 1..3.
    std::array<std::vector<double>, 3> b_derivatives(const HarmonicSpectrum& spec) const;

    double integrate(const std::vector<double>& values) const;
    double inner(const std::vector<double>& a, const std::vector<double>& b) const;
    std::vector<double> sample(const std::function<double(const Vec3&)>& f) const;

  private:
    void check_values(const std::vector<double>& values) const;
    void ring_coeffs(const HarmonicSpectrum& spec, int j, bool derivative, std::vector<double>& a,
                     std::vector<double>& b) const;

    SphereGrid grid_;
    int nlm_ = 0;
    std::vector<double> P_;   // [j * nlm + l(l+1)/2 + m]
    std::vector<double> dP_;  // d/dtheta of P_
    std::vector<double> cos_;  // [k * (L+1) + m]
    std::vector<double> sin_;
};

// Point evaluation of a spectrum and of its tangent gradient.
double evaluate(const HarmonicSpectrum& spec, const Vec3& sigma);
Vec3 evaluate_gradient(const HarmonicSpectrum& spec, const Vec3& sigma);
void evaluate_with_gradient(const HarmonicSpectrum& spec, const Vec3& sigma, double& value,
                            Vec3& grad);

// Real spherical harmonic Y_{l,m} at sigma.
double real_harmonic(int l, int m, const Vec3& sigma);

// Grid values plus a flag that requests a positivity floor after linear
// operations.
struct SphereFunction {
    std::shared_ptr<const SphereTransform> plan;
    std::vector<double> values;
    bool nonnegative = false;

    HarmonicSpectrum spectrum() const { return plan->analysis(values); }
};

// Positivity floor epsilon = 1e-12 * max value.
inline constexpr double kFloorFraction = 1e-12;
void apply_floor(std::vector<double>& values);

// Coefficient-wise lambda_l^s, s in (0, 1].
HarmonicSpectrum laplacian(const HarmonicSpectrum& spec, double s);
// Coefficient-wise lambda_l^nu for any nu >= 0.
HarmonicSpectrum laplacian_power(const HarmonicSpectrum& spec, double nu);
HarmonicSpectrum heat_flow(const HarmonicSpectrum& spec, double t);
SphereFunction heat_flow(const SphereFunction& f, double t);

// Zonal heat kernel; truncates the Legendre series once the tail term drops
// below 1e-14 and throws when that needs more than `cap` terms.
double heat_kernel(double c, double t, int cap = 200000);

// Quadrature on [t_min, t_max] used by every subordination integral.
struct SubordinationQuadrature {
    double t_min = 1e-6;
    double t_max = 50.0;
    int nodes = 201;
};

// Gamma(1 - s) / s = integral of (1 - e^{-t}) t^{-1-s}.
double subordination_constant(double s);

// Integral of (1 - e^{-lambda t}) t^{-1-s} dt: quadrature plus exact tails.
double subordination_symbol(double lambda, double s, const SubordinationQuadrature& q = {});

// (-Delta)^s through the subordination integral (normalized to lambda^s).
HarmonicSpectrum frac_laplacian_subordination(const HarmonicSpectrum& spec, double s,
                                              const SubordinationQuadrature& q = {});

// chi_s(c) = c_s * integral of Phi_t(c) t^{-1-s} dt, c < 1.
double chi_s(double c, double s, const SubordinationQuadrature& q = {});

// Spline of chi_s(cos theta) theta^{2+2s} in log theta.
class ChiTable {
  public:
    explicit ChiTable(double s, const SubordinationQuadrature& q = {}, int n = 1536);
    double s() const { return s_; }
    double operator()(double c) const;
    double at_theta(double theta) const;
    // Empirical c~_s = min over the table of sin(theta) chi_s theta^{1+2s}.
    double lower_bound_constant() const;

  private:
    double s_;
    double log_lo_, log_hi_, h_;
    std::vector<double> q_;
    std::shared_ptr<const void> spline_;
};

// mu_l = 2 pi * integral over [c_lo, c_hi] of chi(c) (1 - P_l(c)) dc for
// l = 0..l_max, by graded Gauss-Legendre quadrature in theta.
std::vector<double> zonal_symbol(const std::function<double(double)>& chi_theta, double s,
                                 int l_max, double theta_lo = 0.0, double theta_hi = 0.0);

// Squared Sobolev seminorm sum lambda^nu |g_lm|^2.
double sobolev_seminorm_sq(const HarmonicSpectrum& spec, double nu);
double sobolev_seminorm(const HarmonicSpectrum& spec, double nu);

// Double-sphere quadrature of the kernel forms. Pairs with
// sigma.sigma' > 1 - delta are excluded from the product quadrature; their
// contribution is restored through the zonal symbol restricted to the cap.
struct KernelQuadratureReport {
    double value = 0.0;
    double cap_correction = 0.0;
    double excluded_measure = 0.0;  // solid angle of the excluded cap
    double delta = 0.0;
};

// Kernel form of (-Delta)^s at the given points, normalized by c_s^2 so it
// matches lambda^s.
std::vector<double> frac_laplacian_kernel(const HarmonicSpectrum& spec, const ChiTable& chi,
                                          const std::vector<Vec3>& points, double delta,
                                          KernelQuadratureReport* report = nullptr);

// (1/2) iint (g' - g)^2 chi_s / c_s^2.
KernelQuadratureReport gagliardo_seminorm_sq(const HarmonicSpectrum& spec, const ChiTable& chi,
                                             double delta);
// (1/2) iint |grad g(sigma') - grad g(sigma)|^2_{sigma',sigma} chi_s / c_s^2.
KernelQuadratureReport gagliardo_grad_seminorm_sq(const HarmonicSpectrum& spec, const ChiTable& chi,
                                                  double delta);

inline double default_delta(int n_theta)
{
    const double x = 3.14159265358979323846 / n_theta;
    return x * x;
}

}  // namespace kaclab
