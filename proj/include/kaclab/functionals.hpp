#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "kaclab/sphere.hpp"

namespace kaclab {

class FunctionalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Plans shared by every functional. Nonlinear maps (sqrt, log, powers) act on
// the fine grid; inputs on a coarser plan are upsampled spectrally first.
class FunctionalContext {
  public:
    explicit FunctionalContext(int base_L = 32, int fine_L = 64);

    const std::shared_ptr<const SphereTransform>& base() const { return base_; }
    const std::shared_ptr<const SphereTransform>& fine() const { return fine_; }
    const SubordinationQuadrature& quadrature() const { return quad_; }

    // chi_s tables and their zonal symbols on the fine band, built on first use.
    const ChiTable& chi(double s) const;
    const std::vector<double>& chi_symbol(double s) const;

  private:
    std::shared_ptr<const SphereTransform> base_, fine_;
    SubordinationQuadrature quad_;
    mutable std::mutex mu_;
    mutable std::map<double, std::shared_ptr<const ChiTable>> chi_;
    mutable std::map<double, std::vector<double>> symbol_;
};

// 3x3 rotation acting on arguments: (g o R)(sigma) = g(R sigma).
struct Rotation3 {
    double m[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    Vec3 apply(const Vec3& v) const;
    Vec3 apply_transpose(const Vec3& v) const;
    static Rotation3 random(unsigned seed);
};

// Smooth positive test functions with closed-form values and gradients.
// A component is either exp(u) for a band-limited field u or a von
// Mises-Fisher bump exp(kappa (mu.sigma - 1)).
struct TestComponent {
    double weight = 1.0;
    bool is_field = true;
    HarmonicSpectrum field;
    double kappa = 0.0;
    Vec3 mu{0, 0, 1};
};

class TestFunction {
  public:
    std::string kind;  // "exp_field", "vmf", "mixture", "symmetric_*", "constant"
    unsigned seed = 0;
    bool symmetric = false;
    double scale = 1.0;
    Rotation3 rotation;
    std::vector<TestComponent> parts;

    static TestFunction constant(double value);
    static TestFunction exp_field(const HarmonicSpectrum& u);
    static TestFunction von_mises_fisher(double kappa, const Vec3& mu);
    TestFunction symmetrized() const;
    TestFunction rotated(const Rotation3& r) const;
    TestFunction scaled(double c) const;

    double value(const Vec3& sigma) const;
    void value_and_gradient(const Vec3& sigma, double& value, Vec3& grad) const;
    SphereFunction sample(const std::shared_ptr<const SphereTransform>& plan) const;

  private:
    void raw(const Vec3& sigma, double& value, Vec3& grad) const;
};

struct FamilyOptions {
    bool symmetric_only = false;
    int max_field_degree = 4;
    double max_field_amplitude = 1.5;
    double max_kappa = 8.0;
};

// n members cycling through exp-field, vMF, mixture and symmetric kinds;
// member i is generated from its own seed base_seed * 1000 + i.
std::vector<TestFunction> make_family(int n, unsigned base_seed, const FamilyOptions& opt = {});

// ------------------------------------------------------------- functionals

double fisher_sphere(const FunctionalContext& ctx, const SphereFunction& g);
// ||sqrt g||^2 in H^nu (squared seminorm) through the fine grid.
double sqrt_sobolev_sq(const FunctionalContext& ctx, const SphereFunction& g, double nu);
double cal_K(const FunctionalContext& ctx, const SphereFunction& g);
double cal_J(const FunctionalContext& ctx, const SphereFunction& g);
double j_s(const FunctionalContext& ctx, const SphereFunction& g, double s);
// p^p int |grad g^{1/p}|^p with p = 2(1+s).
double j_s_lp_form(const FunctionalContext& ctx, const SphereFunction& g, double s);
double l1_norm(const FunctionalContext& ctx, const SphereFunction& g);

// <I'(g), h> = int 2 grad log g . grad h - |grad log g|^2 h.
double fisher_derivative(const FunctionalContext& ctx, const SphereFunction& g, const HarmonicSpectrum& h);

// Weight omega(u) = u^{-s} for u >= u_k and u_k^{-s} below (u_k = 0 gives
// the pure power).
struct KWeight {
    double s = 0.75;
    double u_k = 0.0;
    double operator()(double u) const;
};

struct KOptions {
    double t_lo = 1e-6;
    double t_hi = 12.0;
    int nodes = 161;  // odd, log-spaced per segment
};

// t -> ||sqrt(g_t)||^2_{H^2} with values cached per node so several weights
// can share one profile.
class HeatProfile {
  public:
    HeatProfile(const FunctionalContext& ctx, const SphereFunction& g);
    double operator()(double t);
    std::size_t evaluations() const { return cache_.size(); }

  private:
    const FunctionalContext* ctx_;
    HarmonicSpectrum spec_;
    std::map<double, double> cache_;
};

double k_s(HeatProfile& profile, const KWeight& w, const KOptions& opt = {});
double k_s(const FunctionalContext& ctx, const SphereFunction& g, const KWeight& w, const KOptions& opt = {});

struct FracDissipation {
    double subordination = 0.0;    // c_s int <I'(g), g - g_t> t^{-1-s} dt
    double double_integral = 0.0;  // iint g |grad log g' - grad log g|^2 chi_s
    double relative_gap = 0.0;
};
FracDissipation frac_dissipation(const FunctionalContext& ctx, const SphereFunction& g, double s);

// Direct double-sphere quadrature of iint g |grad log g' - grad log g|^2 chi_s
// from closed-form point values: Gauss product grid outside, polar rule
// around sigma on theta > theta_0, and the excluded cap 1 - c < delta
// restored through the zonal symbol of chi_s on the cap.
struct DirectQuadratureOptions {
    int outer_L = 8;
    int inner_band = 12;
    double delta = 0.0;  // 0 selects (pi / n_theta)^2 of the base grid
};
KernelQuadratureReport frac_dissipation_direct(const FunctionalContext& ctx, const TestFunction& f, double s,
                                               const DirectQuadratureOptions& opt = {});

// ----------------------------------------------------------- reporting

struct FunctionalReport {
    std::string name;
    std::string member;  // family member label
    unsigned seed = 0;
    double s = 0.0;
    double value = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    double margin = 0.0;  // ratio minus the asserted threshold
    bool degenerate = false;
    bool pass = true;
    std::map<std::string, std::string> meta;
};

// Builds a ratio report; throws FunctionalError on NaN operands.
FunctionalReport make_ratio_report(const std::string& name, double lhs, double rhs, double threshold);

// Angular kernel evaluated at c = sigma.sigma'.
using AngularFunction = std::function<double(double)>;

struct LambdaOptions {
    int outer_L = 10;
    int theta_panels = 48;
    int theta_order = 8;
    int phi_nodes = 32;
    double theta_min = 1e-6;
};

struct LambdaEstimate {
    double estimate = 0.0;  // min over members of lhs / rhs
    std::vector<FunctionalReport> members;
    int skipped = 0;
};

// Upper bound on Lambda_b from a family of antipodally symmetric functions.
LambdaEstimate lambda_b_estimate(const AngularFunction& b, const std::vector<TestFunction>& family,
                                 const LambdaOptions& opt = {});

struct SuiteOptions {
    std::vector<double> s_values{0.5, 0.75, 0.9};
    double js_ratio_s = 0.75;
    double c0 = 4.0 / 3.0;
    double c1 = 1.0 / 432.0;
    double c0_slack = 1e-2;
    double c1_slack = 1e-4;
    double chain_slack = 1e-2;
    double route_tolerance = 2e-2;
    KOptions k;
    int threads = 1;
};

struct SuiteSummary {
    // (inequality name, s) -> minimum ratio over non-degenerate members
    std::map<std::pair<std::string, double>, double> min_ratio;
    bool all_pass = true;
};

using ReportSink = std::function<void(const FunctionalReport&)>;

SuiteSummary inequality_suite(const FunctionalContext& ctx, const std::vector<TestFunction>& family,
                              const SuiteOptions& opt, const ReportSink& sink);

}  // namespace kaclab
