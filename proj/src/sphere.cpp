#include "kaclab/sphere.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "kaclab/quadrature.hpp"

namespace kaclab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kFourPi = 4.0 * std::numbers::pi;

inline int tri(int l, int m) { return l * (l + 1) / 2 + m; }

// Normalized associated Legendre functions (no Condon-Shortley phase) and
// their theta derivatives for 0 <= m <= l <= L at c = cos(theta).
void legendre_normalized(int L, double c, double s, double* P, double* dP)
{
    double pmm = 1.0 / std::sqrt(kFourPi);
    for (int m = 0; m <= L; ++m) {
        if (m > 0) pmm *= s * std::sqrt((2.0 * m + 1.0) / (2.0 * m));
        P[tri(m, m)] = pmm;
        if (m + 1 <= L) P[tri(m + 1, m)] = c * std::sqrt(2.0 * m + 3.0) * pmm;
        for (int l = m + 2; l <= L; ++l) {
            const double a = std::sqrt((4.0 * l * l - 1.0) / (static_cast<double>(l) * l - m * m));
            const double b = std::sqrt(((l - 1.0) * (l - 1.0) - m * m) / (4.0 * (l - 1.0) * (l - 1.0) - 1.0));
            P[tri(l, m)] = a * (c * P[tri(l - 1, m)] - b * P[tri(l - 2, m)]);
        }
    }
    if (dP == nullptr) return;
    const double inv_s = 1.0 / s;
    for (int m = 0; m <= L; ++m) {
        for (int l = m; l <= L; ++l) {
            double v = l * c * P[tri(l, m)];
            if (l > m) {
                v -= std::sqrt((2.0 * l + 1.0) * (static_cast<double>(l) * l - m * m) / (2.0 * l - 1.0)) *
                     P[tri(l - 1, m)];
            }
            dP[tri(l, m)] = v * inv_s;
        }
    }
}

Vec3 e_theta(double c, double s, double ph) { return {c * std::cos(ph), c * std::sin(ph), -s}; }
Vec3 e_phi(double ph) { return {-std::sin(ph), std::cos(ph), 0.0}; }

}  // namespace

// ---------------------------------------------------------------- SphereGrid

SphereGrid::SphereGrid(int band_limit, int nt, int np) : L(band_limit), n_theta(nt), n_phi(np)
{
    if (L < 0) throw SphereError("SphereGrid: negative band limit");
    if (n_theta < 2 * L + 2 || n_phi < 2 * (2 * L + 1)) {
        throw SphereError("SphereGrid: grid " + std::to_string(nt) + "x" + std::to_string(np) +
                          " too coarse for band limit " + std::to_string(L));
    }
    const QuadratureRule g = gauss_legendre(n_theta);
    cos_theta = g.x;
    weight = g.w;
    sin_theta.resize(n_theta);
    for (int j = 0; j < n_theta; ++j) sin_theta[j] = std::sqrt((1.0 - cos_theta[j]) * (1.0 + cos_theta[j]));
    phi.resize(n_phi);
    for (int k = 0; k < n_phi; ++k) phi[k] = 2.0 * kPi * k / n_phi;
}

SphereGrid SphereGrid::for_band_limit(int L) { return SphereGrid(L, 2 * L + 2, 2 * (2 * L + 1)); }

Vec3 SphereGrid::point(int j, int k) const
{
    return {sin_theta[j] * std::cos(phi[k]), sin_theta[j] * std::sin(phi[k]), cos_theta[j]};
}

double SphereGrid::area_weight(int j) const { return weight[j] * 2.0 * kPi / n_phi; }

double SphereGrid::total_weight() const
{
    double acc = 0.0;
    for (int j = 0; j < n_theta; ++j) acc += area_weight(j) * n_phi;
    return acc;
}

// ---------------------------------------------------------- HarmonicSpectrum

HarmonicSpectrum HarmonicSpectrum::resized(int new_L) const
{
    HarmonicSpectrum out(new_L);
    const int Lmin = std::min(L, new_L);
    for (int l = 0; l <= Lmin; ++l)
        for (int m = -l; m <= l; ++m) out.at(l, m) = at(l, m);
    return out;
}

double HarmonicSpectrum::norm2() const
{
    double acc = 0.0;
    for (double v : c) acc += v * v;
    return acc;
}

// ----------------------------------------------------------- SphereTransform

SphereTransform::SphereTransform(SphereGrid grid) : grid_(std::move(grid))
{
    const int L = grid_.L;
    nlm_ = (L + 1) * (L + 2) / 2;
    P_.resize(static_cast<std::size_t>(grid_.n_theta) * nlm_);
    dP_.resize(P_.size());
    for (int j = 0; j < grid_.n_theta; ++j) {
        legendre_normalized(L, grid_.cos_theta[j], grid_.sin_theta[j], &P_[static_cast<std::size_t>(j) * nlm_],
                            &dP_[static_cast<std::size_t>(j) * nlm_]);
    }
    cos_.resize(static_cast<std::size_t>(grid_.n_phi) * (L + 1));
    sin_.resize(cos_.size());
    for (int k = 0; k < grid_.n_phi; ++k)
        for (int m = 0; m <= L; ++m) {
            cos_[static_cast<std::size_t>(k) * (L + 1) + m] = std::cos(m * grid_.phi[k]);
            sin_[static_cast<std::size_t>(k) * (L + 1) + m] = std::sin(m * grid_.phi[k]);
        }
}

void SphereTransform::check_values(const std::vector<double>& values) const
{
    if (values.size() != grid_.size()) {
        throw SphereError("grid/band-limit mismatch: got " + std::to_string(values.size()) +
                          " values for a grid of " + std::to_string(grid_.size()));
    }
}

HarmonicSpectrum SphereTransform::analysis(const std::vector<double>& values) const
{
    check_values(values);
    const int L = grid_.L;
    const int np = grid_.n_phi;
    HarmonicSpectrum out(L);
    std::vector<double> a(L + 1), b(L + 1);
    const double dphi = 2.0 * kPi / np;
    for (int j = 0; j < grid_.n_theta; ++j) {
        std::fill(a.begin(), a.end(), 0.0);
        std::fill(b.begin(), b.end(), 0.0);
        const double* row = &values[grid_.index(j, 0)];
        for (int k = 0; k < np; ++k) {
            const double f = row[k];
            const double* ck = &cos_[static_cast<std::size_t>(k) * (L + 1)];
            const double* sk = &sin_[static_cast<std::size_t>(k) * (L + 1)];
            for (int m = 0; m <= L; ++m) {
                a[m] += f * ck[m];
                b[m] += f * sk[m];
            }
        }
        const double w = grid_.weight[j] * dphi;
        const double* P = &P_[static_cast<std::size_t>(j) * nlm_];
        for (int m = 0; m <= L; ++m) {
            const double fa = (m == 0 ? 1.0 : std::numbers::sqrt2) * a[m] * w;
            const double fb = std::numbers::sqrt2 * b[m] * w;
            for (int l = m; l <= L; ++l) {
                const double p = P[tri(l, m)];
                out.at(l, m) += fa * p;
                if (m > 0) out.at(l, -m) += fb * p;
            }
        }
    }
    return out;
}

void SphereTransform::ring_coeffs(const HarmonicSpectrum& spec, int j, bool derivative,
                                  std::vector<double>& a, std::vector<double>& b) const
{
    const int L = grid_.L;
    const int Ls = std::min(L, spec.L);
    std::fill(a.begin(), a.end(), 0.0);
    std::fill(b.begin(), b.end(), 0.0);
    const double* P = &(derivative ? dP_ : P_)[static_cast<std::size_t>(j) * nlm_];
    for (int m = 0; m <= Ls; ++m) {
        double sa = 0.0, sb = 0.0;
        for (int l = m; l <= Ls; ++l) {
            const double p = P[tri(l, m)];
            sa += spec.at(l, m) * p;
            if (m > 0) sb += spec.at(l, -m) * p;
        }
        const double f = (m == 0 ? 1.0 : std::numbers::sqrt2);
        a[m] = f * sa;
        b[m] = f * sb;
    }
}

std::vector<double> SphereTransform::synthesis(const HarmonicSpectrum& spec) const
{
    if (spec.L > grid_.L) throw SphereError("synthesis: spectrum band limit exceeds the plan");
    const int L = grid_.L;
    std::vector<double> out(grid_.size());
    std::vector<double> a(L + 1), b(L + 1);
    for (int j = 0; j < grid_.n_theta; ++j) {
        ring_coeffs(spec, j, false, a, b);
        for (int k = 0; k < grid_.n_phi; ++k) {
            const double* ck = &cos_[static_cast<std::size_t>(k) * (L + 1)];
            const double* sk = &sin_[static_cast<std::size_t>(k) * (L + 1)];
            double v = 0.0;
            for (int m = 0; m <= spec.L; ++m) v += a[m] * ck[m] + b[m] * sk[m];
            out[grid_.index(j, k)] = v;
        }
    }
    return out;
}

TangentField SphereTransform::gradient(const HarmonicSpectrum& spec) const
{
    if (spec.L > grid_.L) throw SphereError("gradient: spectrum band limit exceeds the plan");
    const int L = grid_.L;
    TangentField out;
    out.x.resize(grid_.size());
    out.y.resize(grid_.size());
    out.z.resize(grid_.size());
    std::vector<double> a(L + 1), b(L + 1), da(L + 1), db(L + 1);
    for (int j = 0; j < grid_.n_theta; ++j) {
        ring_coeffs(spec, j, false, a, b);
        ring_coeffs(spec, j, true, da, db);
        const double c = grid_.cos_theta[j];
        const double s = grid_.sin_theta[j];
        for (int k = 0; k < grid_.n_phi; ++k) {
            const double* ck = &cos_[static_cast<std::size_t>(k) * (L + 1)];
            const double* sk = &sin_[static_cast<std::size_t>(k) * (L + 1)];
            double gt = 0.0, gp = 0.0;
            for (int m = 0; m <= spec.L; ++m) {
                gt += da[m] * ck[m] + db[m] * sk[m];
                gp += m * (b[m] * ck[m] - a[m] * sk[m]);
            }
            gp /= s;
            const double ph = grid_.phi[k];
            const Vec3 g = gt * e_theta(c, s, ph) + gp * e_phi(ph);
            const std::size_t idx = grid_.index(j, k);
            out.x[idx] = g.x;
            out.y[idx] = g.y;
            out.z[idx] = g.z;
        }
    }
    return out;
}

std::array<std::vector<double>, 3> SphereTransform::b_derivatives(const HarmonicSpectrum& spec) const
{
    const TangentField g = gradient(spec);
    std::array<std::vector<double>, 3> out;
    for (auto& v : out) v.resize(grid_.size());
    for (int j = 0; j < grid_.n_theta; ++j)
        for (int k = 0; k < grid_.n_phi; ++k) {
            const std::size_t idx = grid_.index(j, k);
            const Vec3 sigma = grid_.point(j, k);
            const Vec3 gv{g.x[idx], g.y[idx], g.z[idx]};
            for (int d = 0; d < 3; ++d) out[d][idx] = dot(b_field(d + 1, sigma), gv);
        }
    return out;
}

double SphereTransform::integrate(const std::vector<double>& values) const
{
    check_values(values);
    double acc = 0.0;
    for (int j = 0; j < grid_.n_theta; ++j) {
        double ring = 0.0;
        for (int k = 0; k < grid_.n_phi; ++k) ring += values[grid_.index(j, k)];
        acc += grid_.area_weight(j) * ring;
    }
    return acc;
}

double SphereTransform::inner(const std::vector<double>& a, const std::vector<double>& b) const
{
    check_values(a);
    check_values(b);
    double acc = 0.0;
    for (int j = 0; j < grid_.n_theta; ++j) {
        double ring = 0.0;
        for (int k = 0; k < grid_.n_phi; ++k) ring += a[grid_.index(j, k)] * b[grid_.index(j, k)];
        acc += grid_.area_weight(j) * ring;
    }
    return acc;
}

std::vector<double> SphereTransform::sample(const std::function<double(const Vec3&)>& f) const
{
    std::vector<double> out(grid_.size());
    for (int j = 0; j < grid_.n_theta; ++j)
        for (int k = 0; k < grid_.n_phi; ++k) out[grid_.index(j, k)] = f(grid_.point(j, k));
    return out;
}

// ---------------------------------------------------------- point evaluation

void evaluate_with_gradient(const HarmonicSpectrum& spec, const Vec3& sigma_in, double& value, Vec3& grad)
{
    const int L = spec.L;
    const Vec3 sigma = (1.0 / norm(sigma_in)) * sigma_in;
    const double c = std::clamp(sigma.z, -1.0, 1.0);
    double s = std::hypot(sigma.x, sigma.y);
    double ph = std::atan2(sigma.y, sigma.x);
    // The gradient formula needs sin(theta) > 0; nudge exact poles.
    const bool at_pole = s < 1e-10;
    if (at_pole) s = 1e-10;
    thread_local std::vector<double> P, dP;
    P.resize((L + 1) * (L + 2) / 2);
    dP.resize(P.size());
    legendre_normalized(L, c, s, P.data(), dP.data());
    double v = 0.0, gt = 0.0, gp = 0.0;
    for (int m = 0; m <= L; ++m) {
        const double cm = std::cos(m * ph), sm = std::sin(m * ph);
        const double f = (m == 0 ? 1.0 : std::numbers::sqrt2);
        for (int l = m; l <= L; ++l) {
            const double ac = spec.at(l, m);
            const double as = m > 0 ? spec.at(l, -m) : 0.0;
            const double trig = ac * cm + as * sm;
            v += f * P[tri(l, m)] * trig;
            gt += f * dP[tri(l, m)] * trig;
            gp += f * P[tri(l, m)] * m * (as * cm - ac * sm);
        }
    }
    value = v;
    gp /= s;
    grad = gt * e_theta(c, s, ph) + gp * e_phi(ph);
    if (at_pole) grad = grad - dot(grad, sigma) * sigma;
}

double evaluate(const HarmonicSpectrum& spec, const Vec3& sigma)
{
    double v;
    Vec3 g;
    evaluate_with_gradient(spec, sigma, v, g);
    return v;
}

Vec3 evaluate_gradient(const HarmonicSpectrum& spec, const Vec3& sigma)
{
    double v;
    Vec3 g;
    evaluate_with_gradient(spec, sigma, v, g);
    return g;
}

double real_harmonic(int l, int m, const Vec3& sigma)
{
    HarmonicSpectrum spec(l);
    spec.at(l, m) = 1.0;
    return evaluate(spec, sigma);
}

// ------------------------------------------------------------ linear algebra

void apply_floor(std::vector<double>& values)
{
    double mx = 0.0;
    for (double v : values) mx = std::max(mx, v);
    const double eps = kFloorFraction * mx;
    for (double& v : values) v = std::max(v, eps);
}

HarmonicSpectrum laplacian_power(const HarmonicSpectrum& spec, double nu)
{
    HarmonicSpectrum out = spec;
    for (int l = 0; l <= spec.L; ++l) {
        const double f = l == 0 ? 0.0 : std::pow(sh_eigenvalue(l), nu);
        for (int m = -l; m <= l; ++m) out.at(l, m) *= f;
    }
    return out;
}

HarmonicSpectrum laplacian(const HarmonicSpectrum& spec, double s)
{
    if (!(s > 0.0 && s <= 1.0)) throw SphereError("laplacian: power must lie in (0, 1]");
    return laplacian_power(spec, s);
}

HarmonicSpectrum heat_flow(const HarmonicSpectrum& spec, double t)
{
    if (!(t >= 0.0)) throw SphereError("heat_flow: negative time");
    HarmonicSpectrum out = spec;
    for (int l = 1; l <= spec.L; ++l) {
        const double f = std::exp(-sh_eigenvalue(l) * t);
        for (int m = -l; m <= l; ++m) out.at(l, m) *= f;
    }
    return out;
}

SphereFunction heat_flow(const SphereFunction& f, double t)
{
    SphereFunction out = f;
    out.values = f.plan->synthesis(heat_flow(f.spectrum(), t));
    if (f.nonnegative) apply_floor(out.values);
    return out;
}

// ------------------------------------------------------------- heat kernels

double heat_kernel(double c, double t, int cap)
{
    if (!(t > 0.0)) throw SphereError("heat_kernel: t must be positive");
    c = std::clamp(c, -1.0, 1.0);
    double p0 = 1.0, p1 = c;
    double acc = 1.0 / kFourPi;
    for (int l = 1;; ++l) {
        const double lam = sh_eigenvalue(l);
        const double amp = (2.0 * l + 1.0) * std::exp(-lam * t) / kFourPi;
        if (amp < 1e-14) break;
        if (l > cap) {
            throw SphereError("heat_kernel: series needs more than the cap of " + std::to_string(cap) +
                              " terms at t = " + std::to_string(t));
        }
        double pl;
        if (l == 1) {
            pl = p1;
        } else {
            pl = ((2.0 * l - 1.0) * c * p1 - (l - 1.0) * p0) / l;
            p0 = p1;
            p1 = pl;
        }
        acc += amp * pl;
    }
    return acc;
}

double subordination_constant(double s)
{
    if (!(s > 0.0 && s < 1.0)) throw SphereError("subordination_constant: s must lie in (0, 1)");
    return std::tgamma(1.0 - s) / s;
}

namespace {

// Integral over [0, x] of (1 - e^{-u}) u^{-1-s} du by its power series.
double small_tail_unit(double x, double s)
{
    double acc = 0.0;
    double term = 1.0;  // x^n / n!
    for (int n = 1; n < 200; ++n) {
        term *= x / n;
        const double add = ((n % 2 == 1) ? 1.0 : -1.0) * term / (n - s) * std::pow(x, -s);
        acc += add;
        if (std::abs(add) < 1e-18 * std::abs(acc)) break;
    }
    return acc;
}

}  // namespace

double subordination_symbol(double lambda, double s, const SubordinationQuadrature& q)
{
    if (lambda <= 0.0) return 0.0;
    const QuadratureRule r = log_simpson(q.t_min, q.t_max, q.nodes);
    double acc = 0.0;
    for (std::size_t i = 0; i < r.x.size(); ++i) {
        const double t = r.x[i];
        acc += r.w[i] * (-std::expm1(-lambda * t)) * std::pow(t, -1.0 - s);
    }
    const double x0 = lambda * q.t_min;
    acc += std::pow(lambda, s) * small_tail_unit(x0, s);
    // [t_max, inf): t^{-s}/s minus lambda^s Gamma(-s, lambda t_max).
    const double x1 = lambda * q.t_max;
    const double upper = x1 < 700.0 ? std::pow(lambda, s) *
                                          (boost::math::tgamma(1.0 - s, x1) - std::pow(x1, -s) * std::exp(-x1)) / s
                                    : 0.0;
    // Gamma(-s, x) = (Gamma(1-s, x) - x^{-s} e^{-x}) / (-s)
    acc += std::pow(q.t_max, -s) / s + upper;
    return acc;
}

HarmonicSpectrum frac_laplacian_subordination(const HarmonicSpectrum& spec, double s,
                                              const SubordinationQuadrature& q)
{
    const double cs = subordination_constant(s);
    HarmonicSpectrum out = spec;
    for (int l = 0; l <= spec.L; ++l) {
        const double f = subordination_symbol(sh_eigenvalue(l), s, q) / cs;
        for (int m = -l; m <= l; ++m) out.at(l, m) *= f;
    }
    return out;
}

double chi_s(double c, double s, const SubordinationQuadrature& q)
{
    if (!(c < 1.0)) throw SphereError("chi_s: singular at c = 1");
    if (!(s > 0.0 && s < 1.0)) throw SphereError("chi_s: s must lie in (0, 1)");
    c = std::max(c, -1.0);
    const double theta = std::acos(c);
    const double a = 0.25 * theta * theta;
    const QuadratureRule r = log_simpson(q.t_min, q.t_max, q.nodes);
    double acc = 0.0;
    for (std::size_t i = 0; i < r.x.size(); ++i) {
        const double t = r.x[i];
        if (a / t > 60.0) continue;
        acc += r.w[i] * heat_kernel(c, t) * std::pow(t, -1.0 - s);
    }
    // Below t_min the kernel is its Gaussian short-time form.
    if (a / q.t_min < 60.0) {
        const double geo = theta > 1e-8 ? std::sqrt(theta / std::sin(theta)) : 1.0;
        acc += geo / kFourPi * std::pow(a, -1.0 - s) * boost::math::tgamma(1.0 + s, a / q.t_min);
    }
    acc += std::pow(q.t_max, -s) / (kFourPi * s);
    return subordination_constant(s) * acc;
}

// ------------------------------------------------------------------ ChiTable

using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;

ChiTable::ChiTable(double s, const SubordinationQuadrature& q, int n) : s_(s)
{
    if (!(s > 0.0 && s < 1.0)) throw SphereError("ChiTable: s must lie in (0, 1)");
    log_lo_ = std::log(1e-4);
    log_hi_ = std::log(kPi);
    h_ = (log_hi_ - log_lo_) / (n - 1);
    q_.resize(n);
    for (int i = 0; i < n; ++i) {
        const double th = std::exp(log_lo_ + h_ * i);
        const double c = i == n - 1 ? -1.0 : std::cos(th);
        q_[i] = chi_s(c, s, q) * std::pow(th, 2.0 + 2.0 * s);
    }
    spline_ = std::make_shared<Spline>(q_.begin(), q_.end(), log_lo_, h_);
}

double ChiTable::at_theta(double theta) const
{
    const double th = std::clamp(theta, std::exp(log_lo_), kPi);
    const double x = std::clamp(std::log(th), log_lo_, log_hi_);
    const double qv = (*static_cast<const Spline*>(spline_.get()))(x);
    return qv * std::pow(std::max(theta, 1e-300), -2.0 - 2.0 * s_);
}

double ChiTable::operator()(double c) const
{
    if (!(c < 1.0)) throw SphereError("ChiTable: singular at c = 1");
    return at_theta(std::acos(std::max(c, -1.0)));
}

double ChiTable::lower_bound_constant() const
{
    double best = std::numeric_limits<double>::infinity();
    const int n = static_cast<int>(q_.size());
    for (int i = 0; i < n - 1; ++i) {
        const double th = std::exp(log_lo_ + h_ * i);
        const double chi = q_[i] * std::pow(th, -2.0 - 2.0 * s_);
        best = std::min(best, std::sin(th) * chi * std::pow(th, 1.0 + 2.0 * s_));
    }
    return best;
}

// ---------------------------------------------------------- zonal integrals

std::vector<double> zonal_symbol(const std::function<double(double)>& chi_theta, double s, int l_max,
                                 double theta_lo, double theta_hi)
{
    if (theta_hi <= 0.0) theta_hi = kPi;
    std::vector<double> mu(l_max + 1, 0.0);
    // theta = theta_lo + (theta_hi - theta_lo) y^p makes the integrand
    // chi sin (1 - P_l) ~ theta^{1-2s} smooth in y near theta_lo = 0.
    const double p = theta_lo > 0.0 ? 1.0 : 2.0 / (2.0 - 2.0 * s);
    const int panels = 64 + 8 * l_max;
    const QuadratureRule g = gauss_legendre(12, 0.0, 1.0);
    std::vector<double> P(l_max + 1);
    const double span = theta_hi - theta_lo;
    for (int pi = 0; pi < panels; ++pi) {
        for (std::size_t i = 0; i < g.x.size(); ++i) {
            const double y = (pi + g.x[i]) / panels;
            const double th = theta_lo + span * std::pow(y, p);
            const double jac = span * p * std::pow(y, p - 1.0) * g.w[i] / panels;
            const double c = std::cos(th);
            const double x = 2.0 * std::sin(0.5 * th) * std::sin(0.5 * th);  // 1 - c
            const double w = 2.0 * kPi * chi_theta(th) * std::sin(th) * jac;
            // 1 - P_l(c) via the recurrence on q_l = 1 - P_l to keep precision.
            double q0 = 0.0, q1 = x;
            if (l_max >= 1) mu[1] += w * q1;
            for (int l = 2; l <= l_max; ++l) {
                // P_l = ((2l-1) c P_{l-1} - (l-1) P_{l-2}) / l with P = 1 - q
                const double ql = ((2.0 * l - 1.0) * (c * q1 + x) - (l - 1.0) * q0) / l;
                q0 = q1;
                q1 = ql;
                mu[l] += w * ql;
            }
        }
    }
    return mu;
}

// ------------------------------------------------------ Sobolev seminorms

double sobolev_seminorm_sq(const HarmonicSpectrum& spec, double nu)
{
    if (!(nu >= 0.0)) throw SphereError("sobolev_seminorm: nu must be non-negative");
    double acc = 0.0;
    for (int l = 1; l <= spec.L; ++l) {
        const double f = std::pow(sh_eigenvalue(l), nu);
        for (int m = -l; m <= l; ++m) acc += f * spec.at(l, m) * spec.at(l, m);
    }
    if (nu == 0.0) acc += spec.at(0, 0) * spec.at(0, 0);
    return acc;
}

double sobolev_seminorm(const HarmonicSpectrum& spec, double nu) { return std::sqrt(sobolev_seminorm_sq(spec, nu)); }

// ------------------------------------------------ double-sphere quadrature

namespace {

// Orthonormal frame (e1, e2) perpendicular to sigma.
void tangent_frame(const Vec3& sigma, Vec3& e1, Vec3& e2)
{
    const Vec3 a = std::abs(sigma.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    e1 = a - dot(a, sigma) * sigma;
    e1 = (1.0 / norm(e1)) * e1;
    e2 = cross(sigma, e1);
}

struct PolarRule {
    std::vector<double> theta, w_theta;  // includes sin(theta)
    int n_phi = 0;
};

// Rule on [theta0, pi] graded toward theta0, weights include sin(theta).
PolarRule polar_rule(double theta0, int band)
{
    PolarRule r;
    const int panels = 8 + band;
    const QuadratureRule g = gauss_legendre(10, 0.0, 1.0);
    const double l0 = std::log(theta0), l1 = std::log(kPi);
    for (int p = 0; p < panels; ++p)
        for (std::size_t i = 0; i < g.x.size(); ++i) {
            const double y = (p + g.x[i]) / panels;
            const double th = std::exp(l0 + (l1 - l0) * y);
            r.theta.push_back(th);
            r.w_theta.push_back(g.w[i] / panels * (l1 - l0) * th * std::sin(th));
        }
    r.n_phi = 2 * band + 4;
    return r;
}

double cap_theta(double delta) { return std::acos(1.0 - delta); }

}  // namespace

std::vector<double> frac_laplacian_kernel(const HarmonicSpectrum& spec, const ChiTable& chi,
                                          const std::vector<Vec3>& points, double delta,
                                          KernelQuadratureReport* report)
{
    const double s = chi.s();
    const double cs = subordination_constant(s);
    const double th0 = cap_theta(delta);
    const PolarRule rule = polar_rule(th0, spec.L);
    const auto chi_th = [&](double th) { return chi.at_theta(th); };
    const std::vector<double> mu_cap = zonal_symbol(chi_th, s, spec.L, 0.0, th0);
    HarmonicSpectrum cap_spec = spec;
    for (int l = 0; l <= spec.L; ++l)
        for (int m = -l; m <= l; ++m) cap_spec.at(l, m) *= mu_cap[l];

    std::vector<double> out;
    out.reserve(points.size());
    double cap_total = 0.0;
    for (const Vec3& sigma_in : points) {
        const Vec3 sigma = (1.0 / norm(sigma_in)) * sigma_in;
        Vec3 e1, e2;
        tangent_frame(sigma, e1, e2);
        const double g0 = evaluate(spec, sigma);
        double acc = 0.0;
        for (std::size_t i = 0; i < rule.theta.size(); ++i) {
            const double th = rule.theta[i];
            const double c = std::cos(th), sn = std::sin(th);
            double ring = 0.0;
            for (int k = 0; k < rule.n_phi; ++k) {
                const double ph = 2.0 * kPi * k / rule.n_phi;
                const Vec3 sp = c * sigma + sn * (std::cos(ph) * e1 + std::sin(ph) * e2);
                ring += g0 - evaluate(spec, sp);
            }
            acc += rule.w_theta[i] * chi.at_theta(th) * ring * (2.0 * kPi / rule.n_phi);
        }
        const double cap = evaluate(cap_spec, sigma);
        cap_total += std::abs(cap);
        out.push_back((acc + cap) / (cs * cs));
    }
    if (report != nullptr) {
        report->cap_correction = cap_total / std::max<std::size_t>(1, points.size()) / (cs * cs);
        report->excluded_measure = 2.0 * kPi * delta;
        report->delta = delta;
    }
    return out;
}

namespace {

// Shared driver: sum over the k fields of (1/2) iint (f_k' - f_k)^2 chi on
// an outer Gauss grid with a polar inner rule outside the cap, plus the
// exact zonal cap term sum_l mu_l^cap [2 f f_l - (f^2)_l].
KernelQuadratureReport double_integral(const std::vector<HarmonicSpectrum>& fields, const ChiTable& chi,
                                       double delta,
                                       const std::function<double(const Vec3&, const Vec3&)>& pair_sq)
{
    const double s = chi.s();
    const double cs = subordination_constant(s);
    int L = 0;
    for (const auto& f : fields) L = std::max(L, f.L);
    const double th0 = cap_theta(delta);
    const PolarRule rule = polar_rule(th0, 2 * L);
    const auto chi_th = [&](double th) { return chi.at_theta(th); };
    const std::vector<double> mu_cap = zonal_symbol(chi_th, s, 2 * L, 0.0, th0);

    const SphereTransform outer(SphereGrid::for_band_limit(2 * L));
    const SphereGrid& grid = outer.grid();

    // Cap term on the outer grid.
    std::vector<double> cap(grid.size(), 0.0);
    for (const auto& f : fields) {
        const HarmonicSpectrum f2 = f.resized(2 * L);
        const std::vector<double> vals = outer.synthesis(f2);
        std::vector<double> sq(vals.size());
        for (std::size_t i = 0; i < vals.size(); ++i) sq[i] = vals[i] * vals[i];
        HarmonicSpectrum sq_spec = outer.analysis(sq);
        HarmonicSpectrum f_mu = f2;
        for (int l = 0; l <= 2 * L; ++l)
            for (int m = -l; m <= l; ++m) {
                sq_spec.at(l, m) *= mu_cap[l];
                f_mu.at(l, m) *= mu_cap[l];
            }
        const std::vector<double> a = outer.synthesis(f_mu);
        const std::vector<double> b = outer.synthesis(sq_spec);
        for (std::size_t i = 0; i < vals.size(); ++i) cap[i] += 2.0 * vals[i] * a[i] - b[i];
    }

    double main = 0.0;
    for (int j = 0; j < grid.n_theta; ++j) {
        double ring_acc = 0.0;
        for (int k = 0; k < grid.n_phi; ++k) {
            const Vec3 sigma = grid.point(j, k);
            Vec3 e1, e2;
            tangent_frame(sigma, e1, e2);
            double acc = 0.0;
            for (std::size_t i = 0; i < rule.theta.size(); ++i) {
                const double th = rule.theta[i];
                const double c = std::cos(th), sn = std::sin(th);
                double ring = 0.0;
                for (int q = 0; q < rule.n_phi; ++q) {
                    const double ph = 2.0 * kPi * q / rule.n_phi;
                    const Vec3 sp = c * sigma + sn * (std::cos(ph) * e1 + std::sin(ph) * e2);
                    ring += pair_sq(sigma, sp);
                }
                acc += rule.w_theta[i] * chi.at_theta(th) * ring * (2.0 * kPi / rule.n_phi);
            }
            ring_acc += acc;
        }
        main += grid.area_weight(j) * ring_acc;
    }
    KernelQuadratureReport rep;
    const double cap_int = outer.integrate(cap);
    rep.value = 0.5 * (main + cap_int) / (cs * cs);
    rep.cap_correction = 0.5 * cap_int / (cs * cs);
    rep.excluded_measure = 2.0 * kPi * delta;
    rep.delta = delta;
    return rep;
}

}  // namespace

KernelQuadratureReport gagliardo_seminorm_sq(const HarmonicSpectrum& spec, const ChiTable& chi, double delta)
{
    return double_integral({spec}, chi, delta, [&](const Vec3& a, const Vec3& b) {
        const double d = evaluate(spec, b) - evaluate(spec, a);
        return d * d;
    });
}

KernelQuadratureReport gagliardo_grad_seminorm_sq(const HarmonicSpectrum& spec, const ChiTable& chi,
                                                  double delta)
{
    // Cap term uses u_k = b_k . grad g, which stay in the same degrees.
    const int L = spec.L;
    const SphereTransform plan(SphereGrid::for_band_limit(L));
    const auto u = plan.b_derivatives(spec);
    std::vector<HarmonicSpectrum> fields;
    for (const auto& uk : u) fields.push_back(plan.analysis(uk));
    return double_integral(fields, chi, delta, [&](const Vec3& a, const Vec3& b) {
        return tangent_diff_sq_unchecked(evaluate_gradient(spec, b), evaluate_gradient(spec, a), b, a);
    });
}

}  // namespace kaclab
