#include "kaclab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_sf_gamma.h>

#include "kaclab/quadrature.hpp"
#include "kaclab/sphere.hpp"

namespace kaclab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kFourPi = 4.0 * std::numbers::pi;

// Integral over [0, x] of (1 - e^{-u}) u^{-1-s} du as a power series.
double unit_small(double x, double s)
{
    if (x <= 0.0) return 0.0;
    double acc = 0.0, term = 1.0;
    for (int n = 1; n < 400; ++n) {
        term *= x / n;
        const double add = ((n % 2 == 1) ? 1.0 : -1.0) * term / (n - s);
        acc += add;
        if (std::abs(add) < 1e-18 * std::abs(acc)) break;
    }
    return acc * std::pow(x, -s);
}

// Upper incomplete gamma for any real a and x > 0; underflow gives 0.
double gamma_upper(double a, double x)
{
    if (x > 700.0) return 0.0;
    // Status codes are checked here, so the aborting default handler is
    // switched off once for the process.
    static const bool quiet = [] {
        gsl_set_error_handler_off();
        return true;
    }();
    (void)quiet;
    gsl_sf_result r;
    const int status = gsl_sf_gamma_inc_e(a, x, &r);
    if (status == GSL_EUNDRFLW) return 0.0;
    if (status != GSL_SUCCESS) throw KernelError("incomplete gamma failed at a = " + std::to_string(a));
    return r.val;
}

double gk(const std::function<double(double)>& f, double a, double b)
{
    if (!(b > a)) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 12, 1e-13);
}

}  // namespace

// ------------------------------------------------------------- power laws

PowerLawParams power_law(double q)
{
    if (!(q > 2.0 && q <= 7.0 / 3.0 + 1e-12))
        throw KernelError("power_law: q must lie in (2, 7/3], got " + std::to_string(q));
    PowerLawParams p;
    p.q = q;
    p.gamma = (q - 5.0) / (q - 1.0);
    p.s = 1.0 / (q - 1.0);
    p.moment_threshold = (5.0 - q) * (q + 3.0) / ((q - 1.0) * (3.0 * q - 5.0));
    return p;
}

// ----------------------------------------------------------- omega weights

OmegaWeight OmegaWeight::power(double s)
{
    if (!(s > 0.0 && s < 1.0)) throw KernelError("omega: s must lie in (0, 1)");
    OmegaWeight w;
    w.s_ = s;
    w.a0_ = 1.0;
    w.p_inf_ = -1.0 - s;
    w.a_inf_ = 1.0;
    return w;
}

OmegaWeight OmegaWeight::table(std::vector<double> t, std::vector<double> v)
{
    if (t.size() != v.size() || t.size() < 2) throw KernelError("omega table: need at least two (t, omega) rows");
    OmegaWeight w;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!(t[i] > 0.0) || !(v[i] > 0.0) || !std::isfinite(t[i]) || !std::isfinite(v[i]))
            throw KernelError("omega table: t and omega must be positive and finite");
        if (i > 0 && !(t[i] > t[i - 1])) throw KernelError("omega table: t must be strictly increasing");
        w.log_t_.push_back(std::log(t[i]));
        w.log_w_.push_back(std::log(v[i]));
    }
    w.table_t_ = std::move(t);
    const std::size_t n = w.log_t_.size();
    const double p0 = (w.log_w_[1] - w.log_w_[0]) / (w.log_t_[1] - w.log_t_[0]);
    w.s_ = -1.0 - p0;
    if (!(w.s_ > 0.0 && w.s_ < 1.0))
        throw KernelError("omega table: small-t slope must be -1-s with s in (0, 1), got slope " + std::to_string(p0) +
                          " (a bounded or non-integrable kernel)");
    w.a0_ = std::exp(w.log_w_[0] - p0 * w.log_t_[0]);
    w.p_inf_ = (w.log_w_[n - 1] - w.log_w_[n - 2]) / (w.log_t_[n - 1] - w.log_t_[n - 2]);
    if (!(w.p_inf_ < -1.0)) throw KernelError("omega table: large-t slope must be below -1 for integrability");
    w.a_inf_ = std::exp(w.log_w_[n - 1] - w.p_inf_ * w.log_t_[n - 1]);
    return w;
}

OmegaWeight OmegaWeight::from_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw KernelError("omega table: cannot open " + path);
    std::vector<double> t, v;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        double a, b;
        if (!(ss >> a >> b)) {
            if (t.empty()) continue;  // header
            throw KernelError("omega table: malformed row '" + line + "'");
        }
        t.push_back(a);
        v.push_back(b);
    }
    return table(std::move(t), std::move(v));
}

double OmegaWeight::operator()(double t) const
{
    if (!(t > 0.0)) return 0.0;
    if (is_power()) return std::pow(t, -1.0 - s_);
    if (t <= table_t_.front()) return a0_ * std::pow(t, -1.0 - s_);
    if (t >= table_t_.back()) return a_inf_ * std::pow(t, p_inf_);
    const double lt = std::log(t);
    const auto it = std::upper_bound(log_t_.begin(), log_t_.end(), lt);
    const std::size_t i = static_cast<std::size_t>(it - log_t_.begin()) - 1;
    const double f = (lt - log_t_[i]) / (log_t_[i + 1] - log_t_[i]);
    return std::exp(log_w_[i] + f * (log_w_[i + 1] - log_w_[i]));
}

// Integral of g over [lo, hi] in u = log t, split at table knots and unit
// steps in u.
double OmegaWeight::integrate_table(const std::function<double(double)>& g, double lo, double hi) const
{
    if (!(hi > lo)) return 0.0;
    std::vector<double> cuts{std::log(lo), std::log(hi)};
    for (double k : log_t_)
        if (k > cuts[0] && k < cuts[1]) cuts.push_back(k);
    for (double u = std::ceil(cuts[0]); u < cuts[1]; u += 1.0)
        if (u > cuts[0]) cuts.push_back(u);
    std::sort(cuts.begin(), cuts.end());
    const auto f = [&](double u) {
        const double t = std::exp(u);
        return g(t) * t;
    };
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) acc += gk(f, cuts[i], cuts[i + 1]);
    return acc;
}

double OmegaWeight::laplace_tail(double lambda, double eps) const
{
    if (!(eps > 0.0)) throw KernelError("laplace_tail: eps must be positive");
    if (lambda < 0.0) throw KernelError("laplace_tail: negative lambda");
    if (is_power()) {
        if (lambda == 0.0) return std::pow(eps, -s_) / s_;
        return std::pow(lambda, s_) * gamma_upper(-s_, lambda * eps);
    }
    const double tn = table_t_.back();
    double hi = lambda > 0.0 ? std::max(eps, 45.0 / lambda) : std::max(eps, tn);
    double acc = integrate_table([&](double t) { return std::exp(-lambda * t) * (*this)(t); }, eps, hi);
    if (lambda == 0.0) acc += a_inf_ * std::pow(hi, p_inf_ + 1.0) / (-p_inf_ - 1.0);
    return acc;
}

double OmegaWeight::bernstein(double lambda, double eps) const
{
    if (eps < 0.0) throw KernelError("bernstein: negative eps");
    if (lambda <= 0.0) return 0.0;
    if (is_power()) {
        const double x = lambda * eps;
        const double full = std::tgamma(1.0 - s_) / s_;
        if (x <= 1.0) return std::pow(lambda, s_) * (full - unit_small(x, s_));
        return std::pow(eps, -s_) / s_ - laplace_tail(lambda, eps);
    }
    double acc = 0.0;
    const double t0 = table_t_.front();
    double lo = eps;
    if (eps < t0 && lambda * t0 <= 20.0) {
        acc += a0_ * std::pow(lambda, s_) * (unit_small(lambda * t0, s_) - unit_small(lambda * eps, s_));
        lo = t0;
    } else if (eps == 0.0) {
        throw KernelError("bernstein: table starts too late for the small-t series");
    }
    const double hi = std::max({lo, table_t_.back(), 45.0 / lambda});
    acc += integrate_table([&](double t) { return -std::expm1(-lambda * t) * (*this)(t); }, lo, hi);
    acc += a_inf_ * std::pow(hi, p_inf_ + 1.0) / (-p_inf_ - 1.0);
    return acc;
}

// ------------------------------------------------------------- b-bar

double bbar(const std::function<double(double)>& b)
{
    constexpr double x_min = 1e-10;
    // In u = log(1 - c) the integrand (1 - c) b dc becomes x^2 b(1 - x) du.
    const auto g = [&](double x) { return x * x * b(1.0 - x); };
    const auto f = [&](double u) { return g(std::exp(u)); };
    double acc = 0.0;
    const double u0 = std::log(x_min), u1 = std::log(2.0);
    for (double u = u0; u < u1; u += 1.0) acc += gk(f, u, std::min(u + 1.0, u1));
    const double g1 = g(x_min), g2 = g(10.0 * x_min);
    double tail = 0.0;
    if (g1 > 0.0 || g2 > 0.0) {
        const double p = std::log10(g2 / g1);
        if (!(p > 0.05)) throw KernelError("bbar: kernel is not integrable against (1 - c) at c = 1");
        tail = g1 / p;
    }
    const double out = kPi * (acc + tail);
    if (!std::isfinite(out) || out > 1e300) throw KernelError("bbar: kernel is not integrable");
    return out;
}

// ------------------------------------------------------ subordinate kernels

double subordinate_kernel(double c, const OmegaWeight& w)
{
    if (!(c < 1.0)) throw KernelError("subordinate_kernel: singular at c = 1");
    c = std::max(c, -1.0);
    const SubordinationQuadrature q;
    const double theta = std::acos(c);
    const double a = 0.25 * theta * theta;
    const QuadratureRule r = log_simpson(q.t_min, q.t_max, q.nodes);
    double acc = 0.0;
    for (std::size_t i = 0; i < r.x.size(); ++i) {
        const double t = r.x[i];
        if (a / t > 60.0) continue;
        acc += r.w[i] * heat_kernel(c, t) * w(t);
    }
    // Short times: Gaussian form of the heat kernel against A t^{-1-s}.
    if (a / q.t_min < 60.0) {
        const double geo = theta > 1e-8 ? std::sqrt(theta / std::sin(theta)) : 1.0;
        const double s = w.s();
        acc += geo / kFourPi * w.small_prefactor() * std::pow(a, -1.0 - s) *
               boost::math::tgamma(1.0 + s, a / q.t_min);
    }
    // Long times: the kernel is flat.
    acc += w.laplace_tail(0.0, q.t_max) / kFourPi;
    return acc;
}

TruncatedSubordinate::TruncatedSubordinate(const OmegaWeight& w, double eps) : eps_(eps)
{
    if (!(eps > 0.0)) throw KernelError("TruncatedSubordinate: eps must be positive");
    double sum = 0.0;
    for (int l = 0;; ++l) {
        const double lam = sh_eigenvalue(l);
        const double m = (2.0 * l + 1.0) / kFourPi * w.laplace_tail(lam, eps);
        m_.push_back(m);
        sum += m;
        if (lam * eps > 40.0 && m < 1e-17 * sum) break;
        if (l > 200000) throw KernelError("TruncatedSubordinate: series does not converge");
    }
}

double TruncatedSubordinate::operator()(double c) const
{
    c = std::clamp(c, -1.0, 1.0);
    double p0 = 1.0, p1 = c;
    double acc = m_[0];
    for (std::size_t l = 1; l < m_.size(); ++l) {
        double pl;
        if (l == 1) {
            pl = p1;
        } else {
            pl = ((2.0 * l - 1.0) * c * p1 - (l - 1.0) * p0) / l;
            p0 = p1;
            p1 = pl;
        }
        acc += m_[l] * pl;
    }
    return acc;
}

double lambda_lower_bound(const OmegaWeight& w, double eps, double lambda_loc)
{
    const double num = w.bernstein(2.0 * lambda_loc, eps);
    const double den = w.bernstein(6.0, eps);
    if (!std::isfinite(num) || !std::isfinite(den) || !(den > 0.0))
        throw KernelError("lambda_lower_bound: weight is not integrable");
    return 3.0 * num / den;
}

double h1_margin(double lambda_bound, double gamma, double lambda)
{
    return 2.0 * std::sqrt(lambda_bound * (1.0 - lambda)) - std::abs(gamma);
}

double solve_u_k(const OmegaWeight& w, double ratio, double rho)
{
    if (!(rho > 0.0)) throw KernelError("solve_u_k: rho must be positive");
    const auto f = [&](double u) { return ratio * TruncatedSubordinate(w, u)(1.0); };
    double hi = 1.0;
    while (f(hi) > rho) hi *= 4.0;
    double lo = hi;
    while (f(lo) < rho) {
        lo *= 0.25;
        if (lo < 1e-14) throw KernelError("solve_u_k: floor too large to bracket");
    }
    if (lo == hi) hi = 4.0 * lo;
    while (hi / lo - 1.0 > 1e-10) {
        const double mid = std::sqrt(lo * hi);
        (f(mid) > rho ? lo : hi) = mid;
    }
    return std::sqrt(lo * hi);
}

// ---------------------------------------------------------------- sampler

AngularSampler::AngularSampler(const std::function<double(double)>& b, int cells, int order)
{
    if (cells < 1) throw KernelError("AngularSampler: need at least one cell");
    h_ = kPi / cells;
    const QuadratureRule g = gauss_legendre(order, 0.0, 1.0);
    cdf_.assign(cells + 1, 0.0);
    for (int i = 0; i < cells; ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < g.x.size(); ++j) {
            const double th = (i + g.x[j]) * h_;
            const double v = b(std::cos(th));
            if (!std::isfinite(v) || v < 0.0)
                throw KernelError("AngularSampler: kernel is not finite and non-negative at theta = " +
                                  std::to_string(th));
            m += g.w[j] * h_ * 2.0 * kPi * v * std::sin(th);
        }
        cdf_[i + 1] = cdf_[i] + m;
    }
    total_ = cdf_.back();
    if (!(total_ > 0.0)) throw KernelError("AngularSampler: kernel has zero mass");
}

double AngularSampler::sample_theta(double u) const
{
    const double target = u * total_;
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), target);
    std::size_t i = it == cdf_.begin() ? 0 : static_cast<std::size_t>(it - cdf_.begin()) - 1;
    i = std::min(i, cdf_.size() - 2);
    const double m = cdf_[i + 1] - cdf_[i];
    const double f = m > 0.0 ? std::clamp((target - cdf_[i]) / m, 0.0, 1.0) : 0.0;
    return (static_cast<double>(i) + f) * h_;
}

double AngularSampler::cdf_theta(double theta) const
{
    const double x = std::clamp(theta / h_, 0.0, static_cast<double>(cells()));
    const std::size_t i = std::min(static_cast<std::size_t>(x), cdf_.size() - 2);
    const double f = x - static_cast<double>(i);
    return (cdf_[i] + f * (cdf_[i + 1] - cdf_[i])) / total_;
}

Vec3 AngularSampler::sample(const Vec3& sigma, double u_theta, double u_phi) const
{
    const double th = sample_theta(u_theta);
    const double ph = 2.0 * kPi * u_phi;
    Vec3 e1, e2;
    tangent_basis(sigma, e1, e2);
    const Vec3 sp = std::cos(th) * sigma + std::sin(th) * (std::cos(ph) * e1 + std::sin(ph) * e2);
    return (1.0 / norm(sp)) * sp;
}

// ------------------------------------------------------ regularized kernel

namespace {

using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;

// Spline of btilde(theta) theta^{2+2s} in log theta on [1e-4, pi].
struct SubordinateSpline {
    double s = 0.75, lo = 0.0, hi = 0.0, h = 0.0;
    std::shared_ptr<Spline> spline;

    SubordinateSpline(const OmegaWeight& w, int n = 1536) : s(w.s())
    {
        lo = std::log(1e-4);
        hi = std::log(kPi);
        h = (hi - lo) / (n - 1);
        std::vector<double> v(n);
        for (int i = 0; i < n; ++i) {
            const double th = std::exp(lo + h * i);
            const double c = i == n - 1 ? -1.0 : std::cos(th);
            v[i] = subordinate_kernel(c, w) * std::pow(th, 2.0 + 2.0 * s);
        }
        spline = std::make_shared<Spline>(v.begin(), v.end(), lo, h);
    }

    double at_theta(double th) const
    {
        if (!(th > 0.0)) return std::numeric_limits<double>::infinity();
        const double x = std::clamp(std::log(th), lo, hi);
        return (*spline)(x) * std::pow(th, -2.0 - 2.0 * s);
    }

    double operator()(double c) const { return c < 1.0 ? at_theta(std::acos(std::max(c, -1.0))) : at_theta(0.0); }
};

std::shared_ptr<const SubordinateSpline> power_spline(double s)
{
    static std::mutex mu;
    static std::map<double, std::shared_ptr<const SubordinateSpline>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[s];
    if (!slot) slot = std::make_shared<SubordinateSpline>(OmegaWeight::power(s));
    return slot;
}

// C^2 smoothstep 6y^5 - 15y^4 + 10y^3.
double smoothstep(double y)
{
    y = std::clamp(y, 0.0, 1.0);
    return y * y * y * (y * (6.0 * y - 15.0) + 10.0);
}

constexpr int kSymbolLmax = 200;

}  // namespace

std::vector<double> RegularizedKernel::check_grid(int k)
{
    std::vector<double> c{-1.0, 1.0};
    for (int i = 0; i <= 2000; ++i) c.push_back(std::cos(kPi * i / 2000.0));
    for (int i = 0; i <= 400; ++i) c.push_back(1.0 - std::pow(10.0, -12.0 + 12.0 * i / 400.0));
    for (int i = 0; i <= 1000; ++i) c.push_back(1.0 - (1.0 / k) * i / 1000.0);
    for (double& x : c) x = std::clamp(x, -1.0, 1.0);
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    return c;
}

std::shared_ptr<const RegularizedKernel> RegularizedKernel::build(const KernelSpec& spec)
{
    if (spec.k < 1) throw KernelError("kernel: k must be at least 1");
    if (!(spec.lambda > 0.0 && spec.lambda < 1.0)) throw KernelError("kernel: lambda must lie in (0, 1)");
    if (!(spec.c_b > 0.0)) throw KernelError("kernel: c_b must be positive");
    std::shared_ptr<RegularizedKernel> K(new RegularizedKernel());
    K->spec_ = spec;
    const int k = spec.k;

    if (spec.type == "maxwell") {
        const double b0 = spec.maxwell_b > 0.0 ? spec.maxwell_b : 1.0 / kFourPi;
        K->gamma_ = 0.0;
        K->base_ = {"maxwell", [b0](double) { return b0; }, [b0](double) { return b0; }, 0.0, b0, true};
        K->base_.bbar = bbar(K->base_.b);
        K->rho_k_ = b0;
        K->sup_bk_ = b0;
        K->bbar_k_ = K->base_.bbar;
        K->alpha_bound_ = 1.0;
        K->lambda_bound_ = std::numeric_limits<double>::quiet_NaN();
        K->sampler_ = std::make_shared<AngularSampler>(K->base_.b);
        K->mu_k_.assign(kSymbolLmax + 1, kFourPi * b0);
        K->mu_k_[0] = 0.0;
        K->mu_base_ = K->mu_k_;
        return K;
    }

    std::shared_ptr<const SubordinateSpline> bt;
    if (spec.type == "power_law") {
        const PowerLawParams p = power_law(spec.q);
        K->gamma_ = p.gamma;
        K->s_ = p.s;
    } else if (spec.type == "frac_laplacian") {
        if (!(spec.s > 0.0 && spec.s < 1.0)) throw KernelError("kernel: s must lie in (0, 1)");
        K->gamma_ = spec.gamma;
        K->s_ = spec.s;
    } else if (spec.type == "table") {
        if (spec.omega_table_path.empty()) throw KernelError("kernel: table type needs omega_table_path");
        K->omega_ = OmegaWeight::from_csv(spec.omega_table_path);
        K->gamma_ = spec.gamma;
        K->s_ = K->omega_.s();
        bt = std::make_shared<SubordinateSpline>(K->omega_);
    } else {
        throw KernelError("kernel: unknown type '" + spec.type + "'");
    }
    if (!(K->gamma_ > -3.0 && K->gamma_ <= 0.0))
        throw KernelError("kernel: gamma must lie in (-3, 0] for a bounded rate envelope");
    if (spec.type != "table") {
        K->omega_ = OmegaWeight::power(K->s_);
        bt = power_spline(K->s_);
        // b = c_b chi_s = c_b c_s btilde
        K->ratio_ = spec.c_b * subordination_constant(K->s_);
    } else {
        K->ratio_ = spec.c_b;
    }

    const double ratio = K->ratio_;
    K->base_.name = spec.type;
    K->base_.b = [bt, ratio](double c) { return ratio * (*bt)(c); };
    K->base_.b_theta = [bt, ratio](double th) { return ratio * bt->at_theta(th); };
    K->base_.bbar = bbar(K->base_.b);
    K->eps_k_ = 1.0 / (static_cast<double>(k) * k);
    K->trunc_ = std::make_shared<TruncatedSubordinate>(K->omega_, K->eps_k_);
    K->alpha_bound_ = std::pow(static_cast<double>(k), -K->gamma_);

    double sup = 0.0, rho = std::numeric_limits<double>::infinity();
    for (double c : check_grid(k)) {
        const double v = K->bk(c);
        sup = std::max(sup, v);
        if (c >= 1.0 - 1.0 / k) rho = std::min(rho, v);
    }
    K->sup_bk_ = sup;
    K->rho_k_ = rho;
    K->base_.bound.reset();
    K->u_k_ = solve_u_k(K->omega_, ratio, rho);
    K->lambda_bound_ = lambda_lower_bound(K->omega_, K->eps_k_);

    const RegularizedKernel* self = K.get();
    const auto bk = [self](double c) { return self->bk(c); };
    K->sampler_ = std::make_shared<AngularSampler>(bk);
    K->bbar_k_ = bbar(bk);
    K->mu_k_ = zonal_symbol([self](double th) { return self->bk_theta(th); }, 0.5, kSymbolLmax);
    K->mu_base_.assign(kSymbolLmax + 1, 0.0);
    for (int l = 1; l <= kSymbolLmax; ++l) K->mu_base_[l] = ratio * K->omega_.bernstein(sh_eigenvalue(l), 0.0);
    return K;
}

double RegularizedKernel::psi(double c) const
{
    if (spec_.type == "maxwell") return 1.0;
    const double k = spec_.k;
    return smoothstep(2.0 * k * (1.0 - c) - 1.0);
}

double RegularizedKernel::bt_k(double c) const
{
    if (!trunc_) return base_.b(c);
    return (*trunc_)(c);
}

double RegularizedKernel::bk(double c) const
{
    if (spec_.type == "maxwell") return base_.b(c);
    return bk_theta(c < 1.0 ? std::acos(std::max(c, -1.0)) : 0.0);
}

double RegularizedKernel::bk_theta(double theta) const
{
    if (spec_.type == "maxwell") return base_.b_theta(theta);
    const double sh = std::sin(0.5 * theta);
    const double k = spec_.k;
    const double p = smoothstep(2.0 * k * (2.0 * sh * sh) - 1.0);
    if (p >= 1.0) return base_.b_theta(theta);
    // b^k = b (psi + (1 - psi) btilde^k / btilde) with b / btilde = ratio;
    // btilde^k <= btilde holds exactly and is enforced against table error.
    double tk = ratio_ * (*trunc_)(std::cos(theta));
    if (theta > 0.0) tk = std::min(tk, base_.b_theta(theta));
    if (p <= 0.0) return tk;
    return p * base_.b_theta(theta) + (1.0 - p) * tk;
}

double RegularizedKernel::alpha(double r) const
{
    if (gamma_ == 0.0) return 1.0;
    const double k = spec_.k;
    return std::pow(r * r + 1.0 / (k * k), 0.5 * gamma_);
}

double RegularizedKernel::alpha_base(double r) const
{
    if (gamma_ == 0.0) return 1.0;
    return std::pow(r, gamma_);
}

// ------------------------------------------------------------------ A(phi)

double GaussianBump::operator()(const Vec3& x) const
{
    return amplitude * std::exp(-norm2(x - center) / (2.0 * width * width));
}

TestPhi GaussianBump::as_test() const
{
    const GaussianBump self = *this;
    return {[self](const Vec3& x) { return self(x); }, hessian_bound()};
}

APhiResult a_phi(const TestPhi& phi, const Vec3& v, const Vec3& w, const RegularizedKernel& kernel,
                 bool regularized, const APhiOptions& opt)
{
    if (opt.phi_nodes < 2 || opt.phi_nodes % 2 != 0) throw KernelError("a_phi: phi_nodes must be even");
    const CollisionFrame fr = to_frame(v, w);
    const auto b = [&](double th) { return regularized ? kernel.bk_theta(th) : kernel.base().b_theta(th); };
    const double alpha = regularized ? kernel.alpha(fr.r) : kernel.alpha_base(fr.r);
    Vec3 e1, e2;
    tangent_basis(fr.sigma, e1, e2);
    const double f0 = phi.f(v) + phi.f(w);
    // Azimuthal average of phi(v') + phi(w') - phi(v) - phi(w) at polar angle
    // theta; antipodal azimuths cancel the first-order term.
    const auto ring = [&](double th) {
        const double c = std::cos(th), sn = std::sin(th);
        double acc = 0.0;
        for (int q = 0; q < opt.phi_nodes; ++q) {
            const double ph = 2.0 * kPi * (q + 0.5) / opt.phi_nodes;
            const Vec3 sp = c * fr.sigma + sn * (std::cos(ph) * e1 + std::sin(ph) * e2);
            const auto [vp, wp] = post_collision(fr, (1.0 / norm(sp)) * sp);
            acc += phi.f(vp) + phi.f(wp) - f0;
        }
        return acc / opt.phi_nodes;
    };
    const QuadratureRule g = gauss_legendre(opt.theta_order, 0.0, 1.0);
    const double tc = opt.theta_cap;
    double acc = 0.0;
    // [theta_cap, pi] in log theta.
    const double l0 = std::log(tc), l1 = std::log(kPi);
    for (int pi = 0; pi < opt.theta_panels; ++pi)
        for (std::size_t i = 0; i < g.x.size(); ++i) {
            const double th = std::exp(l0 + (l1 - l0) * (pi + g.x[i]) / opt.theta_panels);
            const double jac = (l1 - l0) * th * g.w[i] / opt.theta_panels;
            acc += jac * std::sin(th) * b(th) * ring(th);
        }
    // [0, theta_cap]: ring ~ Q theta^2 with Q read off at the cap; theta =
    // tc y^p smooths theta^{1-2s} for the singular kernel.
    const double Q = ring(tc) / (tc * tc);
    const double p = (!regularized && !kernel.bounded_base()) ? 2.0 / (2.0 - 2.0 * kernel.s()) : 1.0;
    const int cap_panels = 4;
    for (int pi = 0; pi < cap_panels; ++pi)
        for (std::size_t i = 0; i < g.x.size(); ++i) {
            const double y = (pi + g.x[i]) / cap_panels;
            const double th = tc * std::pow(y, p);
            const double jac = tc * p * std::pow(y, p - 1.0) * g.w[i] / cap_panels;
            acc += jac * std::sin(th) * b(th) * Q * th * th;
        }
    APhiResult out;
    out.value = 0.5 * alpha * 2.0 * kPi * acc;
    const double bb = regularized ? kernel.bbar_k() : kernel.base().bbar;
    const double scale = phi.hessian_bound * bb * std::pow(norm(v - w), kernel.gamma() + 2.0);
    out.constant = scale > 0.0 ? std::abs(out.value) / scale : 0.0;
    return out;
}

namespace {

// e^{-x} i_l(x) for l = 0..L by downward recurrence normalized on i_0.
void scaled_sph_bessel_i(int L, double x, std::vector<double>& out)
{
    out.assign(L + 1, 0.0);
    if (x == 0.0) {
        out[0] = 1.0;
        return;
    }
    const int start = L + 40 + static_cast<int>(2.0 * std::sqrt(x));
    double f1 = 0.0, f0 = 1e-280;  // f_{l+1}, f_l
    for (int l = start; l >= 1; --l) {
        const double fm = f1 + (2.0 * l + 1.0) / x * f0;  // f_{l-1}
        f1 = f0;
        f0 = fm;
        if (l - 1 <= L) out[l - 1] = f0;
        if (l <= L) out[l] = f1;
        if (std::abs(f0) > 1e250) {
            f0 *= 1e-250;
            f1 *= 1e-250;
            for (int j = l - 1; j <= L; ++j) out[j] *= 1e-250;
        }
    }
    const double i0 = -std::expm1(-2.0 * x) / (2.0 * x);
    const double scale = i0 / out[0];
    for (double& v : out) v *= scale;
}

}  // namespace

double a_phi_bump(const GaussianBump& phi, const Vec3& v, const Vec3& w, const RegularizedKernel& kernel,
                  bool regularized)
{
    const CollisionFrame fr = to_frame(v, w);
    const Vec3 a = fr.z - phi.center;
    const double an = norm(a);
    const double l2 = phi.width * phi.width;
    const double kappa = fr.r * an / l2;
    if (kappa == 0.0) return 0.0;
    const std::vector<double>& mu = regularized ? kernel.symbols_k() : kernel.symbols_base();
    const int need = static_cast<int>(std::ceil(kappa + 10.0 * std::sqrt(kappa) + 10.0));
    if (need > static_cast<int>(mu.size()) - 1)
        throw KernelError("a_phi_bump: bump too narrow for the zonal symbol table");
    thread_local std::vector<double> il;
    scaled_sph_bessel_i(need, kappa, il);
    const double x = dot(a, fr.sigma) / an;
    double p0 = 1.0, p1 = x, sum = 0.0;
    for (int l = 2; l <= need; ++l) {
        const double pl = ((2.0 * l - 1.0) * x * p1 - (l - 1.0) * p0) / l;
        p0 = p1;
        p1 = pl;
        if (l % 2 == 0) sum += (2.0 * l + 1.0) * il[l] * mu[l] * pl;
    }
    const double pref = phi.amplitude * std::exp(-(an - fr.r) * (an - fr.r) / (2.0 * l2));
    const double alpha = regularized ? kernel.alpha(fr.r) : kernel.alpha_base(fr.r);
    return -alpha * pref * sum;
}

}  // namespace kaclab
