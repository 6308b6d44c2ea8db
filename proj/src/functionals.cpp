#include "kaclab/functionals.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <thread>

#include "kaclab/quadrature.hpp"

namespace kaclab {

namespace {

constexpr double kPi = std::numbers::pi;

}  // namespace

// ------------------------------------------------------------- context

FunctionalContext::FunctionalContext(int base_L, int fine_L)
    : base_(std::make_shared<const SphereTransform>(SphereGrid::for_band_limit(base_L))),
      fine_(std::make_shared<const SphereTransform>(SphereGrid::for_band_limit(fine_L)))
{
    if (fine_L < base_L) throw FunctionalError("FunctionalContext: fine band below base band");
}

const ChiTable& FunctionalContext::chi(double s) const
{
    std::lock_guard<std::mutex> lock(mu_);
    auto& p = chi_[s];
    if (!p) p = std::make_shared<const ChiTable>(s, quad_);
    return *p;
}

const std::vector<double>& FunctionalContext::chi_symbol(double s) const
{
    const ChiTable& table = chi(s);
    std::lock_guard<std::mutex> lock(mu_);
    auto it = symbol_.find(s);
    if (it == symbol_.end()) {
        auto mu = zonal_symbol([&](double th) { return table.at_theta(th); }, s, fine_->band_limit());
        it = symbol_.emplace(s, std::move(mu)).first;
    }
    return it->second;
}

// ------------------------------------------------------------- rotations

Vec3 Rotation3::apply(const Vec3& v) const
{
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z, m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

Vec3 Rotation3::apply_transpose(const Vec3& v) const
{
    return {m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z, m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z};
}

Rotation3 Rotation3::random(unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    double q[4] = {n(rng), n(rng), n(rng), n(rng)};
    const double l = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    for (double& x : q) x /= l;
    const double a = q[0], b = q[1], c = q[2], d = q[3];
    Rotation3 r;
    const double m[3][3] = {{a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
                            {2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b)},
                            {2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.m[i][j] = m[i][j];
    return r;
}

// --------------------------------------------------------- test functions

TestFunction TestFunction::constant(double value)
{
    TestFunction f;
    f.kind = "constant";
    f.scale = value;
    TestComponent c;
    c.is_field = true;
    c.field = HarmonicSpectrum(0);
    f.parts.push_back(c);
    return f;
}

TestFunction TestFunction::exp_field(const HarmonicSpectrum& u)
{
    TestFunction f;
    f.kind = "exp_field";
    TestComponent c;
    c.field = u;
    f.parts.push_back(c);
    return f;
}

TestFunction TestFunction::von_mises_fisher(double kappa, const Vec3& mu)
{
    TestFunction f;
    f.kind = "vmf";
    TestComponent c;
    c.is_field = false;
    c.kappa = kappa;
    c.mu = (1.0 / norm(mu)) * mu;
    f.parts.push_back(c);
    return f;
}

TestFunction TestFunction::symmetrized() const
{
    TestFunction f = *this;
    if (!symmetric) f.kind = "symmetric_" + kind;
    f.symmetric = true;
    return f;
}

TestFunction TestFunction::rotated(const Rotation3& r) const
{
    // (g o R)(sigma) = g(R0 R sigma): compose the stored rotation.
    TestFunction f = *this;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += rotation.m[i][k] * r.m[k][j];
            f.rotation.m[i][j] = acc;
        }
    return f;
}

TestFunction TestFunction::scaled(double c) const
{
    TestFunction f = *this;
    f.scale *= c;
    return f;
}

void TestFunction::raw(const Vec3& sigma, double& value, Vec3& grad) const
{
    value = 0.0;
    grad = {};
    for (const auto& p : parts) {
        if (p.is_field) {
            double u;
            Vec3 gu;
            evaluate_with_gradient(p.field, sigma, u, gu);
            const double e = std::exp(u);
            value += p.weight * e;
            grad += (p.weight * e) * gu;
        } else {
            const double c = dot(p.mu, sigma);
            const double e = std::exp(p.kappa * (c - 1.0));
            value += p.weight * e;
            grad += (p.weight * e * p.kappa) * (p.mu - c * sigma);
        }
    }
}

void TestFunction::value_and_gradient(const Vec3& sigma_in, double& value, Vec3& grad) const
{
    const Vec3 sigma = rotation.apply(sigma_in);
    double v;
    Vec3 g;
    raw(sigma, v, g);
    if (symmetric) {
        double v2;
        Vec3 g2;
        raw(-sigma, v2, g2);
        v += v2;
        g = g - g2;
    }
    value = scale * v;
    grad = rotation.apply_transpose(scale * g);
}

double TestFunction::value(const Vec3& sigma) const
{
    double v;
    Vec3 g;
    value_and_gradient(sigma, v, g);
    return v;
}

SphereFunction TestFunction::sample(const std::shared_ptr<const SphereTransform>& plan) const
{
    SphereFunction f{plan, plan->sample([&](const Vec3& x) { return value(x); }), true};
    return f;
}

namespace {

Vec3 random_unit(std::mt19937_64& rng)
{
    std::normal_distribution<double> n;
    Vec3 v{n(rng), n(rng), n(rng)};
    return (1.0 / norm(v)) * v;
}

HarmonicSpectrum random_field(std::mt19937_64& rng, int degree, double amplitude)
{
    std::normal_distribution<double> n;
    HarmonicSpectrum u(degree);
    for (int l = 1; l <= degree; ++l)
        for (int m = -l; m <= l; ++m) u.at(l, m) = n(rng) / (1.0 + l);
    // Rescale so that max |u| over a coarse probe grid equals the amplitude.
    const SphereTransform probe(SphereGrid::for_band_limit(std::max(degree, 4)));
    double mx = 0.0;
    for (double v : probe.synthesis(u)) mx = std::max(mx, std::abs(v));
    if (mx > 0.0)
        for (double& c : u.c) c *= amplitude / mx;
    return u;
}

TestFunction random_member(std::mt19937_64& rng, int kind, const FamilyOptions& opt)
{
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::uniform_int_distribution<int> deg(1, std::max(1, opt.max_field_degree));
    switch (kind) {
    case 0: {
        const double amp = 0.2 + (opt.max_field_amplitude - 0.2) * U(rng);
        return TestFunction::exp_field(random_field(rng, deg(rng), amp));
    }
    case 1: {
        const double kappa = 0.5 + (opt.max_kappa - 0.5) * U(rng);
        return TestFunction::von_mises_fisher(kappa, random_unit(rng));
    }
    default: {
        TestFunction f;
        f.kind = "mixture";
        const int parts = 2 + static_cast<int>(U(rng) * 2.0);
        for (int i = 0; i < parts; ++i) {
            TestComponent c;
            c.weight = 0.2 + U(rng);
            if (U(rng) < 0.5) {
                c.is_field = false;
                c.kappa = 0.5 + (opt.max_kappa - 0.5) * U(rng);
                c.mu = random_unit(rng);
            } else {
                c.field = random_field(rng, deg(rng), 0.2 + (opt.max_field_amplitude - 0.2) * U(rng));
            }
            f.parts.push_back(c);
        }
        return f;
    }
    }
}

}  // namespace

std::vector<TestFunction> make_family(int n, unsigned base_seed, const FamilyOptions& opt)
{
    std::vector<TestFunction> out;
    for (int i = 0; i < n; ++i) {
        const unsigned seed = base_seed * 1000u + static_cast<unsigned>(i);
        std::mt19937_64 rng(seed);
        TestFunction f;
        if (opt.symmetric_only) {
            f = random_member(rng, i % 3, opt).symmetrized();
        } else {
            const int k = i % 4;
            f = k < 3 ? random_member(rng, k, opt) : random_member(rng, (i / 4) % 3, opt).symmetrized();
        }
        f.seed = seed;
        out.push_back(std::move(f));
    }
    return out;
}

// ------------------------------------------------------------ fine grid

namespace {

struct Prepared {
    const SphereTransform* plan = nullptr;
    std::vector<double> g;
    HarmonicSpectrum spec;
};

Prepared prepare(const FunctionalContext& ctx, const SphereFunction& f)
{
    if (!f.plan) throw FunctionalError("functional input has no transform plan");
    Prepared p;
    p.plan = ctx.fine().get();
    if (f.plan->band_limit() >= ctx.fine()->band_limit() && f.plan->grid().n_theta == p.plan->grid().n_theta &&
        f.plan->grid().n_phi == p.plan->grid().n_phi) {
        p.g = f.values;
    } else {
        p.g = p.plan->synthesis(f.plan->analysis(f.values).resized(p.plan->band_limit()));
    }
    double mx = -std::numeric_limits<double>::infinity(), mn = std::numeric_limits<double>::infinity();
    for (double v : p.g) {
        if (!std::isfinite(v)) throw FunctionalError("non-finite input values");
        mx = std::max(mx, v);
        mn = std::min(mn, v);
    }
    if (!(mx > 0.0) || mn < -1e-10 * mx) throw FunctionalError("input function is not positive");
    apply_floor(p.g);
    p.spec = p.plan->analysis(p.g);
    return p;
}

std::vector<double> map_values(const std::vector<double>& v, double (*fn)(double))
{
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = fn(v[i]);
    return out;
}

double sq(double x) { return x * x; }

// |grad log g|^2 at every node.
std::vector<double> log_grad_sq(const Prepared& p)
{
    const TangentField gr = p.plan->gradient(p.spec);
    std::vector<double> out(p.g.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (sq(gr.x[i]) + sq(gr.y[i]) + sq(gr.z[i])) / sq(p.g[i]);
    return out;
}

double sqrt_sobolev_prepared(const Prepared& p, double nu)
{
    const auto r = map_values(p.g, [](double x) { return std::sqrt(x); });
    return sobolev_seminorm_sq(p.plan->analysis(r), nu);
}

}  // namespace

double fisher_sphere(const FunctionalContext& ctx, const SphereFunction& g)
{
    const Prepared p = prepare(ctx, g);
    const auto l = log_grad_sq(p);
    std::vector<double> f(l.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = l[i] * p.g[i];
    return p.plan->integrate(f);
}

double sqrt_sobolev_sq(const FunctionalContext& ctx, const SphereFunction& g, double nu)
{
    return sqrt_sobolev_prepared(prepare(ctx, g), nu);
}

double cal_K(const FunctionalContext& ctx, const SphereFunction& g)
{
    const Prepared p = prepare(ctx, g);
    const auto lg = map_values(p.g, [](double x) { return std::log(x); });
    const auto u = p.plan->b_derivatives(p.plan->analysis(lg));
    std::vector<double> acc(p.g.size(), 0.0);
    for (int l = 0; l < 3; ++l) {
        const auto w = p.plan->b_derivatives(p.plan->analysis(u[l]));
        for (int k = 0; k < 3; ++k)
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += sq(w[k][i]);
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] *= p.g[i];
    return p.plan->integrate(acc);
}

double j_s(const FunctionalContext& ctx, const SphereFunction& g, double s)
{
    if (!(s > 0.0 && s <= 1.0)) throw FunctionalError("j_s: s must lie in (0, 1]");
    const Prepared p = prepare(ctx, g);
    const auto l = log_grad_sq(p);
    std::vector<double> f(l.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = p.g[i] * std::pow(l[i], 1.0 + s);
    return p.plan->integrate(f);
}

double cal_J(const FunctionalContext& ctx, const SphereFunction& g) { return j_s(ctx, g, 1.0); }

double j_s_lp_form(const FunctionalContext& ctx, const SphereFunction& g, double s)
{
    if (!(s > 0.0 && s <= 1.0)) throw FunctionalError("j_s: s must lie in (0, 1]");
    const Prepared p = prepare(ctx, g);
    const double pw = 2.0 * (1.0 + s);
    std::vector<double> root(p.g.size());
    for (std::size_t i = 0; i < root.size(); ++i) root[i] = std::pow(p.g[i], 1.0 / pw);
    const TangentField gr = p.plan->gradient(p.plan->analysis(root));
    std::vector<double> f(root.size());
    for (std::size_t i = 0; i < f.size(); ++i)
        f[i] = std::pow(sq(gr.x[i]) + sq(gr.y[i]) + sq(gr.z[i]), 0.5 * pw);
    return std::pow(pw, pw) * p.plan->integrate(f);
}

double l1_norm(const FunctionalContext& ctx, const SphereFunction& g)
{
    const Prepared p = prepare(ctx, g);
    return p.plan->integrate(p.g);
}

namespace {

double fisher_derivative_prepared(const Prepared& p, const HarmonicSpectrum& h)
{
    const HarmonicSpectrum hs = h.L == p.plan->band_limit() ? h : h.resized(p.plan->band_limit());
    const TangentField gg = p.plan->gradient(p.spec);
    const TangentField gh = p.plan->gradient(hs);
    const auto hv = p.plan->synthesis(hs);
    std::vector<double> f(p.g.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double inv = 1.0 / p.g[i];
        const double lx = gg.x[i] * inv, ly = gg.y[i] * inv, lz = gg.z[i] * inv;
        f[i] = 2.0 * (lx * gh.x[i] + ly * gh.y[i] + lz * gh.z[i]) - (lx * lx + ly * ly + lz * lz) * hv[i];
    }
    return p.plan->integrate(f);
}

}  // namespace

double fisher_derivative(const FunctionalContext& ctx, const SphereFunction& g, const HarmonicSpectrum& h)
{
    return fisher_derivative_prepared(prepare(ctx, g), h);
}

// ------------------------------------------------------------------ K^s

double KWeight::operator()(double u) const { return std::pow(std::max(u, u_k), -s); }

HeatProfile::HeatProfile(const FunctionalContext& ctx, const SphereFunction& g) : ctx_(&ctx)
{
    spec_ = prepare(ctx, g).spec;
}

double HeatProfile::operator()(double t)
{
    auto it = cache_.find(t);
    if (it != cache_.end()) return it->second;
    const SphereTransform& plan = *ctx_->fine();
    std::vector<double> v = plan.synthesis(heat_flow(spec_, t));
    apply_floor(v);
    for (double& x : v) x = std::sqrt(x);
    const double h = sobolev_seminorm_sq(plan.analysis(v), 2.0);
    cache_.emplace(t, h);
    return h;
}

double k_s(HeatProfile& H, const KWeight& w, const KOptions& opt)
{
    if (!(w.s > 0.0 && w.s < 1.0)) throw FunctionalError("k_s: s must lie in (0, 1)");
    if (opt.nodes < 3 || opt.nodes % 2 == 0) throw FunctionalError("k_s: node count must be odd and >= 3");
    // Segments split at the weight's kink so each piece is smooth in log t.
    std::vector<double> cuts{opt.t_lo};
    if (w.u_k > opt.t_lo && w.u_k < opt.t_hi) cuts.push_back(w.u_k);
    cuts.push_back(opt.t_hi);
    double acc = 0.0;
    for (std::size_t seg = 0; seg + 1 < cuts.size(); ++seg) {
        const QuadratureRule r = log_simpson(cuts[seg], cuts[seg + 1], opt.nodes);
        for (std::size_t i = 0; i < r.x.size(); ++i) acc += r.w[i] * H(r.x[i]) * w(r.x[i]);
    }
    // [0, t_lo]: H is smooth at 0, so a linear model through t_lo and 2 t_lo
    // integrates exactly against the (constant or power) weight.
    const double t0 = opt.t_lo;
    const double h0 = H(t0), h1 = H(2.0 * t0);
    const double slope = (h1 - h0) / t0;
    const double a = h0 - slope * t0;  // H(t) ~ a + slope t
    if (w.u_k >= t0) {
        acc += w(0.0) * (a * t0 + 0.5 * slope * t0 * t0);
    } else {
        const double s = w.s;
        // Below u_k the weight is flat; above it t^{-s}.
        const double uk = w.u_k;
        if (uk > 0.0) acc += std::pow(uk, -s) * (a * uk + 0.5 * slope * uk * uk);
        acc += a * (std::pow(t0, 1.0 - s) - std::pow(uk, 1.0 - s)) / (1.0 - s) +
               slope * (std::pow(t0, 2.0 - s) - std::pow(uk, 2.0 - s)) / (2.0 - s);
    }
    return acc;
}

double k_s(const FunctionalContext& ctx, const SphereFunction& g, const KWeight& w, const KOptions& opt)
{
    HeatProfile H(ctx, g);
    return k_s(H, w, opt);
}

// -------------------------------------------------- fractional dissipation

namespace {

HarmonicSpectrum apply_symbol(const HarmonicSpectrum& spec, const std::vector<double>& mu)
{
    HarmonicSpectrum out = spec;
    for (int l = 0; l <= spec.L; ++l)
        for (int m = -l; m <= l; ++m) out.at(l, m) *= mu[l];
    return out;
}

FracDissipation frac_dissipation_prepared(const FunctionalContext& ctx, const Prepared& p, double s)
{
    if (!(s > 0.0 && s < 1.0)) throw FunctionalError("frac_dissipation: s must lie in (0, 1)");
    const int L = p.plan->band_limit();
    FracDissipation out;

    // Subordination: per-mode integral of (1 - e^{-lambda t}) t^{-1-s}.
    std::vector<double> m(L + 1, 0.0);
    for (int l = 1; l <= L; ++l) m[l] = subordination_symbol(sh_eigenvalue(l), s, ctx.quadrature());
    out.subordination = subordination_constant(s) * fisher_derivative_prepared(p, apply_symbol(p.spec, m));

    // Double integral reduced through the zonal symbol of chi_s:
    // sum_k [2 <g u_k, K u_k> - <K g, u_k^2>] with u_k = b_k . grad log g.
    const std::vector<double>& mu = ctx.chi_symbol(s);
    const auto lg = map_values(p.g, [](double x) { return std::log(x); });
    const auto u = p.plan->b_derivatives(p.plan->analysis(lg));
    const auto kg = p.plan->synthesis(apply_symbol(p.spec, mu));
    std::vector<double> f(p.g.size(), 0.0);
    for (int k = 0; k < 3; ++k) {
        const auto ku = p.plan->synthesis(apply_symbol(p.plan->analysis(u[k]), mu));
        for (std::size_t i = 0; i < f.size(); ++i) f[i] += 2.0 * p.g[i] * u[k][i] * ku[i] - kg[i] * u[k][i] * u[k][i];
    }
    out.double_integral = p.plan->integrate(f);
    const double scale = std::max(std::abs(out.subordination), std::abs(out.double_integral));
    out.relative_gap = scale > 0.0 ? std::abs(out.subordination - out.double_integral) / scale : 0.0;
    return out;
}

}  // namespace

FracDissipation frac_dissipation(const FunctionalContext& ctx, const SphereFunction& g, double s)
{
    return frac_dissipation_prepared(ctx, prepare(ctx, g), s);
}

KernelQuadratureReport frac_dissipation_direct(const FunctionalContext& ctx, const TestFunction& f, double s,
                                               const DirectQuadratureOptions& opt)
{
    const double delta = opt.delta > 0.0 ? opt.delta : default_delta(ctx.base()->grid().n_theta);
    const double th0 = std::acos(1.0 - delta);
    const ChiTable& chi = ctx.chi(s);

    // Cap contribution from fine-grid spectra.
    const Prepared p = prepare(ctx, f.sample(ctx.fine()));
    const auto mu_cap = zonal_symbol([&](double t) { return chi.at_theta(t); }, s, p.plan->band_limit(), 0.0, th0);
    const auto lg = map_values(p.g, [](double x) { return std::log(x); });
    const auto u = p.plan->b_derivatives(p.plan->analysis(lg));
    const auto kg = p.plan->synthesis(apply_symbol(p.spec, mu_cap));
    std::vector<double> cap(p.g.size(), 0.0);
    for (int k = 0; k < 3; ++k) {
        const auto ku = p.plan->synthesis(apply_symbol(p.plan->analysis(u[k]), mu_cap));
        for (std::size_t i = 0; i < cap.size(); ++i) cap[i] += 2.0 * p.g[i] * u[k][i] * ku[i] - kg[i] * u[k][i] * u[k][i];
    }
    const double cap_total = p.plan->integrate(cap);

    // Polar rule on [theta_0, pi], log-graded toward theta_0.
    std::vector<double> th, wt;
    const QuadratureRule gl = gauss_legendre(10, 0.0, 1.0);
    const int panels = 8 + opt.inner_band;
    const double a0 = std::log(th0), a1 = std::log(kPi);
    const int nphi = 2 * opt.inner_band + 4;
    for (int q = 0; q < panels; ++q)
        for (std::size_t i = 0; i < gl.x.size(); ++i) {
            const double t = std::exp(a0 + (a1 - a0) * (q + gl.x[i]) / panels);
            th.push_back(t);
            wt.push_back(gl.w[i] / panels * (a1 - a0) * t * std::sin(t) * chi.at_theta(t) * 2.0 * kPi / nphi);
        }

    const SphereGrid outer = SphereGrid::for_band_limit(opt.outer_L);
    double main = 0.0;
    for (int j = 0; j < outer.n_theta; ++j) {
        double ring = 0.0;
        for (int k = 0; k < outer.n_phi; ++k) {
            const Vec3 sigma = outer.point(j, k);
            double g0;
            Vec3 d0;
            f.value_and_gradient(sigma, g0, d0);
            const Vec3 l0 = (1.0 / g0) * d0;
            const Vec3 a = std::abs(sigma.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
            Vec3 e1 = a - dot(a, sigma) * sigma;
            e1 = (1.0 / norm(e1)) * e1;
            const Vec3 e2 = cross(sigma, e1);
            double acc = 0.0;
            for (std::size_t i = 0; i < th.size(); ++i) {
                const double c = std::cos(th[i]), sn = std::sin(th[i]);
                double r = 0.0;
                for (int q = 0; q < nphi; ++q) {
                    const double ph = 2.0 * kPi * q / nphi;
                    const Vec3 sp = c * sigma + sn * (std::cos(ph) * e1 + std::sin(ph) * e2);
                    double g1;
                    Vec3 d1;
                    f.value_and_gradient(sp, g1, d1);
                    r += tangent_diff_sq_unchecked((1.0 / g1) * d1, l0, sp, sigma);
                }
                acc += wt[i] * r;
            }
            ring += g0 * acc;
        }
        main += outer.area_weight(j) * ring;
    }
    KernelQuadratureReport rep;
    rep.value = main + cap_total;
    rep.cap_correction = cap_total;
    rep.excluded_measure = 2.0 * kPi * delta;
    rep.delta = delta;
    return rep;
}

// ---------------------------------------------------------------- reports

FunctionalReport make_ratio_report(const std::string& name, double lhs, double rhs, double threshold)
{
    if (std::isnan(lhs) || std::isnan(rhs)) throw FunctionalError("NaN operand in report " + name);
    FunctionalReport r;
    r.name = name;
    r.lhs = lhs;
    r.rhs = rhs;
    r.value = lhs;
    const double scale = std::max(std::abs(lhs), std::abs(rhs));
    if (scale < 1e-14) {
        r.degenerate = true;
        r.ratio = 0.0;
        r.margin = 0.0;
        r.pass = true;
        return r;
    }
    if (rhs == 0.0) throw FunctionalError("zero right-hand side with non-zero left-hand side in " + name);
    r.ratio = lhs / rhs;
    r.margin = r.ratio - threshold;
    r.pass = r.margin >= 0.0;
    return r;
}

// --------------------------------------------------------------- Lambda_b

LambdaEstimate lambda_b_estimate(const AngularFunction& b, const std::vector<TestFunction>& family,
                                 const LambdaOptions& opt)
{
    LambdaEstimate out;
    out.estimate = std::numeric_limits<double>::infinity();

    const SphereGrid outer = SphereGrid::for_band_limit(opt.outer_L);
    // Inner polar rule around sigma, graded in log theta.
    std::vector<double> th, wt, bv;
    const QuadratureRule g = gauss_legendre(opt.theta_order, 0.0, 1.0);
    const double l0 = std::log(opt.theta_min), l1 = std::log(kPi);
    for (int p = 0; p < opt.theta_panels; ++p)
        for (std::size_t i = 0; i < g.x.size(); ++i) {
            const double y = (p + g.x[i]) / opt.theta_panels;
            const double t = std::exp(l0 + (l1 - l0) * y);
            th.push_back(t);
            wt.push_back(g.w[i] / opt.theta_panels * (l1 - l0) * t * std::sin(t) * 2.0 * kPi / opt.phi_nodes);
            bv.push_back(b(std::cos(t)));
        }

    for (const TestFunction& f : family) {
        // Symmetry check at a few probe points.
        std::mt19937_64 rng(f.seed + 17u);
        std::normal_distribution<double> n;
        bool sym = f.symmetric;
        for (int i = 0; i < 8 && sym; ++i) {
            Vec3 v{n(rng), n(rng), n(rng)};
            v = (1.0 / norm(v)) * v;
            const double a = f.value(v), c = f.value(-v);
            if (std::abs(a - c) > 1e-10 * std::max(std::abs(a), std::abs(c))) sym = false;
        }
        if (!sym) throw FunctionalError("lambda_b_estimate: test function is not antipodally symmetric");

        double lhs = 0.0, rhs = 0.0;
        for (int j = 0; j < outer.n_theta; ++j) {
            double ring_l = 0.0, ring_r = 0.0;
            for (int k = 0; k < outer.n_phi; ++k) {
                const Vec3 sigma = outer.point(j, k);
                double g0;
                Vec3 d0;
                f.value_and_gradient(sigma, g0, d0);
                const Vec3 l0v = (1.0 / g0) * d0;
                const Vec3 a = std::abs(sigma.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
                Vec3 e1 = a - dot(a, sigma) * sigma;
                e1 = (1.0 / norm(e1)) * e1;
                const Vec3 e2 = cross(sigma, e1);
                double il = 0.0, ir = 0.0;
                for (std::size_t i = 0; i < th.size(); ++i) {
                    const double c = std::cos(th[i]), sn = std::sin(th[i]);
                    double rl = 0.0, rr = 0.0;
                    for (int q = 0; q < opt.phi_nodes; ++q) {
                        const double ph = 2.0 * kPi * (q + 0.5) / opt.phi_nodes;
                        const Vec3 sp = c * sigma + sn * (std::cos(ph) * e1 + std::sin(ph) * e2);
                        double g1;
                        Vec3 d1;
                        f.value_and_gradient(sp, g1, d1);
                        rl += tangent_diff_sq_unchecked((1.0 / g1) * d1, l0v, sp, sigma);
                        rr += sq(g1 - g0) / (g1 + g0);
                    }
                    il += wt[i] * bv[i] * rl;
                    ir += wt[i] * bv[i] * rr;
                }
                ring_l += 0.5 * g0 * il;
                ring_r += ir;
            }
            lhs += outer.area_weight(j) * ring_l;
            rhs += outer.area_weight(j) * ring_r;
        }
        FunctionalReport r = make_ratio_report("lambda_b", lhs, rhs, 0.0);
        r.member = f.kind;
        r.seed = f.seed;
        if (r.degenerate) {
            ++out.skipped;
        } else {
            out.estimate = std::min(out.estimate, r.ratio);
        }
        out.members.push_back(r);
    }
    if (!std::isfinite(out.estimate)) out.estimate = 0.0;
    return out;
}

// --------------------------------------------------------- inequality suite

namespace {

std::vector<FunctionalReport> evaluate_member(const FunctionalContext& ctx, const TestFunction& f,
                                              const SuiteOptions& opt)
{
    const SphereFunction sf = f.sample(ctx.fine());
    const Prepared p = prepare(ctx, sf);
    std::vector<FunctionalReport> out;
    auto push = [&](FunctionalReport r, double s) {
        r.member = f.kind;
        r.seed = f.seed;
        r.s = s;
        out.push_back(std::move(r));
    };

    const double fisher = fisher_sphere(ctx, sf);
    const double h1 = sqrt_sobolev_prepared(p, 1.0);
    const double h2 = sqrt_sobolev_prepared(p, 2.0);
    const double K = cal_K(ctx, sf);
    const double J = cal_J(ctx, sf);
    {
        auto r = make_ratio_report("fisher_identity", fisher, 4.0 * h1, 0.0);
        if (!r.degenerate) r.pass = std::abs(r.ratio - 1.0) <= 1e-3;
        push(r, 1.0);
    }
    {
        auto r = make_ratio_report("K_over_H2", K, h2, opt.c0 - opt.c0_slack);
        r.meta["constant"] = "4/3";
        push(r, 1.0);
    }
    {
        auto r = make_ratio_report("H2_over_J", h2, J, opt.c1 - opt.c1_slack);
        r.meta["constant"] = "1/432";
        push(r, 1.0);
    }

    HeatProfile H(ctx, sf);
    for (double s : opt.s_values) {
        const FracDissipation d = frac_dissipation_prepared(ctx, p, s);
        const double h1s = sqrt_sobolev_prepared(p, 1.0 + s);
        const double Ks = k_s(H, KWeight{s, 0.0}, opt.k);
        const double cs = subordination_constant(s);
        {
            auto r = make_ratio_report("dissipation_over_H1s", d.subordination, h1s, 0.0);
            r.pass = r.degenerate || r.ratio > 0.0;
            push(r, s);
        }
        {
            const double chain = 2.0 * cs * opt.c0 / s * Ks;
            auto r = make_ratio_report("dissipation_over_Ks_chain", d.subordination, chain, 1.0 - opt.chain_slack);
            r.meta["K_s"] = std::to_string(Ks);
            push(r, s);
        }
        {
            auto r = make_ratio_report("dissipation_routes", d.subordination, d.double_integral, 0.0);
            if (!r.degenerate) r.pass = d.relative_gap <= opt.route_tolerance;
            r.meta["relative_gap"] = std::to_string(d.relative_gap);
            push(r, s);
        }
        {
            auto r = make_ratio_report("Ks_over_H1s", Ks, h1s, 0.0);
            r.pass = r.degenerate || r.ratio > 0.0;
            push(r, s);
        }
        if (std::abs(s - opt.js_ratio_s) < 1e-12) {
            const double js = j_s(ctx, sf, s);
            const double l1 = p.plan->integrate(p.g);
            auto r = make_ratio_report("H1s_plus_L1_over_Js", h1s + l1, js, 0.0);
            r.pass = r.degenerate || r.ratio > 0.0;
            push(r, s);
        }
    }
    return out;
}

}  // namespace

SuiteSummary inequality_suite(const FunctionalContext& ctx, const std::vector<TestFunction>& family,
                              const SuiteOptions& opt, const ReportSink& sink)
{
    if (family.empty()) throw FunctionalError("inequality_suite: empty family");
    // Warm the chi tables before threads share them.
    for (double s : opt.s_values) ctx.chi_symbol(s);

    std::vector<std::vector<FunctionalReport>> results(family.size());
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= family.size()) return;
            try {
                results[i] = evaluate_member(ctx, family[i], opt);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
            }
        }
    };
    const int nt = std::max(1, opt.threads);
    std::vector<std::thread> pool;
    for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);

    SuiteSummary summary;
    for (const auto& rs : results)
        for (const auto& r : rs) {
            if (sink) sink(r);
            if (!r.pass) summary.all_pass = false;
            if (r.degenerate) continue;
            const auto key = std::make_pair(r.name, r.s);
            auto it = summary.min_ratio.find(key);
            if (it == summary.min_ratio.end()) {
                summary.min_ratio.emplace(key, r.ratio);
            } else {
                it->second = std::min(it->second, r.ratio);
            }
        }
    return summary;
}

}  // namespace kaclab
