#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <random>

#include "kaclab/quadrature.hpp"
#include "kaclab/sphere.hpp"

using namespace kaclab;

namespace {

constexpr double kPi = std::numbers::pi;

HarmonicSpectrum random_spectrum(int L, unsigned seed, bool with_mean = true)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    HarmonicSpectrum s(L);
    for (int l = 0; l <= L; ++l)
        for (int m = -l; m <= l; ++m) s.at(l, m) = n(rng) / (1.0 + l);
    if (!with_mean) s.at(0, 0) = 0.0;
    return s;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

std::vector<Vec3> probe_points(int n, unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<Vec3> out;
    for (int i = 0; i < n; ++i) {
        Vec3 v{g(rng), g(rng), g(rng)};
        out.push_back((1.0 / norm(v)) * v);
    }
    return out;
}

const ChiTable& chi_table(double s)
{
    static std::map<double, std::unique_ptr<ChiTable>> cache;
    auto& p = cache[s];
    if (!p) p = std::make_unique<ChiTable>(s);
    return *p;
}

}  // namespace

TEST_CASE("grid weights and polynomial exactness")
{
    const SphereGrid g = SphereGrid::for_band_limit(32);
    CHECK(g.n_theta == 66);
    CHECK(g.n_phi == 130);
    CHECK(std::abs(g.total_weight() - 4.0 * kPi) <= 1e-12);
    // c^{2n} integrates to 2/(2n+1) up to degree 2 n_theta - 1.
    for (int n : {1, 10, 32, 65}) {
        double acc = 0.0;
        for (int j = 0; j < g.n_theta; ++j) acc += g.weight[j] * std::pow(g.cos_theta[j], 2 * n);
        CHECK(rel(acc, 2.0 / (2 * n + 1)) <= 1e-12);
    }
    CHECK_THROWS_AS(SphereGrid(10, 20, 42), SphereError);
}

TEST_CASE("analysis and synthesis")
{
    const SphereTransform T(SphereGrid::for_band_limit(16));
    SUBCASE("constant")
    {
        const std::vector<double> f(T.grid().size(), 1.0 / std::sqrt(4.0 * kPi));
        const HarmonicSpectrum s = T.analysis(f);
        CHECK(std::abs(s.at(0, 0) - 1.0) <= 1e-13);
        double rest = 0.0;
        for (std::size_t i = 1; i < s.c.size(); ++i) rest = std::max(rest, std::abs(s.c[i]));
        CHECK(rest <= 1e-13);
    }
    SUBCASE("single harmonic")
    {
        const auto f = T.sample([](const Vec3& x) { return real_harmonic(3, 2, x); });
        const HarmonicSpectrum s = T.analysis(f);
        for (int l = 0; l <= 16; ++l)
            for (int m = -l; m <= l; ++m) {
                const double expect = (l == 3 && m == 2) ? 1.0 : 0.0;
                CHECK(std::abs(s.at(l, m) - expect) <= 1e-10);
            }
        // Closed form Y_{3,2} = (1/4) sqrt(105/pi) z (x^2 - y^2).
        const Vec3 p{0.3, -0.5, std::sqrt(1 - 0.34)};
        const double closed = 0.25 * std::sqrt(105.0 / kPi) * p.z * (p.x * p.x - p.y * p.y);
        CHECK(std::abs(real_harmonic(3, 2, p) - closed) <= 1e-13);
        const double closed_s = 0.5 * std::sqrt(105.0 / kPi) * p.z * p.x * p.y;
        CHECK(std::abs(real_harmonic(3, -2, p) - closed_s) <= 1e-13);
    }
    SUBCASE("random round trip and Parseval")
    {
        const HarmonicSpectrum s = random_spectrum(16, 1);
        const auto f = T.synthesis(s);
        const HarmonicSpectrum s2 = T.analysis(f);
        CHECK(max_abs_diff(T.synthesis(s2), f) <= 1e-10);
        CHECK(std::abs(T.inner(f, f) - s.norm2()) <= 1e-8 * s.norm2());
    }
    SUBCASE("size mismatch")
    {
        CHECK_THROWS_AS(T.analysis(std::vector<double>(10, 1.0)), SphereError);
        CHECK_THROWS_AS(T.synthesis(HarmonicSpectrum(17)), SphereError);
    }
}

TEST_CASE("point evaluation and gradients")
{
    const HarmonicSpectrum s = random_spectrum(12, 2);
    const SphereTransform T(SphereGrid::for_band_limit(12));
    const auto grid_vals = T.synthesis(s);
    const auto grad = T.gradient(s);
    for (int j : {0, 7, 25}) {
        for (int k : {0, 13, 40}) {
            const Vec3 p = T.grid().point(j, k);
            const std::size_t idx = T.grid().index(j, k);
            CHECK(std::abs(evaluate(s, p) - grid_vals[idx]) <= 1e-12);
            const Vec3 g = evaluate_gradient(s, p);
            CHECK(norm(g - Vec3{grad.x[idx], grad.y[idx], grad.z[idx]}) <= 1e-11);
        }
    }
    // Directional finite differences along great circles.
    for (const Vec3& p : probe_points(20, 3)) {
        const Vec3 g = evaluate_gradient(s, p);
        CHECK(std::abs(dot(g, p)) <= 1e-12);
        const Vec3 a = cross(p, Vec3{0.2, 0.7, -0.4});
        const Vec3 u = (1.0 / norm(a)) * a;
        const double h = 1e-5;
        const double fd =
            (evaluate(s, std::cos(h) * p + std::sin(h) * u) - evaluate(s, std::cos(h) * p - std::sin(h) * u)) /
            (2 * h);
        CHECK(std::abs(fd - dot(g, u)) <= 1e-7);
    }
}

TEST_CASE("b-composed second derivatives reproduce the Laplacian")
{
    const int L = 10;
    const SphereTransform T(SphereGrid::for_band_limit(L));
    const HarmonicSpectrum s = random_spectrum(L, 4);
    const auto u = T.b_derivatives(s);
    std::vector<double> lap(T.grid().size(), 0.0);
    for (int k = 0; k < 3; ++k) {
        const auto uu = T.b_derivatives(T.analysis(u[k]));
        for (std::size_t i = 0; i < lap.size(); ++i) lap[i] += uu[k][i];
    }
    const auto expect = T.synthesis(laplacian_power(s, 1.0));
    double scale = 0.0;
    for (double v : expect) scale = std::max(scale, std::abs(v));
    // Sum_k b_k.grad(b_k.grad g) = Delta g = -(-Delta) g.
    std::vector<double> neg(expect.size());
    for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -expect[i];
    CHECK(max_abs_diff(lap, neg) <= 1e-6 * scale);
}

TEST_CASE("spectral Laplacian")
{
    HarmonicSpectrum y1(4);
    y1.at(1, 0) = 1.0;
    const HarmonicSpectrum l1 = laplacian(y1, 1.0);
    CHECK(l1.at(1, 0) == doctest::Approx(2.0).epsilon(1e-15));

    // Finite-difference Laplace-Beltrami in (theta, phi) at an interior point.
    const double th = 0.9, ph = 0.4, h = 1e-3;
    auto f = [&](double t, double p) {
        return evaluate(y1, {std::sin(t) * std::cos(p), std::sin(t) * std::sin(p), std::cos(t)});
    };
    const double ftt = (f(th + h, ph) - 2 * f(th, ph) + f(th - h, ph)) / (h * h);
    const double ft = (f(th + h, ph) - f(th - h, ph)) / (2 * h);
    const double fpp = (f(th, ph + h) - 2 * f(th, ph) + f(th, ph - h)) / (h * h);
    const double lb = ftt + std::cos(th) / std::sin(th) * ft + fpp / (std::sin(th) * std::sin(th));
    CHECK(std::abs(-lb - 2.0 * f(th, ph)) <= 1e-4);

    HarmonicSpectrum c(3);
    c.at(0, 0) = 5.0;
    CHECK(laplacian(c, 0.5).norm2() == 0.0);

    const HarmonicSpectrum s = random_spectrum(20, 5);
    const HarmonicSpectrum twice = laplacian(laplacian(s, 0.5), 0.5);
    const HarmonicSpectrum once = laplacian(s, 1.0);
    for (std::size_t i = 0; i < s.c.size(); ++i) CHECK(std::abs(twice.c[i] - once.c[i]) <= 1e-12 * (1 + std::abs(once.c[i])));

    CHECK_THROWS_AS(laplacian(s, 0.0), SphereError);
    CHECK_THROWS_AS(laplacian(s, 1.5), SphereError);

    // Self-adjointness on grid values.
    const SphereTransform T(SphereGrid::for_band_limit(20));
    const HarmonicSpectrum a = random_spectrum(20, 6), b = random_spectrum(20, 7);
    const double lhs = T.inner(T.synthesis(laplacian(a, 0.75)), T.synthesis(b));
    const double rhs = T.inner(T.synthesis(a), T.synthesis(laplacian(b, 0.75)));
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::abs(lhs));
}

TEST_CASE("heat flow")
{
    auto plan = std::make_shared<const SphereTransform>(SphereGrid::for_band_limit(16));
    HarmonicSpectrum s = random_spectrum(16, 8);
    s.at(0, 0) = 3.0;
    SphereFunction f{plan, plan->synthesis(s), false};

    CHECK(max_abs_diff(heat_flow(f, 0.0).values, f.values) <= 1e-12);
    const double mass = plan->integrate(f.values);
    const auto g = heat_flow(f, 0.3);
    CHECK(std::abs(plan->integrate(g.values) - mass) <= 1e-10 * mass);
    const auto eq = heat_flow(f, 1e3);
    for (double v : eq.values) CHECK(std::abs(v - mass / (4 * kPi)) <= 1e-8);

    HarmonicSpectrum y(2);
    y.at(0, 0) = 1.0;
    y.at(1, 1) = 0.4;
    const HarmonicSpectrum yt = heat_flow(y, 0.5);
    CHECK(std::abs(yt.at(1, 1) - 0.4 * std::exp(-1.0)) <= 1e-15);
    CHECK(yt.at(0, 0) == 1.0);

    const auto a = heat_flow(heat_flow(f, 0.02), 0.05);
    const auto b = heat_flow(f, 0.07);
    CHECK(max_abs_diff(a.values, b.values) <= 1e-10);

    CHECK_THROWS_AS(heat_flow(f, -1.0), SphereError);

    // A positive function stays positive through the floor.
    std::vector<double> bump = plan->sample([](const Vec3& x) { return std::exp(30.0 * (x.z - 1.0)); });
    SphereFunction p{plan, bump, true};
    for (double v : heat_flow(p, 1e-4).values) CHECK(v >= 0.0);
}

TEST_CASE("heat kernel")
{
    const QuadratureRule q = gauss_legendre(400);
    for (double t : {0.01, 0.1, 1.0}) {
        double acc = 0.0;
        for (std::size_t i = 0; i < q.x.size(); ++i) acc += q.w[i] * heat_kernel(q.x[i], t);
        CHECK(std::abs(2 * kPi * acc - 1.0) <= 1e-10);
    }
    CHECK(std::abs(heat_kernel(0.3, 30.0) - 1.0 / (4 * kPi)) <= 1e-14);

    // Spectral oracle: convolution multiplies Y_l by e^{-l(l+1)t}.
    const SphereTransform T(SphereGrid::for_band_limit(48));
    const double t = 0.1;
    const Vec3 p = probe_points(1, 9)[0];
    const auto kern = T.sample([&](const Vec3& x) { return heat_kernel(dot(x, p), t); });
    for (auto [l, m] : {std::pair{1, 0}, std::pair{2, -1}, std::pair{4, 3}}) {
        const auto y = T.sample([&](const Vec3& x) { return real_harmonic(l, m, x); });
        const double conv = T.inner(kern, y);
        CHECK(std::abs(conv - std::exp(-l * (l + 1.0) * t) * real_harmonic(l, m, p)) <= 1e-8);
    }

    CHECK_THROWS_AS(heat_kernel(0.5, 1e-9, 1000), SphereError);
    CHECK_THROWS_AS(heat_kernel(0.5, 0.0), SphereError);
}

TEST_CASE("subordination constant and symbol")
{
    CHECK(std::abs(subordination_constant(0.5) - 2.0 * std::sqrt(kPi)) <= 1e-14);
    CHECK(std::abs(subordination_constant(0.5) - 3.5449077) <= 1e-7);
    for (double s : {0.25, 0.5, 0.75, 0.9}) {
        // The quadrature at lambda = 1 is the constant itself.
        CHECK(rel(subordination_symbol(1.0, s), subordination_constant(s)) <= 1e-6);
        for (int l : {1, 2, 5, 32, 64}) {
            const double lam = l * (l + 1.0);
            CHECK(rel(subordination_symbol(lam, s), subordination_constant(s) * std::pow(lam, s)) <= 1e-6);
        }
    }
    const HarmonicSpectrum s = random_spectrum(16, 10);
    const HarmonicSpectrum a = frac_laplacian_subordination(s, 0.75);
    const HarmonicSpectrum b = laplacian(s, 0.75);
    for (std::size_t i = 0; i < s.c.size(); ++i) CHECK(std::abs(a.c[i] - b.c[i]) <= 1e-6 * (1e-3 + std::abs(b.c[i])));
}

TEST_CASE("chi_s kernel")
{
    CHECK_THROWS_AS(chi_s(1.0, 0.5), SphereError);

    SUBCASE("monotone in theta")
    {
        const double s = 0.75;
        double prev = std::numeric_limits<double>::infinity();
        const SphereGrid g = SphereGrid::for_band_limit(32);
        for (int j = g.n_theta - 1; j >= 0; --j) {
            if (g.cos_theta[j] < 0.0) continue;  // theta in (0, pi/2]
            const double v = chi_s(g.cos_theta[j], s);
            CHECK(v < prev);
            prev = v;
        }
    }
    SUBCASE("table follows the direct integral")
    {
        const ChiTable& T = chi_table(0.75);
        for (double th : {1e-3, 0.01, 0.1, 0.5, 1.0, 2.0, 3.0}) CHECK(rel(T.at_theta(th), chi_s(std::cos(th), 0.75)) <= 1e-5);
    }
    SUBCASE("empirical lower-bound constant")
    {
        for (double s : {0.5, 0.75}) CHECK(chi_table(s).lower_bound_constant() > 0.0);
    }
    SUBCASE("zonal symbol is c_s^2 lambda^s")
    {
        for (double s : {0.5, 0.75}) {
            const ChiTable& T = chi_table(s);
            const double cs = subordination_constant(s);
            const auto mu = zonal_symbol([&](double th) { return T.at_theta(th); }, s, 16);
            for (int l = 1; l <= 16; ++l) CHECK(rel(mu[l] / (cs * cs), std::pow(l * (l + 1.0), s)) <= 1e-4);
        }
    }
    SUBCASE("kernel form on Y_1")
    {
        const double s = 0.75;
        HarmonicSpectrum y(1);
        y.at(1, 0) = 1.0;
        const auto pts = probe_points(6, 11);
        KernelQuadratureReport rep;
        const auto v = frac_laplacian_kernel(y, chi_table(s), pts, default_delta(66), &rep);
        for (std::size_t i = 0; i < pts.size(); ++i)
            CHECK(std::abs(v[i] - std::pow(2.0, s) * evaluate(y, pts[i])) <= 1e-4);
        CHECK(rep.excluded_measure > 0.0);
    }
    SUBCASE("kernel form on band-limited input")
    {
        const double s = 0.5;
        const HarmonicSpectrum g = random_spectrum(6, 12);
        const auto pts = probe_points(6, 13);
        const auto v = frac_laplacian_kernel(g, chi_table(s), pts, default_delta(66));
        const HarmonicSpectrum ls = laplacian(g, s);
        double scale = 0.0;
        for (const auto& p : pts) scale = std::max(scale, std::abs(evaluate(ls, p)));
        for (std::size_t i = 0; i < pts.size(); ++i) CHECK(std::abs(v[i] - evaluate(ls, pts[i])) <= 1e-3 * scale);
    }
}

TEST_CASE("Sobolev seminorms")
{
    HarmonicSpectrum c(4);
    c.at(0, 0) = 2.0;
    CHECK(sobolev_seminorm(c, 0.5) == 0.0);
    HarmonicSpectrum y(1);
    y.at(1, -1) = 1.0;
    CHECK(std::abs(sobolev_seminorm(y, 1.0) - std::sqrt(2.0)) <= 1e-15);
    CHECK_THROWS_AS(sobolev_seminorm(y, -1.0), SphereError);
}

TEST_CASE("Gagliardo double integrals")
{
    const double s = 0.75;
    const ChiTable& chi = chi_table(s);
    const double delta = default_delta(66);
    SUBCASE("order s on a band-limited field")
    {
        const HarmonicSpectrum g = random_spectrum(5, 14);
        const auto r = gagliardo_seminorm_sq(g, chi, delta);
        CHECK(rel(r.value, sobolev_seminorm_sq(g, s)) <= 1e-3);
        CHECK(r.excluded_measure > 0.0);
    }
    SUBCASE("gradient form, constant and Y_1")
    {
        HarmonicSpectrum c(1);
        c.at(0, 0) = 1.0;
        CHECK(std::abs(gagliardo_grad_seminorm_sq(c, chi, delta).value) <= 1e-12);
        HarmonicSpectrum y(1);
        y.at(1, 1) = 1.0;
        CHECK(rel(gagliardo_grad_seminorm_sq(y, chi, delta).value, std::pow(2.0, 1.0 + s)) <= 1e-3);
    }
    SUBCASE("gradient form on a band-limited field")
    {
        const HarmonicSpectrum g = random_spectrum(4, 15);
        const auto r = gagliardo_grad_seminorm_sq(g, chi, delta);
        CHECK(rel(r.value, sobolev_seminorm_sq(g, 1.0 + s)) <= 1e-2);
    }
}
