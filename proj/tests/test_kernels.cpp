#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "kaclab/functionals.hpp"
#include "kaclab/kernels.hpp"
#include "kaclab/sphere.hpp"

using namespace kaclab;

namespace {

constexpr double kPi = std::numbers::pi;

std::shared_ptr<const RegularizedKernel> power_kernel(int k, double q = 7.0 / 3.0)
{
    static std::map<std::pair<int, double>, std::shared_ptr<const RegularizedKernel>> cache;
    auto& slot = cache[{k, q}];
    if (!slot) {
        KernelSpec spec;
        spec.q = q;
        spec.k = k;
        slot = RegularizedKernel::build(spec);
    }
    return slot;
}

double log_gk(const std::function<double(double)>& f, double a, double b)
{
    const auto g = [&](double u) { return f(std::exp(u)) * std::exp(u); };
    double acc = 0.0;
    for (double u = std::log(a); u < std::log(b); u += 1.0)
        acc += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, u, std::min(u + 1.0, std::log(b)),
                                                                             12, 1e-13);
    return acc;
}

Vec3 random_unit(std::mt19937_64& rng)
{
    std::normal_distribution<double> n;
    Vec3 v{n(rng), n(rng), n(rng)};
    return (1.0 / norm(v)) * v;
}

}  // namespace

TEST_CASE("power-law exponents")
{
    const PowerLawParams p = power_law(7.0 / 3.0);
    CHECK(p.gamma == doctest::Approx(-2.0).epsilon(1e-14));
    CHECK(p.s == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(p.moment_threshold == doctest::Approx(16.0 / 3.0).epsilon(1e-13));
    const PowerLawParams near2 = power_law(2.0 + 1e-9);
    CHECK(near2.gamma == doctest::Approx(-3.0).epsilon(1e-7));
    CHECK(near2.s == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(near2.gamma + 2.0 * near2.s > -2.0);
    CHECK_THROWS_AS(power_law(2.0), KernelError);
    CHECK_THROWS_AS(power_law(2.5), KernelError);
    for (double q : {2.05, 2.1, 2.2, 7.0 / 3.0}) {
        const PowerLawParams r = power_law(q);
        CHECK(r.gamma > -3.0);
        CHECK(r.gamma <= -2.0 + 1e-12);
        CHECK(r.s >= 0.75 - 1e-12);
        CHECK(r.gamma + 2.0 * r.s <= 1e-12);
    }
}

TEST_CASE("bbar of reference kernels")
{
    CHECK(bbar([](double) { return 1.0 / (4.0 * kPi); }) == doctest::Approx(0.5).epsilon(1e-12));
    const ChiTable chi(0.5);
    const double expect = 2.0 * std::sqrt(2.0) * kPi;
    CHECK(bbar([&](double c) { return chi(c); }) == doctest::Approx(expect).epsilon(1e-5));
    CHECK_THROWS_AS(bbar([](double c) { return 1.0 / ((1.0 - c) * (1.0 - c)); }), KernelError);
}

TEST_CASE("omega weights: closed forms against quadrature")
{
    const double s = 0.75;
    const OmegaWeight w = OmegaWeight::power(s);
    for (double lam : {2.0, 6.0, 11.0, 420.0})
        for (double eps : {1e-6, 1e-3, 0.1}) {
            const double direct = log_gk([&](double t) { return std::exp(-lam * t) * std::pow(t, -1.0 - s); }, eps,
                                         eps + 60.0 / lam);
            CHECK(w.laplace_tail(lam, eps) == doctest::Approx(direct).epsilon(1e-9));
            const double bern = log_gk([&](double t) { return -std::expm1(-lam * t) * std::pow(t, -1.0 - s); }, eps,
                                       1e4) +
                                std::pow(1e4, -s) / s;
            CHECK(w.bernstein(lam, eps) == doctest::Approx(bern).epsilon(1e-9));
        }
    // eps = 0 gives lambda^s Gamma(1-s)/s
    CHECK(w.bernstein(6.0, 0.0) == doctest::Approx(std::pow(6.0, s) * std::tgamma(1.0 - s) / s).epsilon(1e-14));

    // A sampled power law read back as a table reproduces the closed forms.
    std::vector<double> t, v;
    for (int i = 0; i <= 160; ++i) {
        t.push_back(std::pow(10.0, -7.0 + 0.0625 * i));
        v.push_back(std::pow(t.back(), -1.0 - s));
    }
    const OmegaWeight tab = OmegaWeight::table(t, v);
    CHECK(tab.s() == doctest::Approx(s).epsilon(1e-12));
    for (double lam : {0.0, 2.0, 11.0})
        CHECK(tab.laplace_tail(lam, 1e-3) == doctest::Approx(w.laplace_tail(lam, 1e-3)).epsilon(1e-9));
    for (double eps : {0.0, 1e-8})
        CHECK(tab.bernstein(11.0, eps) == doctest::Approx(w.bernstein(11.0, eps)).epsilon(1e-9));
    CHECK(subordinate_kernel(0.3, tab) == doctest::Approx(subordinate_kernel(0.3, w)).epsilon(1e-9));

    // CSV round trip with a header line.
    const std::string path = "omega_table_test.csv";
    {
        std::ofstream out(path);
        out << "t,omega\n";
        for (std::size_t i = 0; i < t.size(); ++i) out << t[i] << ',' << v[i] << '\n';
    }
    CHECK(OmegaWeight::from_csv(path).bernstein(6.0, 1e-4) == doctest::Approx(w.bernstein(6.0, 1e-4)).epsilon(1e-5));
    std::remove(path.c_str());

    // Weights that do not produce a singular kernel are configuration errors.
    CHECK_THROWS_AS(OmegaWeight::table({1e-3, 1.0, 10.0}, {1.0, 1.0, 0.01}), KernelError);
    CHECK_THROWS_AS(OmegaWeight::table({1e-3, 1.0}, {1e6, 1.0}), KernelError);  // slope -2: s = 1
    CHECK_THROWS_AS(OmegaWeight::from_csv("no_such_file.csv"), KernelError);
}

TEST_CASE("subordinate kernels match chi_s and the truncated series")
{
    const double s = 0.75;
    const OmegaWeight w = OmegaWeight::power(s);
    for (double c : {-0.9, 0.0, 0.7, 0.99})
        CHECK(subordination_constant(s) * subordinate_kernel(c, w) == doctest::Approx(chi_s(c, s)).epsilon(1e-12));

    for (double eps : {1.0 / 64.0, 1e-3}) {
        const TruncatedSubordinate tr(w, eps);
        for (double c : {-1.0, -0.3, 0.5, 0.95, 1.0}) {
            const double direct = log_gk([&](double t) { return heat_kernel(c, t) * std::pow(t, -1.0 - s); }, eps, 60.0) +
                                  std::pow(60.0, -s) / (s * 4.0 * kPi);
            CHECK(tr(c) == doctest::Approx(direct).epsilon(1e-9));
        }
        // Truncation only removes mass; the series carries ~1e-8 relative error.
        for (double c : {-0.5, 0.3, 0.9}) CHECK(tr(c) <= subordinate_kernel(c, w) * (1.0 + 1e-8));
    }
}

TEST_CASE("regularized kernel construction")
{
    const auto K8 = power_kernel(8);
    const auto K9 = power_kernel(9);
    const auto K16 = power_kernel(16);
    const auto K32 = power_kernel(32);
    CHECK(K8->gamma() == doctest::Approx(-2.0));
    CHECK(K8->eps_k() == doctest::Approx(1.0 / 64.0));
    CHECK(K8->alpha_bound() == doctest::Approx(64.0));

    for (const auto* K : {K8.get(), K16.get()}) {
        const int k = K->k();
        for (double c : RegularizedKernel::check_grid(k)) {
            const double bk = K->bk(c);
            CHECK(std::isfinite(bk));
            CHECK(bk <= K->sup_bk());
            if (c <= 1.0 - 1.0 / k) {
                CHECK(bk == K->base().b(c));  // identical on [-1, 1 - 1/k]
            } else {
                CHECK(bk >= K->rho_k());
            }
            if (c < 1.0) CHECK(bk <= K->base().b(c));
        }
    }
    // Monotone in k, and the floor grows.
    for (double c : RegularizedKernel::check_grid(9)) {
        CHECK(K8->bk(c) <= K9->bk(c) * (1.0 + 1e-12));
        CHECK(K9->bk(c) <= K16->bk(c) * (1.0 + 1e-12));
    }
    CHECK(K8->rho_k() < K16->rho_k());
    CHECK(K16->rho_k() < K32->rho_k());
    CHECK(std::isfinite(K8->sup_bk()));

    // psi plateaus.
    CHECK(K8->psi(1.0 - 1.0 / 8.0) == 1.0);
    CHECK(K8->psi(1.0 - 1.0 / 16.0) == 0.0);
    CHECK(K8->psi(0.9) > 0.0);
    CHECK(K8->psi(0.9) < 1.0);

    // u_k solves ratio * int_u Phi_t(1) t^{-1-s} = rho_k and decreases with k.
    for (const auto* K : {K8.get(), K16.get(), K32.get()}) {
        const TruncatedSubordinate tr(K->omega(), K->u_k());
        CHECK(K->ratio() * tr(1.0) == doctest::Approx(K->rho_k()).epsilon(1e-8));
    }
    CHECK(K8->u_k() > K16->u_k());
    CHECK(K16->u_k() > K32->u_k());

    // Lower bound hypothesis b^k >= c_b chi_s away from 1 (identity there).
    const ChiTable chi(0.75);
    for (double c : {-0.99, -0.5, 0.0, 0.5, 0.8})
        CHECK(K8->bk(c) == doctest::Approx(chi(c)).epsilon(1e-5));

    // alpha^k: bounded by k^{-gamma}, converges to r^gamma, and
    // |alpha^k - alpha| r^3 stays bounded.
    double worst = 0.0;
    for (double r : {1e-6, 1e-3, 0.05, 0.3, 1.0, 5.0}) {
        CHECK(K8->alpha(r) <= K8->alpha_bound());
        worst = std::max(worst, std::abs(K32->alpha(r) - K32->alpha_base(r)) * r * r * r);
    }
    CHECK(worst <= 1.0 / 32.0);
    CHECK(K32->alpha(2.0) == doctest::Approx(0.25).epsilon(1e-3));

    // Mass and bbar of b^k by independent quadrature.
    const double mass = 2.0 * kPi * log_gk([&](double x) { return K8->bk(1.0 - x); }, 1e-12, 2.0);
    CHECK(K8->l1_norm() == doctest::Approx(mass).epsilon(1e-6));
    CHECK(K8->bbar_k() < K8->base().bbar);
}

TEST_CASE("maxwell kernel and configuration errors")
{
    KernelSpec spec;
    spec.type = "maxwell";
    const auto M = RegularizedKernel::build(spec);
    CHECK(M->base().bbar == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(M->l1_norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(M->alpha(0.3) == 1.0);
    CHECK(M->base().bound.has_value());

    KernelSpec bad;
    bad.type = "power_law";
    bad.q = 2.0;
    CHECK_THROWS_AS(RegularizedKernel::build(bad), KernelError);
    bad.q = 7.0 / 3.0;
    bad.type = "nonsense";
    CHECK_THROWS_AS(RegularizedKernel::build(bad), KernelError);
    bad.type = "frac_laplacian";
    bad.gamma = 0.5;
    CHECK_THROWS_AS(RegularizedKernel::build(bad), KernelError);
    bad.type = "table";
    CHECK_THROWS_AS(RegularizedKernel::build(bad), KernelError);
}

TEST_CASE("Lambda lower bound")
{
    const double s = 0.75;
    const OmegaWeight w = OmegaWeight::power(s);
    const double eps = 1e-8;
    const double closed = 3.0 * std::pow(11.0 / 6.0, s);
    const double lb = lambda_lower_bound(w, eps);
    // Literal ratio of the truncated integrals by direct quadrature.
    const auto part = [&](double a) {
        return log_gk([&](double t) { return -std::expm1(-a * t) * std::pow(t, -1.0 - s); }, eps, 1e4) +
               std::pow(1e4, -s) / s;
    };
    CHECK(lb == doctest::Approx(3.0 * part(11.0) / part(6.0)).epsilon(1e-9));
    CHECK(lb > 3.0);
    // The truncation enters as eps^{1-s}; 1e-30 puts it below the tolerance.
    CHECK(lambda_lower_bound(w, 1e-30) == doctest::Approx(closed).epsilon(1e-6));
    CHECK(std::abs(lb - closed) < 2e-2);
    CHECK(h1_margin(lb, -2.0, 0.05) > 0.0);
    for (double e : {1e-4, 1e-2, 1.0}) CHECK(lambda_lower_bound(w, e) > 3.0);
}

TEST_CASE("angular sampler")
{
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> U(0.0, 1.0);

    SUBCASE("uniform kernel gives uniform c")
    {
        const AngularSampler smp([](double) { return 1.0; });
        CHECK(smp.l1_norm() == doctest::Approx(4.0 * kPi).epsilon(1e-12));
        const int n = 100000;
        std::vector<double> c(n);
        const Vec3 sigma{0, 0, 1};
        for (double& x : c) x = dot(smp.sample(sigma, U(rng), U(rng)), sigma);
        std::sort(c.begin(), c.end());
        double D = 0.0;
        for (int i = 0; i < n; ++i) {
            const double F = 0.5 * (c[i] + 1.0);
            D = std::max({D, std::abs(F - static_cast<double>(i) / n), std::abs(F - static_cast<double>(i + 1) / n)});
        }
        CHECK(D < 1.63 / std::sqrt(static_cast<double>(n)));  // 1% level
    }

    SUBCASE("b^k: mean of 1 - c and chi-square on c")
    {
        const auto K = power_kernel(8);
        const AngularSampler& smp = K->sampler();
        const int n = 1000000;
        const Vec3 sigma = random_unit(rng);
        const int bins = 200;
        // Bins of roughly equal tabulated mass; expected counts from the exact density.
        std::vector<double> edges{0.0};
        for (int b = 1; b < bins; ++b) {
            double lo = edges.back(), hi = kPi;
            const double target = static_cast<double>(b) / bins;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (lo + hi);
                (smp.cdf_theta(mid) < target ? lo : hi) = mid;
            }
            edges.push_back(0.5 * (lo + hi));
        }
        edges.push_back(kPi);
        std::vector<double> prob(bins);
        double total = 0.0;
        for (int b = 0; b < bins; ++b) {
            const auto f = [&](double th) { return 2.0 * kPi * K->bk_theta(th) * std::sin(th); };
            prob[b] = log_gk(f, std::max(edges[b], 1e-14), edges[b + 1]);
            total += prob[b];
        }
        CHECK(total == doctest::Approx(K->l1_norm()).epsilon(1e-8));
        edges.back() = kPi + 1e-12;
        std::vector<double> counts(bins, 0.0);
        double m1 = 0.0, m2 = 0.0, max_dev = 0.0;
        for (int i = 0; i < n; ++i) {
            const Vec3 sp = smp.sample(sigma, U(rng), U(rng));
            max_dev = std::max(max_dev, std::abs(norm(sp) - 1.0));
            const double c = std::clamp(dot(sp, sigma), -1.0, 1.0);
            const double th = std::acos(c);
            const auto it = std::upper_bound(edges.begin(), edges.end(), th);
            counts[std::clamp<int>(static_cast<int>(it - edges.begin()) - 1, 0, bins - 1)] += 1.0;
            const double x = 2.0 * std::sin(0.5 * th) * std::sin(0.5 * th);
            m1 += x;
            m2 += x * x;
        }
        CHECK(max_dev < 1e-14);
        double chi2 = 0.0;
        for (int b = 0; b < bins; ++b) {
            const double e = n * prob[b] / total;
            chi2 += (counts[b] - e) * (counts[b] - e) / e;
        }
        const boost::math::chi_squared dist(bins - 1);
        const double pval = 1.0 - boost::math::cdf(dist, chi2);
        CHECK(pval > 0.01);
        m1 /= n;
        const double se = std::sqrt((m2 / n - m1 * m1) / n);
        const double expect = 2.0 * K->bbar_k() / K->l1_norm();
        CHECK(std::abs(m1 - expect) < 3.0 * se);
    }

    SUBCASE("non-finite kernel fails tabulation")
    {
        CHECK_THROWS_AS(AngularSampler([](double c) { return c < 0.0 ? std::nan("") : 1.0; }), KernelError);
        CHECK_THROWS_AS(AngularSampler([](double c) { return c - 0.5; }), KernelError);
    }
}

TEST_CASE("A(phi) operator")
{
    const auto K = power_kernel(8);
    std::mt19937_64 rng(77);
    std::normal_distribution<double> n;

    SUBCASE("collision invariants give zero")
    {
        const TestPhi lin{[](const Vec3& x) { return 0.3 * x.x - 1.2 * x.y + 0.7 * x.z + 2.0; }, 0.0};
        const TestPhi en{[](const Vec3& x) { return norm2(x); }, 2.0};
        for (int i = 0; i < 5; ++i) {
            const Vec3 v{n(rng), n(rng), n(rng)}, w{n(rng), n(rng), n(rng)};
            for (bool reg : {true, false}) {
                CHECK(std::abs(a_phi(lin, v, w, *K, reg).value) < 1e-9);
                CHECK(std::abs(a_phi(en, v, w, *K, reg).value) < 1e-9);
            }
        }
        CHECK_THROWS_AS(a_phi(en, Vec3{1, 0, 0}, Vec3{1, 0, 0}, *K, true), GeometryError);
    }

    SUBCASE("Gaussian bump: refinement, fast path and the bound")
    {
        const GaussianBump bump{{0.5, -0.2, 0.1}, 1.0, 1.0};
        const TestPhi phi = bump.as_test();
        APhiOptions coarse, fine;
        fine.theta_panels = 2 * coarse.theta_panels;
        fine.phi_nodes = 2 * coarse.phi_nodes;
        double worst_c = 0.0;
        for (int i = 0; i < 6; ++i) {
            const Vec3 v{n(rng), n(rng), n(rng)}, w{n(rng), n(rng), n(rng)};
            for (bool reg : {true, false}) {
                const double a = a_phi(phi, v, w, *K, reg, coarse).value;
                const APhiResult b = a_phi(phi, v, w, *K, reg, fine);
                CHECK(a == doctest::Approx(b.value).epsilon(1e-3));
                const double fast = a_phi_bump(bump, v, w, *K, reg);
                CHECK(fast == doctest::Approx(b.value).epsilon(1e-5));
                worst_c = std::max(worst_c, b.constant);
            }
        }
        MESSAGE("measured constant in |A| <= C |D2 phi| bbar |v-w|^(gamma+2): " << worst_c);
        CHECK(worst_c < 1.0);
    }

    SUBCASE("regularized and singular operators approach each other")
    {
        const GaussianBump bump{{0.0, 0.0, 0.0}, 1.0, 1.0};
        const Vec3 v{0.4, 0.1, -0.3}, w{-0.2, 0.5, 0.2};
        double prev = std::numeric_limits<double>::infinity();
        for (int k : {8, 16, 32}) {
            const auto Kk = power_kernel(k);
            const double gap = std::abs(a_phi_bump(bump, v, w, *Kk, true) - a_phi_bump(bump, v, w, *Kk, false));
            CHECK(gap < prev);
            prev = gap;
        }
    }
}

TEST_CASE("Lambda_b estimate of b^k against the lower bound")
{
    const auto K = power_kernel(8);
    FamilyOptions fo;
    fo.symmetric_only = true;
    const std::vector<TestFunction> family = make_family(4, 11, fo);
    const LambdaEstimate est = lambda_b_estimate([&](double c) { return K->bk(c); }, family);
    MESSAGE("Lambda_b estimate " << est.estimate << ", lower bound " << K->lambda_bound());
    CHECK(est.estimate >= K->lambda_bound() * (1.0 - 5e-2));
}
