#include "kaclab/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "kaclab/quadrature.hpp"

namespace kaclab {

namespace {

HarmonicSpectrum random_spectrum(int L, std::mt19937_64& rng)
{
    std::normal_distribution<double> n;
    HarmonicSpectrum s(L);
    for (int l = 0; l <= L; ++l)
        for (int m = -l; m <= l; ++m) s.at(l, m) = n(rng) / (1.0 + l);
    return s;
}

}  // namespace

SphereSelftest sphere_selftest(int L, unsigned seed)
{
    SphereSelftest out;
    out.L = L;
    std::mt19937_64 rng(seed);

    const SphereTransform T(SphereGrid::for_band_limit(L));
    const HarmonicSpectrum s = random_spectrum(L, rng);
    const auto f = T.synthesis(s);
    const auto f2 = T.synthesis(T.analysis(f));
    for (std::size_t i = 0; i < f.size(); ++i) out.round_trip = std::max(out.round_trip, std::abs(f2[i] - f[i]));
    out.parseval = std::abs(T.inner(f, f) - s.norm2()) / s.norm2();

    const QuadratureRule q = gauss_legendre(400);
    for (double t : {0.01, 0.1, 1.0}) {
        double acc = 0.0;
        for (std::size_t i = 0; i < q.x.size(); ++i) acc += q.w[i] * heat_kernel(q.x[i], t);
        out.heat_mass = std::max(out.heat_mass, std::abs(2.0 * std::numbers::pi * acc - 1.0));
    }

    const double frac = 0.75;
    const ChiTable chi(frac);
    const HarmonicSpectrum g = random_spectrum(6, rng);
    std::normal_distribution<double> n;
    std::vector<Vec3> pts;
    for (int i = 0; i < 8; ++i) {
        const Vec3 v{n(rng), n(rng), n(rng)};
        pts.push_back((1.0 / norm(v)) * v);
    }
    const SphereGrid grid = SphereGrid::for_band_limit(L);
    const auto k = frac_laplacian_kernel(g, chi, pts, default_delta(grid.n_theta));
    const HarmonicSpectrum ls = laplacian(g, frac);
    double scale = 0.0, err = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double e = evaluate(ls, pts[i]);
        scale = std::max(scale, std::abs(e));
        err = std::max(err, std::abs(k[i] - e));
    }
    out.kernel_vs_spectral = err / scale;
    return out;
}

}  // namespace kaclab
