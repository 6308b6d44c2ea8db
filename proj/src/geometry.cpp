#include "kaclab/geometry.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <numbers>
#include <string>

#include "kaclab/quadrature.hpp"

namespace kaclab {

CollisionFrame to_frame(const Vec3& v, const Vec3& w)
{
    const Vec3 d = v - w;
    const double len = norm(d);
    if (!(len > 0.0)) throw GeometryError("to_frame: coincident velocities");
    CollisionFrame f;
    f.z = 0.5 * (v + w);
    f.r = 0.5 * len;
    f.sigma = (1.0 / len) * d;
    return f;
}

Vec3 renormalized_unit(const Vec3& s)
{
    const double len = norm(s);
    if (!(std::abs(len - 1.0) <= kUnitTolerance)) {
        throw GeometryError("expected a unit vector, |s| = " + std::to_string(len));
    }
    return (1.0 / len) * s;
}

std::pair<Vec3, Vec3> post_collision(const CollisionFrame& frame, const Vec3& sigma_prime)
{
    const Vec3 sp = renormalized_unit(sigma_prime);
    const Vec3 d = frame.r * sp;
    return {frame.z + d, frame.z - d};
}

Vec3 b_field(int k, const Vec3& v)
{
    switch (k) {
    case 1: return {0.0, -v.z, v.y};
    case 2: return {v.z, 0.0, -v.x};
    case 3: return {-v.y, v.x, 0.0};
    default: throw GeometryError("b_field: axis index must be 1, 2 or 3");
    }
}

double tangent_diff_sq(const Vec3& x, const Vec3& y, const Vec3& sigma, const Vec3& sigma_p)
{
    const Vec3 s = renormalized_unit(sigma);
    const Vec3 sp = renormalized_unit(sigma_p);
    if (std::abs(dot(x, s)) > kUnitTolerance * (1.0 + norm(x)) ||
        std::abs(dot(y, sp)) > kUnitTolerance * (1.0 + norm(y))) {
        throw GeometryError("tangent_diff_sq: vector not tangent at its base point");
    }
    double acc = 0.0;
    for (int k = 1; k <= 3; ++k) {
        const double d = dot(b_field(k, s), x) - dot(b_field(k, sp), y);
        acc += d * d;
    }
    return acc;
}

namespace {

// Gauss-Legendre on [a, m] and [m, b] with m the midpoint, n nodes each.
QuadratureRule split_rule(int n, double a, double b)
{
    const double m = 0.5 * (a + b);
    QuadratureRule out = gauss_legendre(n, a, m);
    const QuadratureRule hi = gauss_legendre(n, m, b);
    out.x.insert(out.x.end(), hi.x.begin(), hi.x.end());
    out.w.insert(out.w.end(), hi.w.begin(), hi.w.end());
    return out;
}

}  // namespace

JacobianComparison jacobian_check(const PairIntegrand& h, double a, int nodes)
{
    if (!(a > 0.0) || nodes < 2) throw std::invalid_argument("jacobian_check: bad arguments");
    JacobianComparison out;

    // (v, w) over the product box.
    const QuadratureRule g = gauss_legendre(nodes, -a, a);
    const int n = nodes;
    double acc = 0.0;
    for (int i0 = 0; i0 < n; ++i0)
        for (int i1 = 0; i1 < n; ++i1)
            for (int i2 = 0; i2 < n; ++i2) {
                const Vec3 v{g.x[i0], g.x[i1], g.x[i2]};
                const double wv = g.w[i0] * g.w[i1] * g.w[i2];
                double inner = 0.0;
                for (int j0 = 0; j0 < n; ++j0)
                    for (int j1 = 0; j1 < n; ++j1)
                        for (int j2 = 0; j2 < n; ++j2) {
                            const Vec3 w{g.x[j0], g.x[j1], g.x[j2]};
                            inner += g.w[j0] * g.w[j1] * g.w[j2] * h(v, w);
                        }
                acc += wv * inner;
            }
    out.vw = acc;

    // (z, r, sigma): z ranges over the box (midpoints of a convex set), and for
    // fixed (z, sigma) the admissible r form [0, r*] with
    // r* = min_i (a - |z_i|) / |sigma_i|. r* has kinks at z_i = 0 and
    // sigma_i = 0, so every rule below is split there.
    const int half = std::max(1, nodes / 2);
    const QuadratureRule zr = split_rule(half, -a, a);
    const QuadratureRule ct = split_rule(half, -1.0, 1.0);
    QuadratureRule pr;
    for (int q = 0; q < 4; ++q) {
        const QuadratureRule p = gauss_legendre(half, q * 0.5 * std::numbers::pi, (q + 1) * 0.5 * std::numbers::pi);
        pr.x.insert(pr.x.end(), p.x.begin(), p.x.end());
        pr.w.insert(pr.w.end(), p.w.begin(), p.w.end());
    }
    const QuadratureRule rr = gauss_legendre(nodes, 0.0, 1.0);
    const int nz = static_cast<int>(zr.x.size());
    acc = 0.0;
    for (int i0 = 0; i0 < nz; ++i0)
        for (int i1 = 0; i1 < nz; ++i1)
            for (int i2 = 0; i2 < nz; ++i2) {
                const Vec3 z{zr.x[i0], zr.x[i1], zr.x[i2]};
                const double wz = zr.w[i0] * zr.w[i1] * zr.w[i2];
                double sphere = 0.0;
                for (std::size_t it = 0; it < ct.x.size(); ++it) {
                    const double c = ct.x[it];
                    const double st = std::sqrt(std::max(0.0, 1.0 - c * c));
                    for (std::size_t ip = 0; ip < pr.x.size(); ++ip) {
                        const double ph = pr.x[ip];
                        const Vec3 s{st * std::cos(ph), st * std::sin(ph), c};
                        double rmax = std::numeric_limits<double>::infinity();
                        for (int d = 0; d < 3; ++d) {
                            const double sd = std::abs(s[d]);
                            if (sd > 0.0) rmax = std::min(rmax, (a - std::abs(z[d])) / sd);
                        }
                        double radial = 0.0;
                        for (int ir = 0; ir < nodes; ++ir) {
                            const double r = rmax * rr.x[ir];
                            const Vec3 d = r * s;
                            radial += rr.w[ir] * rmax * 8.0 * r * r * h(z + d, z - d);
                        }
                        sphere += ct.w[it] * pr.w[ip] * radial;
                    }
                }
                acc += wz * sphere;
            }
    out.zrs = acc;
    return out;
}

}  // namespace kaclab
