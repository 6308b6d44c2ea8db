#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>

namespace kaclab {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(double a) { x *= a; y *= a; z *= a; return *this; }
};

inline Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
inline Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
inline Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
inline Vec3 operator*(double s, Vec3 a) { return a *= s; }
inline Vec3 operator*(Vec3 a, double s) { return a *= s; }
inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b)
{
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm2(const Vec3& a) { return dot(a, a); }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline bool is_finite(const Vec3& a)
{
    return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

class GeometryError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Tolerance on |sigma| for unit-vector inputs.
inline constexpr double kUnitTolerance = 1e-9;

// Center of mass z, half relative speed r and relative direction sigma of a
// velocity pair.
struct CollisionFrame {
    Vec3 z;
    double r = 0.0;
    Vec3 sigma;
};

CollisionFrame to_frame(const Vec3& v, const Vec3& w);

// Post-collision pair (z + r sigma', z - r sigma').
std::pair<Vec3, Vec3> post_collision(const CollisionFrame& frame, const Vec3& sigma_prime);

// Inverse of to_frame: (z + r sigma, z - r sigma).
inline std::pair<Vec3, Vec3> from_frame(const CollisionFrame& f)
{
    return {f.z + f.r * f.sigma, f.z - f.r * f.sigma};
}

// Rescales a near-unit vector back onto the sphere; throws if it is further
// than kUnitTolerance from unit length.
Vec3 renormalized_unit(const Vec3& s);

// b_k(v) = e_k x v, k in {1, 2, 3}.
Vec3 b_field(int k, const Vec3& v);

// Sum_k (b_k(sigma).x - b_k(sigma').y)^2 for x tangent at sigma and y tangent
// at sigma'. Throws on non-tangent or non-unit inputs.
double tangent_diff_sq(const Vec3& x, const Vec3& y, const Vec3& sigma, const Vec3& sigma_p);

// Same quantity without input validation, through the closed form
// |x|^2 + |y|^2 - 2 (sigma x x).(sigma' x y).
inline double tangent_diff_sq_unchecked(const Vec3& x, const Vec3& y, const Vec3& sigma,
                                        const Vec3& sigma_p)
{
    return norm2(x) + norm2(y) - 2.0 * dot(cross(sigma, x), cross(sigma_p, y));
}

// Orthonormal pair (e1, e2) spanning the plane perpendicular to the unit
// vector sigma.
inline void tangent_basis(const Vec3& sigma, Vec3& e1, Vec3& e2)
{
    const Vec3 a = std::abs(sigma.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    e1 = a - dot(a, sigma) * sigma;
    e1 = (1.0 / norm(e1)) * e1;
    e2 = cross(sigma, e1);
}

// Integral of h over the box [-a, a]^6 computed twice: in (v, w) coordinates
// and in (z, r, sigma) coordinates with weight 8 r^2.
struct JacobianComparison {
    double vw = 0.0;
    double zrs = 0.0;
};

using PairIntegrand = std::function<double(const Vec3&, const Vec3&)>;

// `nodes` Gauss-Legendre points per Cartesian direction; the sphere and radial
// rules are scaled from it.
JacobianComparison jacobian_check(const PairIntegrand& h, double half_width, int nodes);

}  // namespace kaclab
