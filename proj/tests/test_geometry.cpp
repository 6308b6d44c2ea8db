#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "kaclab/geometry.hpp"

using namespace kaclab;

namespace {

Vec3 gaussian_vec(std::mt19937_64& rng)
{
    std::normal_distribution<double> n;
    return {n(rng), n(rng), n(rng)};
}

Vec3 unit_vec(std::mt19937_64& rng)
{
    const Vec3 v = gaussian_vec(rng);
    return (1.0 / norm(v)) * v;
}

Vec3 tangent_at(const Vec3& s, std::mt19937_64& rng)
{
    const Vec3 a = gaussian_vec(rng);
    return a - dot(a, s) * s;
}

// Rotation matrix from a random unit quaternion, applied to a vector.
struct Rotation {
    double m[3][3];
    explicit Rotation(std::mt19937_64& rng)
    {
        std::normal_distribution<double> n;
        double q[4] = {n(rng), n(rng), n(rng), n(rng)};
        const double l = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
        for (double& x : q) x /= l;
        const double a = q[0], b = q[1], c = q[2], d = q[3];
        const double r[3][3] = {{a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
                                {2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b)},
                                {2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d}};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m[i][j] = r[i][j];
    }
    Vec3 operator()(const Vec3& v) const
    {
        return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z, m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
                m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
    }
};

void check_close(const Vec3& a, const Vec3& b, double tol)
{
    CHECK(std::abs(a.x - b.x) <= tol);
    CHECK(std::abs(a.y - b.y) <= tol);
    CHECK(std::abs(a.z - b.z) <= tol);
}

}  // namespace

TEST_CASE("symmetric pair frame")
{
    const CollisionFrame f = to_frame({1, 0, 0}, {-1, 0, 0});
    check_close(f.z, {0, 0, 0}, 0.0);
    CHECK(f.r == 1.0);
    check_close(f.sigma, {1, 0, 0}, 0.0);
}

TEST_CASE("coincident velocities are an error")
{
    CHECK_THROWS_AS(to_frame({0.3, 0.1, -2}, {0.3, 0.1, -2}), GeometryError);
}

TEST_CASE("frame round trip on random pairs")
{
    std::mt19937_64 rng(11);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 v = gaussian_vec(rng), w = gaussian_vec(rng);
        const CollisionFrame f = to_frame(v, w);
        CHECK(std::abs(norm(f.sigma) - 1.0) <= 1e-12);
        const auto [v2, w2] = from_frame(f);
        const double scale = std::max(norm(v), norm(w));
        check_close(v2, v, 1e-12 * scale);
        check_close(w2, w, 1e-12 * scale);
        const auto [v3, w3] = post_collision(f, f.sigma);
        check_close(v3, v, 1e-12 * scale);
        check_close(w3, w, 1e-12 * scale);
    }
}

TEST_CASE("exchanging the pair flips sigma and keeps z and r")
{
    std::mt19937_64 rng(12);
    const Vec3 v = gaussian_vec(rng), w = gaussian_vec(rng);
    const CollisionFrame a = to_frame(v, w), b = to_frame(w, v);
    check_close(a.z, b.z, 1e-15);
    CHECK(a.r == b.r);
    check_close(a.sigma, -b.sigma, 1e-15);
}

TEST_CASE("head-on rotation")
{
    const CollisionFrame f = to_frame({1, 0, 0}, {-1, 0, 0});
    const auto [vp, wp] = post_collision(f, {0, 1, 0});
    check_close(vp, {0, 1, 0}, 0.0);
    check_close(wp, {0, -1, 0}, 0.0);
}

TEST_CASE("non-unit sigma prime is rejected")
{
    const CollisionFrame f = to_frame({1, 0, 0}, {-1, 0, 0});
    CHECK_THROWS_AS(post_collision(f, {0, 1.001, 0}), GeometryError);
    CHECK_NOTHROW(post_collision(f, {0, 1.0 + 1e-11, 0}));
}

TEST_CASE("long collision chain conserves momentum and energy")
{
    std::mt19937_64 rng(13);
    const int n = 64;
    std::vector<Vec3> v(n);
    for (auto& x : v) x = gaussian_vec(rng);
    auto totals = [&](Vec3& p, double& e) {
        p = {};
        e = 0.0;
        for (const auto& x : v) {
            p += x;
            e += norm2(x);
        }
    };
    Vec3 p0, p1;
    double e0, e1;
    totals(p0, e0);
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int c = 0; c < 100000; ++c) {
        const int i = pick(rng);
        int j = pick(rng);
        if (j == i) j = (i + 1) % n;
        const CollisionFrame f = to_frame(v[i], v[j]);
        const auto [a, b] = post_collision(f, unit_vec(rng));
        v[i] = a;
        v[j] = b;
    }
    totals(p1, e1);
    CHECK(std::abs(e1 - e0) / e0 <= 1e-12);
    // Momentum starts near zero, so compare against the energy scale.
    CHECK(norm(p1 - p0) / std::sqrt(e0) <= 1e-12);
}

TEST_CASE("b fields")
{
    check_close(b_field(3, {1, 0, 0}), {0, 1, 0}, 0.0);
    CHECK_THROWS(b_field(0, {1, 0, 0}));
    std::mt19937_64 rng(14);
    for (int i = 0; i < 100; ++i) {
        const Vec3 v = gaussian_vec(rng), x = gaussian_vec(rng);
        Vec3 acc;
        for (int k = 1; k <= 3; ++k) {
            const Vec3 b = b_field(k, v);
            CHECK(std::abs(dot(b, v)) <= 1e-14 * norm2(v));
            acc += dot(b, x) * b;
        }
        const Vec3 vh = (1.0 / norm(v)) * v;
        const Vec3 expect = norm2(v) * (x - dot(x, vh) * vh);
        check_close(acc, expect, 1e-12 * norm2(v) * norm(x));
    }
}

TEST_CASE("tangent difference")
{
    std::mt19937_64 rng(15);
    const Vec3 s = unit_vec(rng);
    const Vec3 x = tangent_at(s, rng);
    CHECK(std::abs(tangent_diff_sq(x, x, s, s)) <= 1e-14);
    CHECK(tangent_diff_sq(x, {}, s, s) == doctest::Approx(norm2(x)).epsilon(1e-14));
    CHECK_THROWS_AS(tangent_diff_sq(s, {}, s, s), GeometryError);

    for (int i = 0; i < 100; ++i) {
        const Vec3 a = unit_vec(rng), b = unit_vec(rng);
        const Vec3 xa = tangent_at(a, rng), yb = tangent_at(b, rng);
        const double d = tangent_diff_sq(xa, yb, a, b);
        CHECK(d >= 0.0);
        CHECK(std::abs(d - tangent_diff_sq_unchecked(xa, yb, a, b)) <= 1e-12 * (norm2(xa) + norm2(yb)));
        // A rotation of everything is the same as rotating the basis.
        const Rotation R(rng);
        const double dr = tangent_diff_sq(R(xa), R(yb), R(a), R(b));
        CHECK(std::abs(d - dr) <= 1e-12 * (norm2(xa) + norm2(yb)));
    }
}

TEST_CASE("jacobian of the center-of-mass change of variables")
{
    SUBCASE("gaussian integrand")
    {
        const auto h = [](const Vec3& v, const Vec3& w) { return std::exp(-0.5 * (norm2(v) + norm2(w))); };
        const JacobianComparison c = jacobian_check(h, 7.0, 24);
        const double exact = std::pow(2.0 * std::acos(-1.0), 3.0);
        CHECK(std::abs(c.vw - exact) / exact <= 1e-6);
        CHECK(std::abs(c.zrs - c.vw) / c.vw <= 1e-3);
    }
    SUBCASE("box indicator")
    {
        const auto h = [](const Vec3&, const Vec3&) { return 1.0; };
        const JacobianComparison c = jacobian_check(h, 1.0, 24);
        CHECK(c.vw == doctest::Approx(64.0).epsilon(1e-12));
        CHECK(std::abs(c.zrs - c.vw) / c.vw <= 1e-3);
    }
    SUBCASE("integrand odd in z")
    {
        const auto h = [](const Vec3& v, const Vec3& w) {
            return (v.x + w.x) * std::exp(-0.5 * (norm2(v) + norm2(w)));
        };
        const JacobianComparison c = jacobian_check(h, 7.0, 16);
        CHECK(std::abs(c.vw) <= 1e-10);
        CHECK(std::abs(c.zrs) <= 1e-10);
    }
}
