#include "kaclab/diagnostics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <boost/math/special_functions/digamma.hpp>

#include "kaclab/quadrature.hpp"
#include "kaclab/sphere.hpp"

namespace kaclab {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

namespace {

constexpr double kPi = std::numbers::pi;

std::string fmt(double x)
{
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

// Mean of per-sample terms with a standard error from per-group means.
// Samples flagged invalid (NaN terms) are skipped.
Estimate grouped_mean(const std::vector<double>& terms, const std::vector<int>& group)
{
    Estimate e;
    double sum = 0.0;
    std::size_t n = 0;
    std::map<int, std::pair<double, std::size_t>> by;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (std::isnan(terms[i])) continue;
        sum += terms[i];
        ++n;
        if (!group.empty()) {
            auto& g = by[group[i]];
            g.first += terms[i];
            ++g.second;
        }
    }
    if (n == 0) throw DiagnosticsError("no valid samples");
    e.value = sum / static_cast<double>(n);
    if (by.size() >= 2) {
        double s1 = 0.0, s2 = 0.0;
        for (const auto& [_, g] : by) {
            const double m = g.first / static_cast<double>(g.second);
            s1 += m;
            s2 += m * m;
        }
        const double G = static_cast<double>(by.size());
        const double var = std::max(0.0, (s2 - s1 * s1 / G) / (G - 1.0));
        e.se = std::sqrt(var / G);
        e.meta["se_source"] = "groups";
        e.meta["groups"] = std::to_string(by.size());
    } else {
        double s2 = 0.0;
        for (double t : terms)
            if (!std::isnan(t)) s2 += (t - e.value) * (t - e.value);
        e.se = n > 1 ? std::sqrt(s2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
        e.meta["se_source"] = "samples";
    }
    e.meta["n"] = std::to_string(n);
    return e;
}

void check_finite(const EmpiricalMeasure& mu)
{
    if (mu.samples.empty()) throw DiagnosticsError("empty empirical measure");
    if (!mu.group.empty() && mu.group.size() != mu.samples.size())
        throw DiagnosticsError("group labels do not match the samples");
    for (const Vec3& v : mu.samples)
        if (!is_finite(v)) throw DiagnosticsError("non-finite sample");
}

double bump1(double x)
{
    if (std::abs(x) >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - x * x));
}

// sup |beta'| and sup |beta''| of the one-dimensional bump.
std::pair<double, double> bump_derivative_bounds()
{
    double b1 = 0.0, b2 = 0.0;
    const int n = 200000;
    for (int i = 1; i < n; ++i) {
        const double x = -1.0 + 2.0 * i / n;
        const double q = 1.0 - x * x;
        const double b = bump1(x);
        const double d1 = -2.0 * x / (q * q) * b;
        const double d2 = b * (4.0 * x * x / (q * q * q * q) - (2.0 * q + 8.0 * x * x) / (q * q * q));
        b1 = std::max(b1, std::abs(d1));
        b2 = std::max(b2, std::abs(d2));
    }
    // Grid maxima of smooth functions, padded for the spacing.
    return {b1 * 1.001, b2 * 1.001};
}

std::shared_ptr<const SphereTransform> plan_for(int L)
{
    static std::mutex mu;
    static std::map<int, std::shared_ptr<const SphereTransform>> cache;
    std::lock_guard<std::mutex> lk(mu);
    auto& slot = cache[L];
    if (!slot) slot = std::make_shared<const SphereTransform>(SphereGrid::for_band_limit(L));
    return slot;
}

}  // namespace

EmpiricalMeasure pooled(const std::vector<ReplicaSnapshot>& replicas)
{
    EmpiricalMeasure mu;
    for (std::size_t r = 0; r < replicas.size(); ++r)
        for (const Vec3& v : replicas[r].v) {
            mu.samples.push_back(v);
            mu.group.push_back(static_cast<int>(r));
        }
    return mu;
}

std::vector<Estimate> moments(const EmpiricalMeasure& mu, const std::vector<double>& orders)
{
    check_finite(mu);
    std::vector<Estimate> out;
    std::vector<double> terms(mu.samples.size());
    for (double l : orders) {
        if (!(l >= 0.0)) throw DiagnosticsError("moment order must be non-negative");
        for (std::size_t i = 0; i < terms.size(); ++i) terms[i] = std::pow(1.0 + norm2(mu.samples[i]), 0.5 * l);
        out.push_back(grouped_mean(terms, mu.group));
        out.back().meta["order"] = fmt(l);
    }
    return out;
}

Estimate entropy_knn(const EmpiricalMeasure& mu, int k_nn)
{
    check_finite(mu);
    const std::size_t n = mu.samples.size();
    if (n < 100) throw DiagnosticsError("entropy_knn needs at least 100 samples");
    if (k_nn < 1 || static_cast<std::size_t>(k_nn) >= n) throw DiagnosticsError("entropy_knn: bad neighbour count");
    using Point = bg::model::point<double, 3, bg::cs::cartesian>;
    using Value = std::pair<Point, std::size_t>;
    std::vector<Value> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) pts.emplace_back(Point(mu.samples[i].x, mu.samples[i].y, mu.samples[i].z), i);
    const bgi::rtree<Value, bgi::rstar<16>> tree(pts.begin(), pts.end());

    const double base = boost::math::digamma(static_cast<double>(n)) - boost::math::digamma(static_cast<double>(k_nn)) +
                        std::log(4.0 * kPi / 3.0);
    std::vector<double> terms(n);
    std::size_t excluded = 0;
    std::vector<Value> found;
    for (std::size_t i = 0; i < n; ++i) {
        found.clear();
        tree.query(bgi::nearest(pts[i].first, static_cast<unsigned>(k_nn + 1)), std::back_inserter(found));
        double eps = 0.0;
        for (const Value& f : found) eps = std::max(eps, bg::distance(f.first, pts[i].first));
        if (!(eps > 0.0)) {
            terms[i] = std::nan("");
            ++excluded;
            continue;
        }
        terms[i] = base + 3.0 * std::log(eps);
    }
    Estimate e = grouped_mean(terms, mu.group);
    e.meta["estimator"] = "kozachenko-leonenko";
    e.meta["k"] = std::to_string(k_nn);
    e.meta["excluded"] = std::to_string(excluded);
    return e;
}

Estimate fisher_knn(const EmpiricalMeasure& mu, const FisherOptions& opt)
{
    check_finite(mu);
    const std::size_t n = mu.samples.size();
    if (n < 1000) throw DiagnosticsError("fisher_knn needs at least 1000 samples");
    // Quarters by a hash of the sample index. Points of one half are scored
    // twice, against each quarter of the other half; the product of the two
    // independent scores has the squared smoothed score as its mean.
    std::array<std::vector<std::size_t>, 2> half;
    std::vector<int> quarter(n);
    for (std::size_t i = 0; i < n; ++i) {
        // splitmix64 finalizer
        std::uint64_t x = i + 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        x ^= x >> 31;
        half[x & 1u].push_back(i);
        quarter[i] = static_cast<int>((x >> 1) & 1u);
    }

    std::vector<double> terms(n, std::nan(""));
    std::size_t isolated = 0;
    std::array<double, 2> bw{};
    for (int fit = 0; fit < 2; ++fit) {
        const auto& F = half[static_cast<std::size_t>(fit)];
        const auto& Q = half[static_cast<std::size_t>(1 - fit)];
        // Product kernel with a Silverman bandwidth per coordinate: the
        // samples are standardized and scored with a unit-scale kernel.
        Vec3 m;
        for (std::size_t i : F) m += mu.samples[i];
        m = (1.0 / static_cast<double>(F.size())) * m;
        Vec3 var;
        for (std::size_t i : F) {
            const Vec3 d = mu.samples[i] - m;
            var += Vec3{d.x * d.x, d.y * d.y, d.z * d.z};
        }
        var = (1.0 / static_cast<double>(F.size() - 1)) * var;
        const Vec3 scale{std::sqrt(var.x), std::sqrt(var.y), std::sqrt(var.z)};
        if (!(scale.x > 0.0 && scale.y > 0.0 && scale.z > 0.0) || !is_finite(scale))
            throw DiagnosticsError("fisher_knn: degenerate bandwidth");
        const auto standard = [&](const Vec3& v) { return Vec3{v.x / scale.x, v.y / scale.y, v.z / scale.z}; };
        const double h =
            opt.bandwidth_scale * std::pow(4.0 / (5.0 * 0.5 * static_cast<double>(F.size())), 1.0 / 7.0);
        bw[static_cast<std::size_t>(fit)] = h;
        const double cell = opt.cutoff * h;
        const auto key = [&](const Vec3& v) {
            return std::array<long long, 3>{static_cast<long long>(std::floor(v.x / cell)),
                                            static_cast<long long>(std::floor(v.y / cell)),
                                            static_cast<long long>(std::floor(v.z / cell))};
        };
        const auto hash = [](const std::array<long long, 3>& k) {
            return static_cast<std::size_t>(k[0] * 73856093LL ^ k[1] * 19349663LL ^ k[2] * 83492791LL);
        };
        using Cell = std::array<std::vector<Vec3>, 2>;
        std::unordered_map<std::array<long long, 3>, Cell, decltype(hash)> grid(F.size(), hash);
        for (std::size_t i : F) {
            const Vec3 u = standard(mu.samples[i]);
            grid[key(u)][static_cast<std::size_t>(quarter[i])].push_back(u);
        }
        const double r2max = cell * cell, inv2h2 = 0.5 / (h * h), ih2 = 1.0 / (h * h);
        const Vec3 inv_var{1.0 / var.x, 1.0 / var.y, 1.0 / var.z};
        for (std::size_t i : Q) {
            const Vec3 x = standard(mu.samples[i]);
            const auto k0 = key(x);
            std::array<double, 2> wsum{};
            std::array<Vec3, 2> s{};
            for (long long a = -1; a <= 1; ++a)
                for (long long b = -1; b <= 1; ++b)
                    for (long long c = -1; c <= 1; ++c) {
                        const auto it = grid.find({k0[0] + a, k0[1] + b, k0[2] + c});
                        if (it == grid.end()) continue;
                        for (std::size_t q = 0; q < 2; ++q)
                            for (const Vec3& y : it->second[q]) {
                                const Vec3 d = y - x;
                                const double d2 = norm2(d);
                                if (d2 >= r2max) continue;
                                const double wgt = std::exp(-d2 * inv2h2);
                                wsum[q] += wgt;
                                s[q] += wgt * d;
                            }
                    }
            if (!(wsum[0] > 0.0 && wsum[1] > 0.0)) {
                ++isolated;
                continue;
            }
            // Scores in standardized coordinates; 1 / scale maps them back.
            const Vec3 ua = (ih2 / wsum[0]) * s[0], ub = (ih2 / wsum[1]) * s[1];
            terms[i] = ua.x * ub.x * inv_var.x + ua.y * ub.y * inv_var.y + ua.z * ub.z * inv_var.z;
        }
    }
    Estimate e = grouped_mean(terms, mu.group);
    e.value = std::max(0.0, e.value);
    e.meta["estimator"] = "kernel-score cross-fit, independent-score product";
    e.meta["bandwidth_standardized"] = fmt(0.5 * (bw[0] + bw[1]));
    e.meta["bandwidth_rule"] = "per-coordinate silverman(n/2) x " + fmt(opt.bandwidth_scale);
    e.meta["cutoff"] = fmt(opt.cutoff);
    e.meta["isolated"] = std::to_string(isolated);
    return e;
}

const std::vector<WeakFamily::Member>& WeakFamily::members()
{
    static const std::vector<Member> family = [] {
        const auto [b1, b2] = bump_derivative_bounds();
        std::vector<Member> out;
        for (double w : {4.0, 2.0}) {
            std::vector<Vec3> centers;
            for (double x = -4.0; x <= 4.0; x += w)
                for (double y = -4.0; y <= 4.0; y += w)
                    for (double z = -4.0; z <= 4.0; z += w) centers.push_back({x, y, z});
            std::stable_sort(centers.begin(), centers.end(),
                             [](const Vec3& a, const Vec3& b) { return norm2(a) < norm2(b); });
            const double scale =
                1.0 / (1.0 + std::sqrt(3.0) * b1 / w + std::sqrt(3.0 * b2 * b2 + 6.0 * b1 * b1 * b1 * b1) / (w * w));
            for (const Vec3& c : centers) {
                if (static_cast<int>(out.size()) == size) break;
                out.push_back({c, w, scale});
            }
        }
        return out;
    }();
    return family;
}

double WeakFamily::eval(const Member& m, const Vec3& v)
{
    const Vec3 d = (1.0 / m.width) * (v - m.center);
    return m.scale * bump1(d.x) * bump1(d.y) * bump1(d.z);
}

std::vector<double> weak_integrals(const EmpiricalMeasure& mu)
{
    check_finite(mu);
    const auto& fam = WeakFamily::members();
    std::vector<double> out(fam.size(), 0.0);
    for (std::size_t n = 0; n < fam.size(); ++n) {
        double acc = 0.0;
        for (const Vec3& v : mu.samples) acc += WeakFamily::eval(fam[n], v);
        out[n] = acc / static_cast<double>(mu.samples.size());
    }
    return out;
}

std::vector<double> weak_integrals(const std::function<double(const Vec3&)>& density, int nodes_per_dim)
{
    const auto& fam = WeakFamily::members();
    const QuadratureRule g = gauss_legendre(nodes_per_dim, -1.0, 1.0);
    std::vector<double> out(fam.size(), 0.0);
    for (std::size_t n = 0; n < fam.size(); ++n) {
        const auto& m = fam[n];
        double acc = 0.0;
        for (std::size_t a = 0; a < g.x.size(); ++a)
            for (std::size_t b = 0; b < g.x.size(); ++b)
                for (std::size_t c = 0; c < g.x.size(); ++c) {
                    const Vec3 v = m.center + m.width * Vec3{g.x[a], g.x[b], g.x[c]};
                    acc += g.w[a] * g.w[b] * g.w[c] * WeakFamily::eval(m, v) * density(v);
                }
        out[n] = acc * m.width * m.width * m.width;
    }
    return out;
}

double weak_distance(const std::vector<double>& a, const std::vector<double>& b)
{
    if (a.size() != b.size()) throw DiagnosticsError("weak_distance: integral vectors differ in length");
    double d = 0.0, w = 0.5;
    for (std::size_t n = 0; n < a.size(); ++n, w *= 0.5) d += w * std::abs(a[n] - b[n]);
    return d;
}

double weak_distance(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu)
{
    return weak_distance(weak_integrals(mu), weak_integrals(nu));
}

std::vector<double> cumulative_integral(const std::vector<double>& t, const std::vector<double>& y)
{
    const std::size_t n = t.size();
    if (y.size() != n) throw DiagnosticsError("cumulative_integral: size mismatch");
    if (n < 3) throw DiagnosticsError("cumulative_integral: needs at least three points");
    std::vector<double> out(n, 0.0);
    const double g = 1.0 / std::sqrt(3.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const std::size_t j = i + 2 < n ? i : i - 1;  // interpolation triple j, j+1, j+2
        const double t0 = t[j], t1 = t[j + 1], t2 = t[j + 2];
        const auto q = [&](double x) {
            return y[j] * (x - t1) * (x - t2) / ((t0 - t1) * (t0 - t2)) +
                   y[j + 1] * (x - t0) * (x - t2) / ((t1 - t0) * (t1 - t2)) +
                   y[j + 2] * (x - t0) * (x - t1) / ((t2 - t0) * (t2 - t1));
        };
        const double mid = 0.5 * (t[i] + t[i + 1]), half = 0.5 * (t[i + 1] - t[i]);
        out[i + 1] = out[i] + half * (q(mid - g * half) + q(mid + g * half));
    }
    return out;
}

ResidualTrace weak_form_residual(const EnsembleResult& ens, const std::function<double(const Vec3&)>& phi,
                                 const PairFunction& a_phi_pair)
{
    const std::size_t C = ens.times.size();
    if (C < 8) throw DiagnosticsError("weak_form_residual needs at least 8 checkpoints");
    if (ens.times.front() != 0.0) throw DiagnosticsError("weak_form_residual: first checkpoint must be t = 0");
    const std::size_t R = ens.snapshots.front().size();
    ResidualTrace tr;
    tr.times = ens.times;
    tr.per_replica.assign(C, std::vector<double>(R, 0.0));
    for (std::size_t r = 0; r < R; ++r) {
        std::vector<double> m(C), G(C);
        for (std::size_t c = 0; c < C; ++c) {
            const std::vector<Vec3>& v = ens.snapshots[c][r].v;
            const std::size_t N = v.size();
            double s = 0.0;
            for (const Vec3& x : v) s += phi(x);
            m[c] = s / static_cast<double>(N);
            double a = 0.0;
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t j = i + 1; j < N; ++j)
                    if (norm2(v[i] - v[j]) > 0.0) a += a_phi_pair(v[i], v[j]);
            G[c] = 2.0 * a / (static_cast<double>(N) * static_cast<double>(N - 1));
        }
        const std::vector<double> I = cumulative_integral(ens.times, G);
        for (std::size_t c = 0; c < C; ++c) tr.per_replica[c][r] = m[c] - m[0] - I[c];
    }
    for (std::size_t c = 0; c < C; ++c) {
        double s1 = 0.0, s2 = 0.0, a1 = 0.0;
        for (double f : tr.per_replica[c]) {
            s1 += f;
            s2 += f * f;
            a1 += std::abs(f);
        }
        const double n = static_cast<double>(R);
        const double mean = s1 / n, mabs = a1 / n;
        tr.mean.push_back(mean);
        tr.mean_abs.push_back(mabs);
        tr.se.push_back(R > 1 ? std::sqrt(std::max(0.0, (s2 / n - mean * mean)) / (n - 1.0)) : 0.0);
        tr.se_abs.push_back(R > 1 ? std::sqrt(std::max(0.0, (s2 / n - mabs * mabs)) / (n - 1.0)) : 0.0);
    }
    return tr;
}

ResidualTrace weak_form_residual(const EnsembleResult& ens, const GaussianBump& phi, const RegularizedKernel& kernel)
{
    return weak_form_residual(
        ens, [&](const Vec3& v) { return phi(v); },
        [&](const Vec3& v, const Vec3& w) { return a_phi_bump(phi, v, w, kernel, true); });
}

ResidualTrace weak_form_residual(const EnsembleResult& ens, const TestPhi& phi, const RegularizedKernel& kernel,
                                 const APhiOptions& opt)
{
    return weak_form_residual(ens, phi.f,
                              [&](const Vec3& v, const Vec3& w) { return a_phi(phi, v, w, kernel, true, opt).value; });
}

double pair_dissipation(const std::function<double(const Vec3&)>& f, const RegularizedKernel& kernel,
                        bool regularized, const Vec3& z, double r, int band_limit)
{
    const std::vector<double>& mu = regularized ? kernel.symbols_k() : kernel.symbols_base();
    if (band_limit < 1 || band_limit >= static_cast<int>(mu.size()))
        throw DiagnosticsError("pair_dissipation: band limit outside the symbol table");
    const auto plan = plan_for(band_limit);
    const SphereGrid& g = plan->grid();
    std::vector<double> vals(g.size());
    for (int j = 0; j < g.n_theta; ++j)
        for (int k = 0; k < g.n_phi; ++k) {
            const Vec3 s = g.point(j, k);
            vals[g.index(j, k)] = std::sqrt(std::max(0.0, f(z + r * s)) * std::max(0.0, f(z - r * s)));
        }
    const HarmonicSpectrum spec = plan->analysis(vals);
    double acc = 0.0;
    for (int l = 1; l <= band_limit; ++l) {
        double e = 0.0;
        for (int m = -l; m <= l; ++m) e += spec.at(l, m) * spec.at(l, m);
        acc += mu[static_cast<std::size_t>(l)] * e;
    }
    return 2.0 * acc;
}

namespace {

double dissipation_at(const std::function<double(const Vec3&)>& f, const RegularizedKernel& kernel, bool regularized,
                      const DissipationQuadrature& q)
{
    const QuadratureRule gr = gauss_legendre(q.r_nodes, 0.0, q.r_max);
    const QuadratureRule gz = gauss_legendre(q.z_nodes, -q.z_half_width, q.z_half_width);
    const QuadratureRule gp = gauss_legendre(q.z_nodes, 0.0, q.z_half_width);
    const auto radial = [&](const Vec3& z) {
        double acc = 0.0;
        for (std::size_t i = 0; i < gr.x.size(); ++i) {
            const double r = gr.x[i];
            const double a = regularized ? kernel.alpha(r) : kernel.alpha_base(r);
            acc += gr.w[i] * 8.0 * r * r * a * pair_dissipation(f, kernel, regularized, z, r, q.band_limit);
        }
        return acc;
    };
    double acc = 0.0;
    if (q.axisymmetric) {
        for (std::size_t a = 0; a < gz.x.size(); ++a)
            for (std::size_t b = 0; b < gp.x.size(); ++b)
                acc += gz.w[a] * gp.w[b] * 2.0 * kPi * gp.x[b] * radial({gz.x[a], gp.x[b], 0.0});
    } else {
        for (std::size_t a = 0; a < gz.x.size(); ++a)
            for (std::size_t b = 0; b < gz.x.size(); ++b)
                for (std::size_t c = 0; c < gz.x.size(); ++c)
                    acc += gz.w[a] * gz.w[b] * gz.w[c] * radial({gz.x[a], gz.x[b], gz.x[c]});
    }
    return acc;
}

}  // namespace

DissipationResult entropy_production_2(const std::function<double(const Vec3&)>& f, const RegularizedKernel& kernel,
                                       bool regularized, const DissipationQuadrature& q)
{
    if (q.z_nodes < 2 || q.r_nodes < 2 || !(q.z_half_width > 0.0) || !(q.r_max > 0.0))
        throw DiagnosticsError("entropy_production_2: bad quadrature");
    DissipationResult out;
    out.value = dissipation_at(f, kernel, regularized, q);
    out.refined = out.value;
    if (q.check_refinement) {
        DissipationQuadrature fine = q;
        fine.z_nodes *= 2;
        fine.r_nodes *= 2;
        out.refined = dissipation_at(f, kernel, regularized, fine);
        const double a = std::abs(out.value), b = std::abs(out.refined);
        out.refinement_ratio = (a == 0.0 && b == 0.0) ? 1.0 : std::max(a, b) / std::max(std::min(a, b), 1e-300);
        out.converged = out.refinement_ratio <= 1.1;
    }
    return out;
}

Estimate pair_closeness(const std::vector<ReplicaSnapshot>& replicas)
{
    if (replicas.empty()) throw DiagnosticsError("pair_closeness: no replicas");
    std::vector<double> per;
    std::size_t coincident = 0;
    for (const auto& rep : replicas) {
        const auto& v = rep.v;
        double acc = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < v.size(); ++i)
            for (std::size_t j = i + 1; j < v.size(); ++j) {
                const double d2 = norm2(v[i] - v[j]);
                if (d2 > 0.0) {
                    acc += 1.0 / d2;
                    ++n;
                } else {
                    ++coincident;
                }
            }
        if (n > 0) per.push_back(acc / static_cast<double>(n));
    }
    if (per.empty()) throw DiagnosticsError("pair_closeness: no distinct pairs");
    std::vector<int> group(per.size());
    for (std::size_t i = 0; i < group.size(); ++i) group[i] = static_cast<int>(i);
    Estimate e = grouped_mean(per, group.size() >= 2 ? group : std::vector<int>{});
    e.meta["coincident_pairs"] = std::to_string(coincident);
    return e;
}

std::vector<DiagnosticsRecord> checkpoint_records(const EnsembleResult& ens, const RecordOptions& opt)
{
    std::vector<DiagnosticsRecord> out;
    for (std::size_t c = 0; c < ens.times.size(); ++c) {
        DiagnosticsRecord rec;
        rec.t = ens.times[c];
        const EmpiricalMeasure mu = pooled(ens.snapshots[c]);
        const std::vector<Estimate> m = moments(mu, opt.moment_orders);
        for (std::size_t i = 0; i < m.size(); ++i) rec.quantities.emplace_back("m_" + fmt(opt.moment_orders[i]), m[i]);
        if (opt.entropy && mu.samples.size() >= 100) rec.quantities.emplace_back("entropy", entropy_knn(mu, opt.k_nn));
        if (opt.fisher && mu.samples.size() >= 1000) rec.quantities.emplace_back("fisher", fisher_knn(mu));
        if (opt.pairs) rec.quantities.emplace_back("pair_inv_sq", pair_closeness(ens.snapshots[c]));
        Estimate mom, en, col;
        for (const auto& s : ens.snapshots[c]) {
            mom.value = std::max(mom.value, s.residual.momentum);
            en.value = std::max(en.value, s.residual.energy);
            col.value += static_cast<double>(s.collisions);
        }
        col.value /= static_cast<double>(ens.snapshots[c].size());
        rec.quantities.emplace_back("max_momentum_drift", mom);
        rec.quantities.emplace_back("max_energy_drift", en);
        rec.quantities.emplace_back("mean_collisions", col);
        out.push_back(std::move(rec));
    }
    return out;
}

namespace {

MonotoneCheck monotone(const std::vector<Estimate>& series, double slack, double sign)
{
    MonotoneCheck out;
    for (std::size_t i = 1; i < series.size(); ++i) {
        const double comb = std::hypot(series[i].se, series[i - 1].se);
        const double inc = sign * (series[i].value - series[i - 1].value);
        const double units = comb > 0.0 ? inc / comb : (inc > 0.0 ? INFINITY : 0.0);
        out.worst = std::max(out.worst, units);
        if (units > slack) out.holds = false;
    }
    return out;
}

}  // namespace

MonotoneCheck non_increasing(const std::vector<Estimate>& series, double slack)
{
    return monotone(series, slack, 1.0);
}

MonotoneCheck non_decreasing(const std::vector<Estimate>& series, double slack)
{
    return monotone(series, slack, -1.0);
}

}  // namespace kaclab
