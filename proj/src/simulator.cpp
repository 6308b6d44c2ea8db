#include "kaclab/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/random/normal_distribution.hpp>

namespace kaclab {

namespace {

constexpr double kDegenerate = 1e-300;

// Uniform in the open interval (0, 1).
double open_uniform(Philox4x32& rng)
{
    const std::uint64_t a = rng() >> 5, b = rng() >> 6;
    return (static_cast<double>(a * 67108864u + b) + 0.5) * 0x1.0p-53;
}

std::vector<Vec3> read_samples(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw SampleFileError("cannot open sample file " + path);
    std::vector<Vec3> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        Vec3 v;
        if (!(ss >> v.x >> v.y >> v.z)) {
            if (out.empty() && lineno == 1) continue;  // header
            throw SampleFileError(path + ":" + std::to_string(lineno) + ": expected three numbers");
        }
        if (!is_finite(v)) throw SampleFileError(path + ":" + std::to_string(lineno) + ": non-finite sample");
        out.push_back(v);
    }
    if (out.empty()) throw SampleFileError("sample file " + path + " holds no samples");
    return out;
}

Vec3 total_momentum(const std::vector<Vec3>& v)
{
    Vec3 p;
    for (const Vec3& x : v) p += x;
    return p;
}

double total_energy(const std::vector<Vec3>& v)
{
    double e = 0.0;
    for (const Vec3& x : v) e += norm2(x);
    return e;
}

std::string describe_tail(const ParticleState& s)
{
    std::ostringstream os;
    const std::size_t n = std::min(s.tail_count, s.tail.size());
    os << "last " << n << " collisions (t, i, j):";
    for (std::size_t q = 0; q < n; ++q) {
        const Event& e = s.tail[(s.tail_count - n + q) % s.tail.size()];
        os << " (" << e.t << ", " << e.i << ", " << e.j << ")";
    }
    return os.str();
}

}  // namespace

void validate(const SimConfig& cfg)
{
    if (cfg.N < 2) throw SimConfigError("N must be at least 2");
    if (!(cfg.T > 0.0) || !std::isfinite(cfg.T)) throw SimConfigError("T must be positive");
    if (cfg.replicas < 1) throw SimConfigError("replicas must be at least 1");
    for (std::size_t i = 0; i < cfg.checkpoints.size(); ++i) {
        const double t = cfg.checkpoints[i];
        if (!(t >= 0.0 && t <= cfg.T)) throw SimConfigError("checkpoint times must lie in [0, T]");
        if (i > 0 && !(t > cfg.checkpoints[i - 1])) throw SimConfigError("checkpoint times must be increasing");
    }
    const InitialLaw& law = cfg.init;
    if (law.type == "file") {
        if (law.path.empty()) throw SimConfigError("file initial law needs a path");
        return;
    }
    if (law.type != "gaussian" && law.type != "gaussian_mixture")
        throw SimConfigError("unknown initial law '" + law.type + "'");
    if (law.components.empty()) throw SimConfigError("initial law has no components");
    if (law.type == "gaussian" && law.components.size() != 1)
        throw SimConfigError("gaussian initial law takes one component");
    for (const auto& c : law.components) {
        if (!(c.weight > 0.0) || !std::isfinite(c.weight)) throw SimConfigError("component weights must be positive");
        if (!(c.sigma > 0.0) || !std::isfinite(c.sigma)) throw SimConfigError("component sigma must be positive");
        if (!is_finite(c.mean)) throw SimConfigError("component mean must be finite");
    }
}

std::vector<double> checkpoint_times(const SimConfig& cfg)
{
    if (cfg.checkpoints.empty()) return {0.0, cfg.T};
    return cfg.checkpoints;
}

void EventLog::push(const Event& e)
{
    if (capacity > 0 && events.size() == capacity) {
        // Amortized: drop the older half.
        const std::size_t keep = capacity / 2;
        dropped += events.size() - keep;
        events.erase(events.begin(), events.end() - static_cast<std::ptrdiff_t>(keep));
    }
    events.push_back(e);
}

std::vector<Vec3> sample_initial(const InitialLaw& law, int n, Philox4x32& rng)
{
    std::vector<Vec3> out(static_cast<std::size_t>(n));
    if (law.type == "file") {
        const std::vector<Vec3> pool = read_samples(law.path);
        for (Vec3& v : out) v = pool[rng.below(static_cast<std::uint32_t>(pool.size()))];
        return out;
    }
    double wsum = 0.0;
    for (const auto& c : law.components) wsum += c.weight;
    boost::random::normal_distribution<double> normal;
    for (Vec3& v : out) {
        std::size_t m = 0;
        if (law.components.size() > 1) {
            double u = rng.uniform() * wsum;
            while (m + 1 < law.components.size() && u >= law.components[m].weight) u -= law.components[m++].weight;
        }
        const auto& c = law.components[m];
        const double x = normal(rng), y = normal(rng), z = normal(rng);
        v = c.mean + c.sigma * Vec3{x, y, z};
    }
    return out;
}

ParticleState init_state(const SimConfig& cfg, std::uint64_t replica)
{
    validate(cfg);
    ParticleState s;
    s.replica = replica;
    s.rng = Philox4x32(cfg.seed, replica);
    s.v = sample_initial(cfg.init, cfg.N, s.rng);
    s.P0 = total_momentum(s.v);
    s.E0 = total_energy(s.v);
    return s;
}

ConservationResidual conservation(const ParticleState& s)
{
    ConservationResidual r;
    r.momentum = norm(total_momentum(s.v) - s.P0) / (1.0 + norm(s.P0));
    r.energy = s.E0 > 0.0 ? std::abs(total_energy(s.v) - s.E0) / s.E0 : total_energy(s.v);
    return r;
}

void check_conservation(const ParticleState& s, double tol)
{
    for (std::size_t i = 0; i < s.v.size(); ++i)
        if (!is_finite(s.v[i]))
            throw InvariantError("non-finite velocity of particle " + std::to_string(i) + " at t = " +
                                 std::to_string(s.t) + "; " + describe_tail(s));
    const ConservationResidual r = conservation(s);
    if (r.momentum > tol || r.energy > tol) {
        std::ostringstream os;
        os << "conservation drift at t = " << s.t << ": momentum " << r.momentum << ", energy " << r.energy << "; "
           << describe_tail(s);
        throw InvariantError(os.str());
    }
}

double proposal_rate(int N, const RegularizedKernel& kernel)
{
    return 0.5 * N * kernel.alpha_bound() * kernel.l1_norm();
}

void run(ParticleState& s, double until, const RegularizedKernel& kernel, EventLog* log)
{
    if (until < s.t) throw SimConfigError("run: target time precedes the state time");
    const int N = static_cast<int>(s.v.size());
    if (N < 2) throw SimConfigError("run: needs at least two particles");
    if (until == s.t) return;
    const double rate = proposal_rate(N, kernel);
    const double inv_bound = 1.0 / kernel.alpha_bound();
    const AngularSampler& sampler = kernel.sampler();
    Philox4x32& rng = s.rng;
    for (;;) {
        const double dt = -std::log(open_uniform(rng)) / rate;
        if (s.t + dt > until) {
            // The clock is memoryless, so the overshoot is discarded.
            s.t = until;
            return;
        }
        s.t += dt;
        ++s.proposals;
        const int i = static_cast<int>(rng.below(static_cast<std::uint32_t>(N)));
        int j = static_cast<int>(rng.below(static_cast<std::uint32_t>(N - 1)));
        if (j >= i) ++j;
        Vec3& vi = s.v[static_cast<std::size_t>(i)];
        Vec3& vj = s.v[static_cast<std::size_t>(j)];
        const Vec3 d = vi - vj;
        const double u = rng.uniform();
        Event ev{s.t, std::min(i, j), std::max(i, j), {}, false};
        const double dn = norm(d);
        if (dn < kDegenerate) {
            ++s.degenerate;
            if (log) log->push(ev);
            continue;
        }
        const double r = 0.5 * dn;
        if (u >= kernel.alpha(r) * inv_bound) {
            if (log) log->push(ev);
            continue;
        }
        const CollisionFrame fr{0.5 * (vi + vj), r, (1.0 / dn) * d};
        const double u1 = rng.uniform(), u2 = rng.uniform();
        const Vec3 sp = sampler.sample(fr.sigma, u1, u2);
        const auto [a, b] = post_collision(fr, sp);
        vi = a;
        vj = b;
        ++s.collisions;
        ev.sigma_prime = sp;
        ev.accepted = true;
        s.tail[s.tail_count++ % s.tail.size()] = ev;
        if (log) log->push(ev);
    }
}

EnsembleResult run_ensemble(const SimConfig& cfg, const RegularizedKernel& kernel, int threads)
{
    validate(cfg);
    EnsembleResult out;
    out.times = checkpoint_times(cfg);
    out.proposal_rate = proposal_rate(cfg.N, kernel);
    const std::size_t R = static_cast<std::size_t>(cfg.replicas);
    out.snapshots.assign(out.times.size(), std::vector<ReplicaSnapshot>(R));

    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr first_err;
    std::size_t err_replica = R;
    const auto worker = [&] {
        for (;;) {
            const std::size_t r = next.fetch_add(1);
            if (r >= R) return;
            {
                std::lock_guard<std::mutex> lk(err_mu);
                if (first_err) return;
            }
            try {
                ParticleState s = init_state(cfg, r);
                for (std::size_t c = 0; c < out.times.size(); ++c) {
                    run(s, out.times[c], kernel);
                    check_conservation(s);
                    ReplicaSnapshot& snap = out.snapshots[c][r];
                    snap.v = s.v;
                    snap.proposals = s.proposals;
                    snap.collisions = s.collisions;
                    snap.degenerate = s.degenerate;
                    snap.residual = conservation(s);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!first_err || r < err_replica) {
                    first_err = std::current_exception();
                    err_replica = r;
                }
            }
        }
    };
    const int nt = std::clamp(threads, 1, cfg.replicas);
    if (nt == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int q = 0; q < nt; ++q) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (first_err) {
        try {
            std::rethrow_exception(first_err);
        } catch (const InvariantError& e) {
            throw InvariantError("replica " + std::to_string(err_replica) + ": " + e.what());
        } catch (const SampleFileError& e) {
            throw SampleFileError("replica " + std::to_string(err_replica) + ": " + e.what());
        } catch (const std::exception& e) {
            throw std::runtime_error("replica " + std::to_string(err_replica) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace kaclab
