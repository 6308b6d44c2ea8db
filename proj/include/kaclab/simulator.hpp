#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "kaclab/geometry.hpp"
#include "kaclab/kernels.hpp"
#include "kaclab/rng.hpp"

namespace kaclab {

class SimConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};
class InvariantError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};
class SampleFileError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// gaussian: components[0] only. gaussian_mixture: weighted isotropic
// components. file: CSV rows (vx, vy, vz), drawn uniformly with replacement.
struct InitialLaw {
    struct Component {
        double weight = 1.0;
        Vec3 mean;
        double sigma = 1.0;
    };
    std::string type = "gaussian";
    std::vector<Component> components{Component{}};
    std::string path;
};

struct SimConfig {
    int N = 64;
    KernelSpec kernel;
    InitialLaw init;
    double T = 1.0;
    std::vector<double> checkpoints;  // empty: {0, T}
    int replicas = 1;
    std::uint64_t seed = 0;
};

// Throws SimConfigError.
void validate(const SimConfig& cfg);
std::vector<double> checkpoint_times(const SimConfig& cfg);

struct Event {
    double t = 0.0;
    int i = -1, j = -1;
    Vec3 sigma_prime;
    bool accepted = false;
};

// Every proposal in order; capacity 0 keeps all, otherwise the latest ones.
struct EventLog {
    std::size_t capacity = 0;
    std::vector<Event> events;
    std::size_t dropped = 0;
    void push(const Event& e);
};

struct ParticleState {
    std::vector<Vec3> v;
    double t = 0.0;
    std::uint64_t proposals = 0;
    std::uint64_t collisions = 0;
    std::uint64_t degenerate = 0;  // proposals with |v - w| < 1e-300
    Vec3 P0;
    double E0 = 0.0;
    std::uint64_t replica = 0;
    Philox4x32 rng;
    // Last accepted events, oldest first once full.
    std::array<Event, 8> tail{};
    std::size_t tail_count = 0;
};

std::vector<Vec3> sample_initial(const InitialLaw& law, int n, Philox4x32& rng);
ParticleState init_state(const SimConfig& cfg, std::uint64_t replica);

struct ConservationResidual {
    double momentum = 0.0;  // |P - P0| / (1 + |P0|)
    double energy = 0.0;    // |E - E0| / E0
};
ConservationResidual conservation(const ParticleState& s);
// Throws InvariantError carrying the event tail when either residual
// exceeds tol or a velocity is not finite.
void check_conservation(const ParticleState& s, double tol = 1e-9);

// Total proposal rate N k^{-gamma} ||b^k||_{L1} / 2.
double proposal_rate(int N, const RegularizedKernel& kernel);

// Advances the state to time `until` by thinning.
void run(ParticleState& s, double until, const RegularizedKernel& kernel, EventLog* log = nullptr);

struct ReplicaSnapshot {
    std::vector<Vec3> v;
    std::uint64_t proposals = 0, collisions = 0, degenerate = 0;
    ConservationResidual residual;
};

struct EnsembleResult {
    std::vector<double> times;
    // snapshots[c][r]: replica r at checkpoint c.
    std::vector<std::vector<ReplicaSnapshot>> snapshots;
    double proposal_rate = 0.0;
};

// Replicas run concurrently on up to `threads` workers; the result does not
// depend on the thread count.
EnsembleResult run_ensemble(const SimConfig& cfg, const RegularizedKernel& kernel, int threads = 1);

}  // namespace kaclab
