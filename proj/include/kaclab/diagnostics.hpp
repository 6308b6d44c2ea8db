#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "kaclab/geometry.hpp"
#include "kaclab/kernels.hpp"
#include "kaclab/simulator.hpp"

namespace kaclab {

class DiagnosticsError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Samples of one replica, or pooled across replicas. `group[i]` names the
// replica of sample i; standard errors come from the spread of per-group
// means. An empty `group` treats every sample as its own group.
struct EmpiricalMeasure {
    std::vector<Vec3> samples;
    std::vector<int> group;
};

EmpiricalMeasure pooled(const std::vector<ReplicaSnapshot>& replicas);

struct Estimate {
    double value = 0.0;
    double se = 0.0;
    std::map<std::string, std::string> meta;
};

// (1/n) sum <v_i>^l, <v> = sqrt(1 + |v|^2).
std::vector<Estimate> moments(const EmpiricalMeasure& mu, const std::vector<double>& orders);

// Kozachenko-Leonenko entropy -int f log f with the k-th neighbour distance.
// Points at zero distance from their k-th neighbour are excluded and counted
// in meta["excluded"]. Needs n >= 100.
Estimate entropy_knn(const EmpiricalMeasure& mu, int k_nn = 4);

// Fisher information int |grad f|^2 / f of the one-particle density from
// Gaussian kernel scores, cross-fitted: samples are split in four by a hash
// of their index, each point of one half is scored against both quarters of
// the other half, and the two independent scores are multiplied. Product
// kernel with a Silverman bandwidth per coordinate of a quarter. The mean
// is clamped at 0. Needs n >= 1000.
struct FisherOptions {
    double bandwidth_scale = 1.0;  // multiplies the Silverman bandwidths
    double cutoff = 5.0;           // kernel truncated at cutoff * h
};
Estimate fisher_knn(const EmpiricalMeasure& mu, const FisherOptions& opt = {});

// Test family phi_n, n = 1..64, of the weak distance.
struct WeakFamily {
    static constexpr const char* version = "dyadic-bump-v1";
    static constexpr int size = 64;
    struct Member {
        Vec3 center;
        double width = 1.0;  // support is center + [-width, width]^3
        double scale = 1.0;  // keeps |phi| + |grad phi| + |D2 phi| <= 1
    };
    static const std::vector<Member>& members();
    static double eval(const Member& m, const Vec3& v);
};

// int phi_n dmu, n = 1..64.
std::vector<double> weak_integrals(const EmpiricalMeasure& mu);
// int phi_n f dv by tensor Gauss-Legendre on each support.
std::vector<double> weak_integrals(const std::function<double(const Vec3&)>& density, int nodes_per_dim = 16);
// sum 2^{-n} |a_n - b_n|.
double weak_distance(const std::vector<double>& a, const std::vector<double>& b);
double weak_distance(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

// F_{phi,t} = int phi dmu_t - int phi dmu_0 - int_0^t int A(phi) dnu_tau dtau
// at every checkpoint, per replica; the time integral interpolates the pair
// averages quadratically between checkpoints.
struct ResidualTrace {
    std::vector<double> times;
    std::vector<double> mean_abs, se_abs;  // E|F| and its standard error
    std::vector<double> mean, se;          // E F
    std::vector<std::vector<double>> per_replica;  // [checkpoint][replica]
};
using PairFunction = std::function<double(const Vec3&, const Vec3&)>;
ResidualTrace weak_form_residual(const EnsembleResult& ens, const std::function<double(const Vec3&)>& phi,
                                 const PairFunction& a_phi_pair);
ResidualTrace weak_form_residual(const EnsembleResult& ens, const GaussianBump& phi, const RegularizedKernel& kernel);
ResidualTrace weak_form_residual(const EnsembleResult& ens, const TestPhi& phi, const RegularizedKernel& kernel,
                                 const APhiOptions& opt = {});

// Integral of the quadratic interpolant of (t_i, y_i) from t_0 to each t_i.
std::vector<double> cumulative_integral(const std::vector<double>& t, const std::vector<double>& y);

// Entropy production of F = f (x) f:
// iint (sqrt(F') - sqrt(F))^2 B dsigma' dsigma 8 r^2 dz dr. The sphere pair
// integral equals 2 sum_l mu_l |g_l|^2 for g = sqrt(f(z + r.) f(z - r.)),
// with mu_l the zonal symbols of the kernel.
struct DissipationQuadrature {
    int z_nodes = 16;         // per dimension on [-z_half_width, z_half_width]
    double z_half_width = 4.0;
    int r_nodes = 16;         // on [0, r_max]
    double r_max = 5.0;
    int band_limit = 12;
    // f invariant under rotations about e_1: z = (z1, rho, 0) with 2 pi rho.
    bool axisymmetric = false;
    bool check_refinement = true;  // repeat with doubled z and r nodes
};
struct DissipationResult {
    double value = 0.0;
    double refined = 0.0;
    double refinement_ratio = 1.0;  // max(refined/value, value/refined)
    bool converged = true;          // ratio <= 1.1
};
DissipationResult entropy_production_2(const std::function<double(const Vec3&)>& f, const RegularizedKernel& kernel,
                                       bool regularized = true, const DissipationQuadrature& q = {});
// Sphere pair integral iint (sqrt(F') - sqrt(F))^2 b dsigma dsigma' at fixed (z, r).
double pair_dissipation(const std::function<double(const Vec3&)>& f, const RegularizedKernel& kernel,
                        bool regularized, const Vec3& z, double r, int band_limit);

// E|V_1 - V_2|^{-2}: per replica the mean over distinct pairs, then the
// mean and standard error across replicas.
Estimate pair_closeness(const std::vector<ReplicaSnapshot>& replicas);

struct DiagnosticsRecord {
    double t = 0.0;
    std::vector<std::pair<std::string, Estimate>> quantities;
};

struct RecordOptions {
    std::vector<double> moment_orders{2.0, 4.0};
    bool entropy = true;
    bool fisher = true;
    bool pairs = true;
    int k_nn = 4;
};
// One record per checkpoint of the ensemble.
std::vector<DiagnosticsRecord> checkpoint_records(const EnsembleResult& ens, const RecordOptions& opt = {});

// Directional monitors: each consecutive difference is compared with
// `slack` combined standard errors.
struct MonotoneCheck {
    bool holds = true;
    double worst = 0.0;  // largest increase in units of combined SE
};
MonotoneCheck non_increasing(const std::vector<Estimate>& series, double slack = 2.0);
MonotoneCheck non_decreasing(const std::vector<Estimate>& series, double slack = 2.0);

}  // namespace kaclab
