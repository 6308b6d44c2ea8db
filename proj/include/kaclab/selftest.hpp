#pragma once

#include "kaclab/sphere.hpp"

namespace kaclab {

// Transform and kernel checks on a seeded random spectrum.
struct SphereSelftest {
    int L = 32;
    double round_trip = 0.0;      // max |synthesis(analysis(f)) - f|
    double parseval = 0.0;        // relative
    double heat_mass = 0.0;       // max over t of |int Phi_t - 1|
    double kernel_vs_spectral = 0.0;  // relative, s = 3/4, band-limited input
    bool pass() const { return round_trip <= 1e-10 && heat_mass <= 1e-10 && kernel_vs_spectral <= 1e-3; }
};

SphereSelftest sphere_selftest(int L = 32, unsigned seed = 1);

}  // namespace kaclab
