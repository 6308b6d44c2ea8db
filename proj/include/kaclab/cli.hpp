#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "kaclab/diagnostics.hpp"
#include "kaclab/simulator.hpp"

namespace kaclab {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class OutputError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitInvariant = 3, kExitIO = 4 };

struct InequalityBlock {
    std::vector<double> s_values{0.5, 0.75, 0.9};
    int family_size = 50;
    unsigned seed = 1;
    int band_limit = 32;
    int fine_band_limit = 64;
};

struct RunConfig {
    std::string command;  // simulate | inequalities | kernel-info | sphere-selftest
    std::uint64_t seed = 0;
    SimConfig sim;        // sim.seed mirrors seed
    RecordOptions diagnostics;
    InequalityBlock inequalities;
};

// Every block is optional; unknown keys and mistyped values throw ConfigError.
RunConfig parse_config(const nlohmann::json& j);
// Fully resolved form; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const RunConfig& c);

// RFC 4180 field: quoted when it holds a comma, quote, CR or LF.
std::string csv_field(const std::string& s);
// Shortest text that reads back to the same double.
std::string format_double(double x);

struct CliOptions {
    std::string out_dir = "kaclab_out";
    int threads = 1;
    bool verbose = false;
};

int cmd_simulate(const RunConfig& cfg, const CliOptions& opt, std::ostream& log);
int cmd_inequalities(const RunConfig& cfg, const CliOptions& opt, std::ostream& log);
int cmd_kernel_info(const RunConfig& cfg, const CliOptions& opt, std::ostream& log);
int cmd_sphere_selftest(const RunConfig& cfg, const CliOptions& opt, std::ostream& log);

// Parses flags, loads the config and dispatches; returns the exit code.
int run_cli(int argc, char** argv);

}  // namespace kaclab
