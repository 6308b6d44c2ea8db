#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kaclab/cli.hpp"

using namespace kaclab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("kaclab_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

fs::path write_json(const fs::path& dir, const std::string& name, const json& j)
{
    const fs::path p = dir / name;
    std::ofstream(p) << j.dump();
    return p;
}

int cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "kaclab");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

const json kMinimal = {
    {"command", "simulate"},
    {"seed", 7},
    {"kernel", {{"type", "maxwell"}}},
    {"simulation", {{"N", 64}, {"T", 1.0}, {"replicas", 4}, {"checkpoints", {0.0, 0.5, 1.0}}}},
};

}  // namespace

TEST_CASE("config parsing")
{
    const RunConfig c = parse_config(kMinimal);
    CHECK(c.command == "simulate");
    CHECK(c.sim.N == 64);
    CHECK(c.sim.replicas == 4);
    CHECK(c.sim.seed == 7);
    CHECK(c.sim.kernel.type == "maxwell");
    CHECK(c.inequalities.family_size == 50);

    // The echo parses back to the same echo.
    CHECK(to_json(parse_config(to_json(c))) == to_json(c));

    json bad = kMinimal;
    bad["simulation"]["Nn"] = 3;
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
    bad = kMinimal;
    bad["extra"] = true;
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
    bad = kMinimal;
    bad["simulation"]["N"] = 64.5;
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
    bad = kMinimal;
    bad["seed"] = -1;
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
    bad = kMinimal;
    bad["command"] = "fly";
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
    bad = kMinimal;
    bad["simulation"]["init"] = {{"components", {{{"weight", 1.0}, {"mean", {0.0, 1.0}}}}}};
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
    bad = kMinimal;
    bad["diagnostics"] = {{"entropy", "yes"}};
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
}

TEST_CASE("CSV fields and number formatting")
{
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(csv_field("two\nlines") == "\"two\nlines\"");
    for (double x : {0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, 0.0})
        CHECK(std::stod(format_double(x)) == x);
}

TEST_CASE("simulate: artifacts, determinism and echo")
{
    const fs::path d = scratch("sim");
    const fs::path cfg = write_json(d, "min.json", kMinimal);
    CHECK(cli({"--config", cfg.string(), "--out", (d / "a").string()}) == kExitOk);
    CHECK(cli({"--config", cfg.string(), "--out", (d / "b").string(), "--threads", "2"}) == kExitOk);
    for (const char* f : {"checkpoints.csv", "replicas.csv", "summary.json", "config.json"})
        CHECK(fs::exists(d / "a" / f));
    const std::string csv = slurp(d / "a" / "checkpoints.csv");
    CHECK(csv.rfind("t,quantity,value,se\r\n", 0) == 0);
    CHECK(csv == slurp(d / "b" / "checkpoints.csv"));
    CHECK(slurp(d / "a" / "summary.json") == slurp(d / "b" / "summary.json"));

    // Re-running the echoed config reproduces the outputs.
    CHECK(cli({"--config", (d / "a" / "config.json").string(), "--out", (d / "c").string()}) == kExitOk);
    CHECK(csv == slurp(d / "c" / "checkpoints.csv"));

    // --seed overrides the config and is echoed.
    CHECK(cli({"--config", cfg.string(), "--out", (d / "e").string(), "--seed", "8"}) == kExitOk);
    CHECK(csv != slurp(d / "e" / "checkpoints.csv"));
    CHECK(json::parse(slurp(d / "e" / "config.json"))["seed"] == 8);

    const json summary = json::parse(slurp(d / "a" / "summary.json"));
    CHECK(summary["status"] == "ok");
    CHECK(summary["max_energy_drift"].get<double>() <= 1e-12);
}

TEST_CASE("exit codes")
{
    const fs::path d = scratch("codes");
    json bad_q = {{"command", "kernel-info"}, {"kernel", {{"type", "power_law"}, {"q", 2.0}}}};
    CHECK(cli({"--config", write_json(d, "q.json", bad_q).string(), "--out", (d / "o").string()}) == kExitConfig);
    json unknown = kMinimal;
    unknown["simulation"]["bogus"] = 1;
    CHECK(cli({"--config", write_json(d, "u.json", unknown).string()}) == kExitConfig);
    CHECK(cli({"--config", (d / "missing.json").string()}) == kExitIO);
    {
        std::ofstream(d / "broken.json") << "{ not json";
    }
    CHECK(cli({"--config", (d / "broken.json").string()}) == kExitConfig);
    CHECK(cli({}) == kExitConfig);
    CHECK(cli({"simulate", "--threads", "0"}) == kExitConfig);
    json zero = {{"inequalities", {{"family_size", 0}}}};
    CHECK(cli({"inequalities", "--config", write_json(d, "z.json", zero).string(), "--out", (d / "o").string()}) ==
          kExitConfig);
    json file_law = kMinimal;
    file_law["simulation"]["init"] = {{"type", "file"}, {"path", (d / "nope.csv").string()}};
    CHECK(cli({"--config", write_json(d, "f.json", file_law).string(), "--out", (d / "o").string()}) == kExitIO);
    // The output path is a regular file.
    std::ofstream(d / "occupied") << "x";
    CHECK(cli({"--config", write_json(d, "m.json", kMinimal).string(), "--out", (d / "occupied").string()}) ==
          kExitIO);
}

TEST_CASE("kernel-info and sphere-selftest")
{
    const fs::path d = scratch("info");
    CHECK(cli({"kernel-info", "--out", d.string()}) == kExitOk);
    const json j = json::parse(slurp(d / "kernel_info.json"));
    CHECK(j["gamma"].get<double>() == doctest::Approx(-2.0));
    CHECK(j["s"].get<double>() == doctest::Approx(0.75));
    CHECK(j["moment_threshold"].get<double>() == doctest::Approx(16.0 / 3.0));
    CHECK(j["lambda_bound"].get<double>() > 3.0);
    CHECK(j["h1_margin"].get<double>() > 0.0);
    CHECK(j["sup_bk"].get<double>() > 0.0);

    CHECK(cli({"sphere-selftest", "--out", d.string()}) == kExitOk);
    const json t = json::parse(slurp(d / "selftest.json"));
    CHECK(t["pass"] == true);
    CHECK(t["round_trip"].get<double>() <= 1e-10);
}
