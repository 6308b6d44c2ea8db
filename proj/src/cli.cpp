#include "kaclab/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <type_traits>

#include "CLI11.hpp"
#include "kaclab/functionals.hpp"
#include "kaclab/kernels.hpp"
#include "kaclab/selftest.hpp"

namespace kaclab {

using nlohmann::json;

namespace {

const std::set<std::string> kCommands{"simulate", "inequalities", "kernel-info", "sphere-selftest"};

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

void read(const json& j, const char* key, double& dst, const std::string& where)
{
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw ConfigError(where + "." + key + ": expected a number");
    dst = j[key].get<double>();
    if (!std::isfinite(dst)) throw ConfigError(where + "." + key + ": not finite");
}

template <class Int>
void read_int(const json& j, const char* key, Int& dst, const std::string& where)
{
    if (!j.contains(key)) return;
    const json& v = j[key];
    if (!v.is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
    if constexpr (std::is_unsigned_v<Int>) {
        if (v.is_number_unsigned()) {
            dst = v.get<Int>();
            return;
        }
        if (v.get<long long>() < 0) throw ConfigError(where + "." + key + ": expected a non-negative integer");
    }
    dst = v.get<Int>();
}

void read(const json& j, const char* key, bool& dst, const std::string& where)
{
    if (!j.contains(key)) return;
    if (!j[key].is_boolean()) throw ConfigError(where + "." + key + ": expected true or false");
    dst = j[key].get<bool>();
}

void read(const json& j, const char* key, std::string& dst, const std::string& where)
{
    if (!j.contains(key)) return;
    if (!j[key].is_string()) throw ConfigError(where + "." + key + ": expected a string");
    dst = j[key].get<std::string>();
}

void read(const json& j, const char* key, std::vector<double>& dst, const std::string& where)
{
    if (!j.contains(key)) return;
    if (!j[key].is_array()) throw ConfigError(where + "." + key + ": expected an array");
    dst.clear();
    for (const json& x : j[key]) {
        if (!x.is_number()) throw ConfigError(where + "." + key + ": expected numbers");
        dst.push_back(x.get<double>());
    }
}

Vec3 read_vec3(const json& j, const std::string& where)
{
    if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected three numbers");
    for (const json& x : j)
        if (!x.is_number()) throw ConfigError(where + ": expected three numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

KernelSpec parse_kernel(const json& j)
{
    check_keys(j, {"type", "q", "s", "gamma", "k", "lambda", "c_b", "maxwell_b", "omega_table_path"}, "kernel");
    KernelSpec k;
    read(j, "type", k.type, "kernel");
    read(j, "q", k.q, "kernel");
    read(j, "s", k.s, "kernel");
    read(j, "gamma", k.gamma, "kernel");
    read_int(j, "k", k.k, "kernel");
    read(j, "lambda", k.lambda, "kernel");
    read(j, "c_b", k.c_b, "kernel");
    read(j, "maxwell_b", k.maxwell_b, "kernel");
    read(j, "omega_table_path", k.omega_table_path, "kernel");
    return k;
}

InitialLaw parse_init(const json& j)
{
    check_keys(j, {"type", "components", "path"}, "simulation.init");
    InitialLaw law;
    read(j, "type", law.type, "simulation.init");
    read(j, "path", law.path, "simulation.init");
    if (j.contains("components")) {
        if (!j["components"].is_array()) throw ConfigError("simulation.init.components: expected an array");
        law.components.clear();
        for (const json& c : j["components"]) {
            const std::string w = "simulation.init.components[]";
            check_keys(c, {"weight", "mean", "sigma"}, w);
            InitialLaw::Component comp;
            read(c, "weight", comp.weight, w);
            read(c, "sigma", comp.sigma, w);
            if (c.contains("mean")) comp.mean = read_vec3(c["mean"], w + ".mean");
            law.components.push_back(comp);
        }
    }
    return law;
}

void parse_simulation(const json& j, SimConfig& sim)
{
    const std::string w = "simulation";
    check_keys(j, {"N", "T", "replicas", "checkpoints", "init"}, w);
    read_int(j, "N", sim.N, w);
    read(j, "T", sim.T, w);
    read_int(j, "replicas", sim.replicas, w);
    read(j, "checkpoints", sim.checkpoints, w);
    if (j.contains("init")) sim.init = parse_init(j["init"]);
}

void parse_diagnostics(const json& j, RecordOptions& d)
{
    const std::string w = "diagnostics";
    check_keys(j, {"moments", "entropy", "fisher", "pairs", "k_nn"}, w);
    read(j, "moments", d.moment_orders, w);
    read(j, "entropy", d.entropy, w);
    read(j, "fisher", d.fisher, w);
    read(j, "pairs", d.pairs, w);
    read_int(j, "k_nn", d.k_nn, w);
    if (d.k_nn < 1) throw ConfigError("diagnostics.k_nn must be at least 1");
    for (double o : d.moment_orders)
        if (!(o >= 0.0)) throw ConfigError("diagnostics.moments: orders must be non-negative");
}

void parse_inequalities(const json& j, InequalityBlock& b)
{
    const std::string w = "inequalities";
    check_keys(j, {"s_values", "family_size", "seed", "band_limit", "fine_band_limit"}, w);
    read(j, "s_values", b.s_values, w);
    read_int(j, "family_size", b.family_size, w);
    read_int(j, "seed", b.seed, w);
    read_int(j, "band_limit", b.band_limit, w);
    read_int(j, "fine_band_limit", b.fine_band_limit, w);
}

void validate_inequalities(const InequalityBlock& b)
{
    if (b.family_size < 1) throw ConfigError("inequalities.family_size must be at least 1");
    if (b.s_values.empty()) throw ConfigError("inequalities.s_values is empty");
    for (double s : b.s_values)
        if (!(s > 0.0 && s < 1.0)) throw ConfigError("inequalities.s_values must lie in (0, 1)");
    if (b.band_limit < 4) throw ConfigError("inequalities.band_limit must be at least 4");
    if (b.fine_band_limit < b.band_limit)
        throw ConfigError("inequalities.fine_band_limit must be at least band_limit");
}

json kernel_json(const KernelSpec& k)
{
    return {{"type", k.type},   {"q", k.q},           {"s", k.s},
            {"gamma", k.gamma}, {"k", k.k},           {"lambda", k.lambda},
            {"c_b", k.c_b},     {"maxwell_b", k.maxwell_b}, {"omega_table_path", k.omega_table_path}};
}

std::filesystem::path prepare_dir(const std::string& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw OutputError("cannot create output directory " + dir + ": " + ec.message());
    return dir;
}

void write_text(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream f(p, std::ios::binary);
    if (!f) throw OutputError("cannot open " + p.string() + " for writing");
    f << text;
    if (!f) throw OutputError("write failed on " + p.string());
}

class CsvWriter {
  public:
    void row(const std::vector<std::string>& fields)
    {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) os_ << ',';
            os_ << csv_field(fields[i]);
        }
        os_ << "\r\n";
    }
    std::string str() const { return os_.str(); }

  private:
    std::ostringstream os_;
};

std::string u64(std::uint64_t x) { return std::to_string(x); }

json estimate_json(const Estimate& e)
{
    json j{{"value", e.value}, {"se", e.se}};
    if (!std::isfinite(e.value)) j["value"] = nullptr;
    return j;
}

const Estimate* find(const DiagnosticsRecord& r, const std::string& name)
{
    for (const auto& [k, e] : r.quantities)
        if (k == name) return &e;
    return nullptr;
}

std::vector<Estimate> series(const std::vector<DiagnosticsRecord>& recs, const std::string& name)
{
    std::vector<Estimate> out;
    for (const auto& r : recs)
        if (const Estimate* e = find(r, name)) out.push_back(*e);
    return out;
}

json monotone_json(const MonotoneCheck& m, const char* direction)
{
    return {{"direction", direction}, {"holds", m.holds}, {"worst_se_units", m.worst}};
}

}  // namespace

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string format_double(double x)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

RunConfig parse_config(const json& j)
{
    check_keys(j, {"command", "seed", "kernel", "simulation", "diagnostics", "inequalities"}, "config");
    RunConfig c;
    read(j, "command", c.command, "config");
    if (!c.command.empty() && !kCommands.count(c.command))
        throw ConfigError("config.command: unknown command '" + c.command + "'");
    read_int(j, "seed", c.seed, "config");
    if (j.contains("kernel")) c.sim.kernel = parse_kernel(j["kernel"]);
    if (j.contains("simulation")) parse_simulation(j["simulation"], c.sim);
    if (j.contains("diagnostics")) parse_diagnostics(j["diagnostics"], c.diagnostics);
    if (j.contains("inequalities")) parse_inequalities(j["inequalities"], c.inequalities);
    c.sim.seed = c.seed;
    return c;
}

json to_json(const RunConfig& c)
{
    json comps = json::array();
    for (const auto& m : c.sim.init.components)
        comps.push_back({{"weight", m.weight}, {"mean", {m.mean.x, m.mean.y, m.mean.z}}, {"sigma", m.sigma}});
    json init{{"type", c.sim.init.type}, {"components", comps}};
    if (!c.sim.init.path.empty()) init["path"] = c.sim.init.path;
    return {
        {"command", c.command},
        {"seed", c.seed},
        {"kernel", kernel_json(c.sim.kernel)},
        {"simulation",
         {{"N", c.sim.N}, {"T", c.sim.T}, {"replicas", c.sim.replicas}, {"checkpoints", c.sim.checkpoints},
          {"init", init}}},
        {"diagnostics",
         {{"moments", c.diagnostics.moment_orders},
          {"entropy", c.diagnostics.entropy},
          {"fisher", c.diagnostics.fisher},
          {"pairs", c.diagnostics.pairs},
          {"k_nn", c.diagnostics.k_nn}}},
        {"inequalities",
         {{"s_values", c.inequalities.s_values},
          {"family_size", c.inequalities.family_size},
          {"seed", c.inequalities.seed},
          {"band_limit", c.inequalities.band_limit},
          {"fine_band_limit", c.inequalities.fine_band_limit}}},
    };
}

int cmd_simulate(const RunConfig& cfg, const CliOptions& opt, std::ostream& log)
{
    validate(cfg.sim);
    const auto kernel = RegularizedKernel::build(cfg.sim.kernel);
    const auto dir = prepare_dir(opt.out_dir);
    write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
    if (opt.verbose)
        std::cerr << "simulate: N = " << cfg.sim.N << ", replicas = " << cfg.sim.replicas << ", T = " << cfg.sim.T
            << ", proposal rate " << proposal_rate(cfg.sim.N, *kernel) << "\n";

    EnsembleResult ens;
    try {
        ens = run_ensemble(cfg.sim, *kernel, opt.threads);
    } catch (const InvariantError& e) {
        const json summary{{"status", "invariant_failure"}, {"message", e.what()}};
        write_text(dir / "summary.json", summary.dump(2) + "\n");
        log << "invariant failure: " << e.what() << "\n";
        return kExitInvariant;
    }
    const std::vector<DiagnosticsRecord> recs = checkpoint_records(ens, cfg.diagnostics);

    CsvWriter cp;
    cp.row({"t", "quantity", "value", "se"});
    for (const auto& r : recs)
        for (const auto& [name, e] : r.quantities)
            cp.row({format_double(r.t), name, format_double(e.value), format_double(e.se)});
    write_text(dir / "checkpoints.csv", cp.str());

    CsvWriter rp;
    rp.row({"t", "replica", "proposals", "collisions", "degenerate", "momentum_drift", "energy_drift"});
    for (std::size_t c = 0; c < ens.times.size(); ++c)
        for (std::size_t r = 0; r < ens.snapshots[c].size(); ++r) {
            const ReplicaSnapshot& s = ens.snapshots[c][r];
            rp.row({format_double(ens.times[c]), std::to_string(r), u64(s.proposals), u64(s.collisions),
                    u64(s.degenerate), format_double(s.residual.momentum), format_double(s.residual.energy)});
        }
    write_text(dir / "replicas.csv", rp.str());

    json monitors = json::object();
    const auto h = series(recs, "entropy");
    const auto I = series(recs, "fisher");
    // h = -int f log f, so the entropy int f log f is non-increasing iff h is
    // non-decreasing.
    if (h.size() >= 2) monitors["entropy"] = monotone_json(non_decreasing(h), "h non-decreasing");
    if (I.size() >= 2) monitors["fisher"] = monotone_json(non_increasing(I), "non-increasing");
    if (!I.empty() && cfg.diagnostics.pairs) {
        bool holds = true;
        double worst = -INFINITY;
        for (const auto& r : recs) {
            const Estimate* p = find(r, "pair_inv_sq");
            const Estimate* f = find(r, "fisher");
            if (!p || !f) continue;
            const double cap = f->value + 3.0 * f->se;
            worst = std::max(worst, p->value / cap);
            if (p->value > cap) holds = false;
        }
        monitors["pair_closeness_below_fisher"] = {{"holds", holds}, {"worst_ratio", worst}};
    }
    double mom = 0.0, en = 0.0;
    std::uint64_t collisions = 0, proposals = 0, degenerate = 0;
    for (const auto& s : ens.snapshots.back()) {
        mom = std::max(mom, s.residual.momentum);
        en = std::max(en, s.residual.energy);
        collisions += s.collisions;
        proposals += s.proposals;
        degenerate += s.degenerate;
    }
    json final_rec = json::object();
    for (const auto& [name, e] : recs.back().quantities) final_rec[name] = estimate_json(e);
    const json summary{{"status", "ok"},
                       {"N", cfg.sim.N},
                       {"replicas", cfg.sim.replicas},
                       {"T", cfg.sim.T},
                       {"proposal_rate", ens.proposal_rate},
                       {"proposals", proposals},
                       {"collisions", collisions},
                       {"degenerate", degenerate},
                       {"max_momentum_drift", mom},
                       {"max_energy_drift", en},
                       {"final", final_rec},
                       {"monitors", monitors}};
    write_text(dir / "summary.json", summary.dump(2) + "\n");

    log << "simulated " << cfg.sim.replicas << " x " << cfg.sim.N << " particles to T = " << cfg.sim.T << ": "
        << collisions << " collisions, drift momentum " << mom << " energy " << en << "\n";
    for (const auto& [name, m] : monitors.items())
        log << "  monitor " << name << ": " << (m["holds"].get<bool>() ? "holds" : "violated") << "\n";
    log << "artifacts in " << dir.string() << "\n";
    return kExitOk;
}

int cmd_inequalities(const RunConfig& cfg, const CliOptions& opt, std::ostream& log)
{
    const InequalityBlock& b = cfg.inequalities;
    validate_inequalities(b);
    const auto dir = prepare_dir(opt.out_dir);
    write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");

    const FunctionalContext ctx(b.band_limit, b.fine_band_limit);
    const std::vector<TestFunction> family = make_family(b.family_size, b.seed);
    SuiteOptions so;
    so.s_values = b.s_values;
    if (std::find(b.s_values.begin(), b.s_values.end(), so.js_ratio_s) == b.s_values.end())
        so.js_ratio_s = b.s_values[b.s_values.size() / 2];
    so.threads = opt.threads;

    CsvWriter csv;
    csv.row({"name", "member", "seed", "s", "lhs", "rhs", "ratio", "margin", "degenerate", "pass"});
    const SuiteSummary sum = inequality_suite(ctx, family, so, [&](const FunctionalReport& r) {
        csv.row({r.name, r.member, std::to_string(r.seed), format_double(r.s), format_double(r.lhs),
                 format_double(r.rhs), format_double(r.ratio), format_double(r.margin), r.degenerate ? "1" : "0",
                 r.pass ? "1" : "0"});
    });
    write_text(dir / "reports.csv", csv.str());

    json mins = json::object();
    for (const auto& [key, v] : sum.min_ratio) mins[key.first][format_double(key.second)] = v;
    const json summary{{"all_pass", sum.all_pass},
                       {"family_size", b.family_size},
                       {"band_limit", b.band_limit},
                       {"fine_band_limit", b.fine_band_limit},
                       {"thresholds",
                        {{"K_over_H2", so.c0 - so.c0_slack},
                         {"H2_over_J", so.c1 - so.c1_slack},
                         {"dissipation_over_Ks_chain", 1.0 - so.chain_slack},
                         {"dissipation_over_H1s", 0.0},
                         {"H1s_plus_L1_over_Js", 0.0}}},
                       {"min_ratio", mins}};
    write_text(dir / "summary.json", summary.dump(2) + "\n");

    for (const auto& [key, v] : sum.min_ratio)
        log << "  min " << key.first << " (s = " << key.second << "): " << v << "\n";
    log << "inequality suite: " << (sum.all_pass ? "all assertions hold" : "assertion failed") << "\n";
    return sum.all_pass ? kExitOk : kExitInvariant;
}

int cmd_kernel_info(const RunConfig& cfg, const CliOptions& opt, std::ostream& log)
{
    const auto kernel = RegularizedKernel::build(cfg.sim.kernel);
    json j{{"type", cfg.sim.kernel.type},
           {"k", kernel->k()},
           {"gamma", kernel->gamma()},
           {"s", kernel->s()},
           {"bbar", kernel->base().bbar},
           {"bbar_k", kernel->bbar_k()},
           {"sup_bk", kernel->sup_bk()},
           {"l1_norm_bk", kernel->l1_norm()},
           {"eps_k", kernel->eps_k()},
           {"rho_k", kernel->rho_k()},
           {"u_k", kernel->u_k()},
           {"alpha_bound", kernel->alpha_bound()},
           {"lambda_bound", kernel->lambda_bound()},
           {"lambda", cfg.sim.kernel.lambda},
           {"h1_margin", kernel->margin()}};
    if (cfg.sim.kernel.type == "power_law") j["moment_threshold"] = power_law(cfg.sim.kernel.q).moment_threshold;
    const auto dir = prepare_dir(opt.out_dir);
    write_text(dir / "kernel_info.json", j.dump(2) + "\n");
    for (const auto& [k, v] : j.items()) log << k << " = " << v.dump() << "\n";
    return kExitOk;
}

int cmd_sphere_selftest(const RunConfig& cfg, const CliOptions& opt, std::ostream& log)
{
    const SphereSelftest t = sphere_selftest(32, static_cast<unsigned>(cfg.seed + 1));
    const json j{{"L", t.L},
                 {"round_trip", t.round_trip},
                 {"parseval", t.parseval},
                 {"heat_mass", t.heat_mass},
                 {"kernel_vs_spectral", t.kernel_vs_spectral},
                 {"pass", t.pass()}};
    const auto dir = prepare_dir(opt.out_dir);
    write_text(dir / "selftest.json", j.dump(2) + "\n");
    for (const auto& [k, v] : j.items()) log << k << " = " << v.dump() << "\n";
    return t.pass() ? kExitOk : kExitInvariant;
}

int run_cli(int argc, char** argv)
{
    CLI::App app{"Kac particle system and spherical functional toolkit"};
    std::string command, config_path;
    CliOptions opt;
    std::uint64_t seed = 0;
    int threads = 0;
    app.add_option("command", command, "simulate | inequalities | kernel-info | sphere-selftest");
    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--out", opt.out_dir, "output directory");
    auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
    auto* threads_opt = app.add_option("--threads", threads, "worker thread cap (default: KK_THREADS or 1)");
    app.add_flag("--verbose", opt.verbose, "progress on stderr");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    std::ostream& log = std::cout;
    try {
        json j = json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) {
                std::cerr << "error: cannot read config " << config_path << "\n";
                return kExitIO;
            }
            try {
                j = json::parse(in);
            } catch (const json::exception& e) {
                throw ConfigError(std::string("config is not valid JSON: ") + e.what());
            }
        }
        RunConfig cfg = parse_config(j);
        if (!command.empty()) {
            if (!kCommands.count(command)) throw ConfigError("unknown command '" + command + "'");
            cfg.command = command;
        }
        if (cfg.command.empty()) throw ConfigError("no command given");
        if (*seed_opt) {
            cfg.seed = seed;
            cfg.sim.seed = seed;
        }
        if (*threads_opt) {
            opt.threads = threads;
        } else if (const char* env = std::getenv("KK_THREADS")) {
            int v = 0;
            const auto [p, ec] = std::from_chars(env, env + std::strlen(env), v);
            if (ec != std::errc{} || *p != '\0') throw ConfigError("KK_THREADS must be an integer");
            opt.threads = v;
        }
        if (opt.threads < 1) throw ConfigError("thread count must be at least 1");

        if (cfg.command == "simulate") return cmd_simulate(cfg, opt, log);
        if (cfg.command == "inequalities") return cmd_inequalities(cfg, opt, log);
        if (cfg.command == "kernel-info") return cmd_kernel_info(cfg, opt, log);
        return cmd_sphere_selftest(cfg, opt, log);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const SimConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const KernelError& e) {
        std::cerr << "kernel error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const FunctionalError& e) {
        std::cerr << "invariant failure: " << e.what() << "\n";
        return kExitInvariant;
    } catch (const InvariantError& e) {
        std::cerr << "invariant failure: " << e.what() << "\n";
        return kExitInvariant;
    } catch (const SampleFileError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIO;
    } catch (const OutputError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIO;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvariant;
    }
}

}  // namespace kaclab
