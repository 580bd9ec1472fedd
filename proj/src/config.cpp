#include "heg/config.hpp"

#include "heg/errors.hpp"
#include "heg/sr.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

extern char** environ;

namespace heg {

namespace {

using Setter = std::function<void(ExperimentConfig&, const YAML::Node&)>;

struct Field {
    std::string section;  // empty for top-level keys
    std::string key;
    Setter set;
};

template <class T>
T as(const YAML::Node& n) {
    return n.as<T>();
}

OrbitalKind parse_orbitals(const YAML::Node& n) {
    const auto s = n.as<std::string>();
    if (s == "plane_wave") return OrbitalKind::PlaneWave;
    if (s == "gaussian_bcc") return OrbitalKind::GaussianBcc;
    throw YAML::TypedBadConversion<OrbitalKind>(n.Mark());
}

std::optional<double> optional_double(const YAML::Node& n) {
    if (n.IsNull()) return std::nullopt;
    return n.as<double>();
}

DmcConfig& dmc(ExperimentConfig& c) {
    if (!c.dmc) c.dmc.emplace();
    return *c.dmc;
}

const std::vector<Field>& schema() {
    static const std::vector<Field> fields = [] {
        std::vector<Field> f;
        auto add = [&](std::string section, std::string key, Setter s) {
            f.push_back({std::move(section), std::move(key), std::move(s)});
        };
        add("system", "particles", [](auto& c, auto& n) { c.system.particles = as<int>(n); });
        add("system", "polarization", [](auto& c, auto& n) { c.system.polarization = as<double>(n); });
        add("system", "rs", [](auto& c, auto& n) { c.system.rs = as<double>(n); });
        add("system", "orbitals", [](auto& c, auto& n) { c.system.orbitals = parse_orbitals(n); });
        add("system", "k_total", [](auto& c, auto& n) {
            const auto v = n.template as<std::vector<int>>();
            if (v.size() != 3) throw YAML::TypedBadConversion<IVec3>(n.Mark());
            c.system.k_total = {v[0], v[1], v[2]};
        });
        add("system", "interaction", [](auto& c, auto& n) { c.system.interaction = as<bool>(n); });
        add("system", "gaussian_alpha", [](auto& c, auto& n) { c.system.gaussian_alpha = optional_double(n); });
        add("system", "image_cutoff", [](auto& c, auto& n) { c.system.image_cutoff = as<int>(n); });
        add("system", "ewald_tolerance", [](auto& c, auto& n) { c.system.ewald_tolerance = as<double>(n); });

        add("network", "iterations", [](auto& c, auto& n) { c.network.shape.iterations = as<int>(n); });
        add("network", "embedding", [](auto& c, auto& n) { c.network.shape.embedding = as<int>(n); });
        add("network", "node_hidden", [](auto& c, auto& n) { c.network.shape.node_hidden = as<int>(n); });
        add("network", "edge_hidden", [](auto& c, auto& n) { c.network.shape.edge_hidden = as<int>(n); });
        add("network", "mlp_width", [](auto& c, auto& n) { c.network.shape.mlp_width = as<int>(n); });
        add("network", "jastrow_width", [](auto& c, auto& n) { c.network.shape.jastrow_width = as<int>(n); });
        add("network", "output_scale", [](auto& c, auto& n) { c.network.output_scale = as<double>(n); });
        add("network", "seed", [](auto& c, auto& n) { c.network.seed = as<std::uint64_t>(n); });

        add("sampler", "walkers", [](auto& c, auto& n) { c.sampler.walkers = as<int>(n); });
        add("sampler", "burn_in", [](auto& c, auto& n) { c.sampler.burn_in = as<int>(n); });
        add("sampler", "sweeps_per_sample", [](auto& c, auto& n) { c.sampler.sweeps_per_sample = as<int>(n); });
        add("sampler", "step_size", [](auto& c, auto& n) { c.sampler.step_size = optional_double(n); });
        add("sampler", "target_acceptance", [](auto& c, auto& n) { c.sampler.target_acceptance = as<double>(n); });
        add("sampler", "all_particle", [](auto& c, auto& n) { c.sampler.all_particle = as<bool>(n); });

        add("optimizer", "steps", [](auto& c, auto& n) { c.optimizer.steps = as<int>(n); });
        add("optimizer", "learning_rate", [](auto& c, auto& n) { c.optimizer.learning_rate = optional_double(n); });
        add("optimizer", "diag_shift", [](auto& c, auto& n) { c.optimizer.diag_shift = as<double>(n); });
        add("optimizer", "cg_tolerance", [](auto& c, auto& n) { c.optimizer.cg_tolerance = as<double>(n); });
        add("optimizer", "cg_max_iterations", [](auto& c, auto& n) { c.optimizer.cg_max_iterations = as<int>(n); });
        add("optimizer", "max_update_norm", [](auto& c, auto& n) { c.optimizer.max_update_norm = as<double>(n); });
        add("optimizer", "checkpoint_every", [](auto& c, auto& n) { c.optimizer.checkpoint_every = as<int>(n); });

        add("observables", "sweeps", [](auto& c, auto& n) { c.observables.sweeps = as<int>(n); });
        add("observables", "g2_bins", [](auto& c, auto& n) { c.observables.g2_bins = as<int>(n); });
        add("observables", "sk_n2_max", [](auto& c, auto& n) { c.observables.sk_n2_max = as<int>(n); });
        add("observables", "sk_raw", [](auto& c, auto& n) { c.observables.sk_raw = as<bool>(n); });

        add("dmc", "walkers", [](auto& c, auto& n) { dmc(c).walkers = as<int>(n); });
        add("dmc", "time_step", [](auto& c, auto& n) { dmc(c).time_step = optional_double(n); });
        add("dmc", "equilibration", [](auto& c, auto& n) { dmc(c).equilibration = as<int>(n); });
        add("dmc", "steps", [](auto& c, auto& n) { dmc(c).steps = as<int>(n); });
        add("dmc", "jastrow_terms", [](auto& c, auto& n) { dmc(c).jastrow_terms = as<int>(n); });
        add("dmc", "jastrow_iterations", [](auto& c, auto& n) { dmc(c).jastrow_iterations = as<int>(n); });
        add("dmc", "jastrow_walkers", [](auto& c, auto& n) { dmc(c).jastrow_walkers = as<int>(n); });
        add("dmc", "jastrow_sweeps", [](auto& c, auto& n) { dmc(c).jastrow_sweeps = as<int>(n); });
        add("dmc", "jastrow_learning_rate", [](auto& c, auto& n) { dmc(c).jastrow_learning_rate = as<double>(n); });
        add("dmc", "vmc_sweeps", [](auto& c, auto& n) { dmc(c).vmc_sweeps = as<int>(n); });

        add("", "output", [](auto& c, auto& n) { c.output = as<std::string>(n); });
        add("", "seed", [](auto& c, auto& n) { c.seed = as<std::uint64_t>(n); });
        add("", "threads", [](auto& c, auto& n) { c.threads = as<int>(n); });
        return f;
    }();
    return fields;
}

const Field* find_field(const std::string& section, const std::string& key) {
    for (const auto& f : schema())
        if (f.section == section && f.key == key) return &f;
    return nullptr;
}

bool is_section(const std::string& name) {
    for (const auto& f : schema())
        if (f.section == name) return true;
    return false;
}

std::string dotted(const std::string& section, const std::string& key) {
    return section.empty() ? key : section + "." + key;
}

std::string at_line(const YAML::Mark& m) {
    return m.line >= 0 ? "line " + std::to_string(m.line + 1) + ": " : "";
}

std::string env_name(const std::string& section, const std::string& key) {
    std::string s = "HEG_" + (section.empty() ? key : section + "_" + key);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::toupper(ch); });
    return s;
}

void apply(ExperimentConfig& cfg, const Field& f, const YAML::Node& value, const std::string& where,
           std::vector<std::string>& errors) {
    try {
        f.set(cfg, value);
    } catch (const YAML::Exception&) {
        errors.push_back(where + dotted(f.section, f.key) + ": invalid value '" +
                         (value.IsScalar() ? value.Scalar() : std::string("<non-scalar>")) + "'");
    }
}

void validate(ExperimentConfig& c, std::vector<std::string>& errors) {
    auto require = [&](bool ok, const std::string& msg) {
        if (!ok) errors.push_back(msg);
    };
    const auto& s = c.system;
    require(s.particles >= 1, "system.particles is required and must be >= 1");
    require(s.polarization >= 0.0 && s.polarization <= 1.0, "system.polarization is required and must lie in [0, 1]");
    require(s.rs > 0.0 && std::isfinite(s.rs), "system.rs is required and must be positive");
    if (s.particles >= 1 && s.polarization >= 0.0 && s.polarization <= 1.0) {
        const double up = 0.5 * s.particles * (1.0 + s.polarization);
        require(std::abs(up - std::round(up)) < 1e-9,
                "system.polarization " + std::to_string(s.polarization) + " does not give an integer spin-up count");
    }
    if (s.orbitals == OrbitalKind::GaussianBcc && s.particles >= 1) {
        const int m = static_cast<int>(std::lround(std::cbrt(s.particles / 2.0)));
        require(2 * m * m * m == s.particles, "gaussian_bcc orbitals need particles = 2 m^3 (2, 16, 54, 128, ...)");
        require(!s.gaussian_alpha || *s.gaussian_alpha > 0.0, "system.gaussian_alpha must be positive");
        require(s.image_cutoff >= 0, "system.image_cutoff must be >= 0");
    }
    require(s.ewald_tolerance > 0.0 && s.ewald_tolerance <= 1e-4, "system.ewald_tolerance must lie in (0, 1e-4]");
    const auto& n = c.network.shape;
    require(n.iterations >= 0, "network.iterations must be >= 0");
    require(n.embedding >= 1 && n.node_hidden >= 1 && n.edge_hidden >= 1 && n.mlp_width >= 1 && n.jastrow_width >= 1,
            "network widths must be >= 1");
    require(c.network.output_scale >= 0.0, "network.output_scale must be >= 0");
    const auto& sm = c.sampler;
    require(sm.walkers >= 1, "sampler.walkers must be >= 1");
    require(sm.burn_in >= 0, "sampler.burn_in must be >= 0");
    require(sm.sweeps_per_sample >= 1, "sampler.sweeps_per_sample must be >= 1");
    require(!sm.step_size || *sm.step_size > 0.0, "sampler.step_size must be positive");
    require(sm.target_acceptance > 0.0 && sm.target_acceptance < 1.0, "sampler.target_acceptance must lie in (0, 1)");
    const auto& o = c.optimizer;
    require(o.steps >= 0, "optimizer.steps must be >= 0");
    require(!o.learning_rate || *o.learning_rate > 0.0, "optimizer.learning_rate must be positive");
    require(o.diag_shift > 0.0, "optimizer.diag_shift must be positive");
    require(o.cg_tolerance > 0.0, "optimizer.cg_tolerance must be positive");
    require(o.cg_max_iterations >= 1, "optimizer.cg_max_iterations must be >= 1");
    require(o.max_update_norm >= 0.0, "optimizer.max_update_norm must be >= 0");
    require(o.checkpoint_every >= 1, "optimizer.checkpoint_every must be >= 1");
    const auto& ob = c.observables;
    require(ob.sweeps >= 0, "observables.sweeps must be >= 0");
    require(ob.g2_bins >= 1, "observables.g2_bins must be >= 1");
    require(ob.sk_n2_max >= 1, "observables.sk_n2_max must be >= 1");
    if (c.dmc) {
        const auto& d = *c.dmc;
        require(d.walkers >= 1 && d.steps >= 1 && d.equilibration >= 0, "dmc walker and step counts must be positive");
        require(!d.time_step || *d.time_step > 0.0, "dmc.time_step must be positive");
        require(d.jastrow_terms >= 1, "dmc.jastrow_terms must be >= 1");
        require(d.jastrow_iterations >= 0 && d.jastrow_walkers >= 1 && d.jastrow_sweeps >= 2 && d.vmc_sweeps >= 2,
                "dmc Jastrow optimization and VMC budgets must be positive (sweeps >= 2)");
        require(d.jastrow_learning_rate > 0.0, "dmc.jastrow_learning_rate must be positive");
        require(s.orbitals == OrbitalKind::PlaneWave, "dmc uses a plane-wave Slater-Jastrow trial");
    }
    require(c.threads >= 1, "threads must be >= 1");
    if (errors.empty() && !o.learning_rate) {
        bool exact = true;
        const double eta = learning_rate_for(s.rs, &exact);
        if (!exact) {
            std::ostringstream w;
            w << "r_s = " << s.rs << " is not in the learning-rate table; using eta = " << eta
              << " from the nearest tabulated density";
            c.warnings.push_back(w.str());
        }
    }
}

}  // namespace

int SystemConfig::n_up() const { return static_cast<int>(std::lround(0.5 * particles * (1.0 + polarization))); }

double ExperimentConfig::learning_rate() const {
    return optimizer.learning_rate ? *optimizer.learning_rate : learning_rate_for(system.rs);
}

ExperimentConfig parse_config(const std::string& text, const std::map<std::string, std::string>& env) {
    ExperimentConfig cfg;
    std::vector<std::string> errors;
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(at_line(e.mark) + "cannot parse configuration: " + e.msg);
    }
    if (root && !root.IsNull()) {
        if (!root.IsMap()) throw ConfigError("configuration must be a mapping of sections");
        for (const auto& top : root) {
            const auto name = top.first.as<std::string>();
            const auto where = at_line(top.first.Mark());
            if (is_section(name)) {
                if (name == "dmc") dmc(cfg);
                if (top.second.IsNull()) continue;
                if (!top.second.IsMap()) {
                    errors.push_back(where + "section '" + name + "' must be a mapping");
                    continue;
                }
                for (const auto& kv : top.second) {
                    const auto key = kv.first.as<std::string>();
                    const Field* f = find_field(name, key);
                    if (!f)
                        errors.push_back(at_line(kv.first.Mark()) + "unknown key '" + name + "." + key + "'");
                    else
                        apply(cfg, *f, kv.second, at_line(kv.second.Mark()), errors);
                }
            } else if (const Field* f = find_field("", name)) {
                apply(cfg, *f, top.second, at_line(top.second.Mark()), errors);
            } else {
                errors.push_back(where + "unknown key '" + name + "'");
            }
        }
    }
    for (const auto& f : schema()) {
        const auto it = env.find(env_name(f.section, f.key));
        if (it == env.end()) continue;
        YAML::Node value;
        try {
            value = YAML::Load(it->second);
        } catch (const YAML::Exception&) {
            errors.push_back("environment " + it->first + ": cannot parse '" + it->second + "'");
            continue;
        }
        apply(cfg, f, value, "environment " + it->first + ": ", errors);
    }
    for (const auto& [name, value] : env) {
        bool known = false;
        for (const auto& f : schema()) known = known || env_name(f.section, f.key) == name;
        if (!known) errors.push_back("environment: unknown override " + name);
    }
    validate(cfg, errors);
    if (!errors.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::map<std::string, std::string>& env) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), env);
}

std::map<std::string, std::string> override_environment() {
    std::map<std::string, std::string> out;
    for (char** e = environ; e && *e; ++e) {
        const std::string entry(*e);
        if (entry.rfind("HEG_", 0) != 0) continue;
        const auto eq = entry.find('=');
        if (eq == std::string::npos) continue;
        out[entry.substr(0, eq)] = entry.substr(eq + 1);
    }
    return out;
}

std::string dump_config(const ExperimentConfig& c) {
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    auto opt = [&](const std::optional<double>& v) {
        if (v)
            out << *v;
        else
            out << YAML::Null;
    };
    out << YAML::BeginMap;
    out << YAML::Key << "system" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "particles" << YAML::Value << c.system.particles;
    out << YAML::Key << "polarization" << YAML::Value << c.system.polarization;
    out << YAML::Key << "rs" << YAML::Value << c.system.rs;
    out << YAML::Key << "orbitals" << YAML::Value
        << (c.system.orbitals == OrbitalKind::PlaneWave ? "plane_wave" : "gaussian_bcc");
    out << YAML::Key << "k_total" << YAML::Value << YAML::Flow << YAML::BeginSeq << c.system.k_total[0]
        << c.system.k_total[1] << c.system.k_total[2] << YAML::EndSeq;
    out << YAML::Key << "interaction" << YAML::Value << c.system.interaction;
    out << YAML::Key << "gaussian_alpha" << YAML::Value;
    opt(c.system.gaussian_alpha);
    out << YAML::Key << "image_cutoff" << YAML::Value << c.system.image_cutoff;
    out << YAML::Key << "ewald_tolerance" << YAML::Value << c.system.ewald_tolerance;
    out << YAML::EndMap;

    const auto& n = c.network;
    out << YAML::Key << "network" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "iterations" << YAML::Value << n.shape.iterations;
    out << YAML::Key << "embedding" << YAML::Value << n.shape.embedding;
    out << YAML::Key << "node_hidden" << YAML::Value << n.shape.node_hidden;
    out << YAML::Key << "edge_hidden" << YAML::Value << n.shape.edge_hidden;
    out << YAML::Key << "mlp_width" << YAML::Value << n.shape.mlp_width;
    out << YAML::Key << "jastrow_width" << YAML::Value << n.shape.jastrow_width;
    out << YAML::Key << "output_scale" << YAML::Value << n.output_scale;
    out << YAML::Key << "seed" << YAML::Value << n.seed;
    out << YAML::EndMap;

    const auto& s = c.sampler;
    out << YAML::Key << "sampler" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "walkers" << YAML::Value << s.walkers;
    out << YAML::Key << "burn_in" << YAML::Value << s.burn_in;
    out << YAML::Key << "sweeps_per_sample" << YAML::Value << s.sweeps_per_sample;
    out << YAML::Key << "step_size" << YAML::Value;
    opt(s.step_size);
    out << YAML::Key << "target_acceptance" << YAML::Value << s.target_acceptance;
    out << YAML::Key << "all_particle" << YAML::Value << s.all_particle;
    out << YAML::EndMap;

    const auto& o = c.optimizer;
    out << YAML::Key << "optimizer" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "steps" << YAML::Value << o.steps;
    out << YAML::Key << "learning_rate" << YAML::Value << c.learning_rate();
    out << YAML::Key << "diag_shift" << YAML::Value << o.diag_shift;
    out << YAML::Key << "cg_tolerance" << YAML::Value << o.cg_tolerance;
    out << YAML::Key << "cg_max_iterations" << YAML::Value << o.cg_max_iterations;
    out << YAML::Key << "max_update_norm" << YAML::Value << o.max_update_norm;
    out << YAML::Key << "checkpoint_every" << YAML::Value << o.checkpoint_every;
    out << YAML::EndMap;

    const auto& ob = c.observables;
    out << YAML::Key << "observables" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "sweeps" << YAML::Value << ob.sweeps;
    out << YAML::Key << "g2_bins" << YAML::Value << ob.g2_bins;
    out << YAML::Key << "sk_n2_max" << YAML::Value << ob.sk_n2_max;
    out << YAML::Key << "sk_raw" << YAML::Value << ob.sk_raw;
    out << YAML::EndMap;

    if (c.dmc) {
        const auto& d = *c.dmc;
        out << YAML::Key << "dmc" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "walkers" << YAML::Value << d.walkers;
        out << YAML::Key << "time_step" << YAML::Value << (d.time_step ? *d.time_step : 0.01 * c.system.rs * c.system.rs);
        out << YAML::Key << "equilibration" << YAML::Value << d.equilibration;
        out << YAML::Key << "steps" << YAML::Value << d.steps;
        out << YAML::Key << "jastrow_terms" << YAML::Value << d.jastrow_terms;
        out << YAML::Key << "jastrow_iterations" << YAML::Value << d.jastrow_iterations;
        out << YAML::Key << "jastrow_walkers" << YAML::Value << d.jastrow_walkers;
        out << YAML::Key << "jastrow_sweeps" << YAML::Value << d.jastrow_sweeps;
        out << YAML::Key << "jastrow_learning_rate" << YAML::Value << d.jastrow_learning_rate;
        out << YAML::Key << "vmc_sweeps" << YAML::Value << d.vmc_sweeps;
        out << YAML::EndMap;
    }
    out << YAML::Key << "output" << YAML::Value << c.output;
    out << YAML::Key << "seed" << YAML::Value << c.seed;
    out << YAML::Key << "threads" << YAML::Value << c.threads;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

std::uint64_t config_hash(const ExperimentConfig& config) {
    ExperimentConfig c = config;
    // run-length, output and parallelism settings do not change the state being optimized
    c.output.clear();
    c.threads = 1;
    c.optimizer.steps = 0;
    c.optimizer.checkpoint_every = 1;
    c.observables = {};
    c.dmc.reset();
    const std::string text = dump_config(c);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace heg
