#include "run_config.hpp"

#include <algorithm>
#include <cctype>

#include "invmm/csvio.hpp"
#include "invmm/errors.hpp"
#include "invmm/schedule.hpp"

extern char** environ;

namespace invmm::cli {

using nlohmann::json;

namespace {

const json kEmpty = json::object();

json parse_env_value(const std::string& raw) {
    json v = json::parse(raw, nullptr, false);
    if (v.is_discarded()) return json(raw);
    return v;
}

} // namespace

void apply_env_overrides(json& root) {
    constexpr const char* prefix = "INVMM_";
    for (char** env = environ; *env != nullptr; ++env) {
        const std::string entry(*env);
        if (entry.rfind(prefix, 0) != 0) continue;
        const auto eq = entry.find('=');
        if (eq == std::string::npos) continue;
        std::string key = entry.substr(6, eq - 6);
        const std::string value = entry.substr(eq + 1);
        std::transform(key.begin(), key.end(), key.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        // Path segments are separated by double underscores.
        json* node = &root;
        std::size_t pos = 0;
        while (true) {
            const std::size_t sep = key.find("__", pos);
            const std::string seg = key.substr(pos, sep == std::string::npos ? sep : sep - pos);
            if (seg.empty()) break;
            if (sep == std::string::npos) {
                (*node)[seg] = parse_env_value(value);
                break;
            }
            if (!node->contains(seg) || !(*node)[seg].is_object()) (*node)[seg] = json::object();
            node = &(*node)[seg];
            pos = sep + 2;
        }
    }
}

RunConfig RunConfig::load(const std::filesystem::path& config_path,
                          std::optional<std::uint64_t> seed_override) {
    RunConfig cfg;
    if (!config_path.empty()) {
        json parsed = json::parse(read_text_file(config_path), nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object()) {
            throw ConfigError("config file is not a JSON object: " + config_path.string());
        }
        cfg.root = std::move(parsed);
    }
    apply_env_overrides(cfg.root);
    if (seed_override) {
        cfg.seed = *seed_override;
        cfg.root["seed"] = *seed_override;
    } else if (cfg.root.contains("seed")) {
        if (!cfg.root["seed"].is_number_unsigned() && !cfg.root["seed"].is_number_integer()) {
            throw ConfigError("seed must be an integer");
        }
        cfg.seed = cfg.root["seed"].get<std::uint64_t>();
    } else {
        cfg.root["seed"] = 0;
    }
    return cfg;
}

RunConfig RunConfig::defaults() { return RunConfig{}; }

const json& RunConfig::section(const std::string& name) const {
    auto it = root.find(name);
    if (it == root.end()) return kEmpty;
    if (!it->is_object()) throw ConfigError("config section '" + name + "' must be an object");
    return *it;
}

namespace {

template <typename T>
T lookup(const json& sec, const std::string& section, const std::string& key, T fallback) {
    auto it = sec.find(key);
    if (it == sec.end()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config value '" + section + "." + key + "' has the wrong type");
    }
}

} // namespace

std::string RunConfig::get_string(const std::string& sec, const std::string& key,
                                  const std::string& fallback) const {
    return lookup<std::string>(section(sec), sec, key, fallback);
}
double RunConfig::get_double(const std::string& sec, const std::string& key,
                             double fallback) const {
    return lookup<double>(section(sec), sec, key, fallback);
}
std::size_t RunConfig::get_size(const std::string& sec, const std::string& key,
                                std::size_t fallback) const {
    return lookup<std::size_t>(section(sec), sec, key, fallback);
}
bool RunConfig::get_bool(const std::string& sec, const std::string& key, bool fallback) const {
    return lookup<bool>(section(sec), sec, key, fallback);
}

DatasetSpec RunConfig::dataset_spec() const {
    DatasetSpec spec;
    spec.kind = get_string("dataset", "kind", "shapes8x8");
    spec.size = get_size("dataset", "size", 64);
    spec.num_classes = get_size("dataset", "classes", 0);
    spec.seed = static_cast<std::uint64_t>(get_size("dataset", "seed", seed));
    const json& sec = section("dataset");
    if (sec.contains("duplication")) {
        for (const auto& [key, val] : sec.at("duplication").items()) {
            try {
                spec.duplication[std::stoull(key)] = val.get<std::size_t>();
            } catch (const std::exception&) {
                throw ConfigError("dataset.duplication entries must map id -> count");
            }
        }
    }
    return spec;
}

std::size_t RunConfig::schedule_steps() const { return get_size("schedule", "t_diff", 400); }

NoiseSchedule RunConfig::schedule() const {
    const std::size_t t = schedule_steps();
    double bmin, bmax;
    default_betas_for(t, bmin, bmax);
    bmin = get_double("schedule", "beta_min", bmin);
    bmax = get_double("schedule", "beta_max", bmax);
    return make_schedule(t, bmin, bmax);
}

DenoiserConfig RunConfig::model_config(std::size_t data_dim, std::size_t vocab_size) const {
    DenoiserConfig cfg;
    cfg.data_dim = data_dim;
    cfg.hidden_dim = get_size("model", "hidden_dim", 64);
    cfg.hidden_layers = get_size("model", "hidden_layers", 3);
    cfg.time_embed_dim = get_size("model", "time_embed_dim", 16);
    cfg.activation = activation_from_string(get_string("model", "activation", "silu"));
    if (vocab_size > 0) {
        cfg.vocab_size = vocab_size;
        cfg.cond_embed_dim = get_size("model", "cond_embed_dim", 8);
        cfg.cond_slots = get_size("model", "cond_slots", 1);
    }
    cfg.validate();
    return cfg;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig cfg;
    cfg.epochs = get_size("train", "epochs", 200);
    cfg.batch_size = get_size("train", "batch_size", 32);
    cfg.lr = get_double("train", "lr", 1e-3);
    cfg.seed = seed;
    cfg.conditional = get_bool("train", "conditional", false);
    cfg.cond_drop_prob = get_double("train", "cond_drop_prob", 0.1);
    cfg.ema_decay = get_double("train", "ema_decay", 0.98);
    cfg.validate();
    return cfg;
}

SamplerConfig RunConfig::sampler_config(const NoiseSchedule& sched) const {
    SamplerConfig cfg;
    const std::size_t fallback_steps = std::min<std::size_t>(sched.steps(), 40);
    cfg.ddim_steps = get_size("sampler", "ddim_steps", fallback_steps);
    cfg.eta = get_double("sampler", "eta", 0.0);
    cfg.cfg_scale = get_double("sampler", "cfg_scale", 1.0);
    cfg.seed = seed;
    cfg.validate(sched);
    return cfg;
}

InversionConfig RunConfig::inversion_config(const NoiseSchedule& sched) const {
    InversionConfig cfg;
    cfg.iterations = get_size("inversion", "iterations", 2000);
    cfg.cycle = get_size("inversion", "cycle", 10);
    cfg.increment = get_double("inversion", "increment", 5e-4);
    cfg.improvement_threshold = get_double("inversion", "improvement_threshold", 1e-3);
    cfg.learning_rate = get_double("inversion", "learning_rate", 1e-1);
    cfg.sensitivity_samples = get_size("inversion", "sensitivity_samples", 16);
    cfg.batch_size = get_size("inversion", "batch_size", 8);
    cfg.timestep_samples = get_size("inversion", "timestep_samples", 8);
    cfg.loss_mode = loss_mode_from_string(get_string("inversion", "loss_mode", "x0"));
    cfg.lambda_floor = get_double("inversion", "lambda_floor", 1e-8);
    cfg.seed = seed;
    cfg.sampler = sampler_config(sched);
    cfg.validate();
    return cfg;
}

PromptInvConfig RunConfig::prompt_config() const {
    PromptInvConfig cfg;
    cfg.positions = get_size("prompt", "positions", 1);
    cfg.tau = get_double("prompt", "tau", 2.0);
    cfg.cr_weight = get_double("prompt", "cr_weight", 0.0);
    const json& sec = section("prompt");
    if (sec.contains("cfg_scales")) {
        cfg.cfg_scales = sec.at("cfg_scales").get<std::vector<double>>();
    }
    if (sec.contains("prior")) cfg.prior = sec.at("prior").get<std::vector<double>>();
    return cfg;
}

JudgeConfig RunConfig::judge_config() const {
    JudgeConfig cfg;
    cfg.mode = embed_mode_from_string(get_string("judge", "mode", "raw"));
    cfg.proj_dim = get_size("judge", "proj_dim", 32);
    cfg.proj_seed = static_cast<std::uint64_t>(get_size("judge", "proj_seed", 17));
    cfg.beta = get_double("judge", "beta", 0.0);
    return cfg;
}

double RunConfig::judge_percentile() const { return get_double("judge", "percentile", 5.0); }

LossBaselineConfig RunConfig::baseline_config() const {
    LossBaselineConfig cfg;
    cfg.noise_count = get_size("baseline", "noise_count", 16);
    cfg.timestep_count = get_size("baseline", "timestep_count", 50);
    cfg.mode = loss_mode_from_string(get_string("baseline", "mode", "eps0"));
    cfg.seed = seed;
    return cfg;
}

} // namespace invmm::cli
