#include "invmm/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include "invmm/csvio.hpp"
#include "invmm/errors.hpp"

namespace invmm {

using nlohmann::json;

void save_checkpoint(const std::filesystem::path& path, const Denoiser& model,
                     const NoiseSchedule& sched, const TrainingManifest& manifest) {
    const DenoiserConfig& c = model.config();
    json j;
    j["format_version"] = 1;
    j["model"] = {
        {"data_dim", c.data_dim},
        {"hidden_dim", c.hidden_dim},
        {"hidden_layers", c.hidden_layers},
        {"time_embed_dim", c.time_embed_dim},
        {"cond_embed_dim", c.cond_embed_dim},
        {"vocab_size", c.vocab_size},
        {"cond_slots", c.cond_slots},
        {"activation", to_string(c.activation)},
    };
    j["schedule"] = {{"alphas", sched.alphas()}};
    j["weights"] = model.flat_weights();
    j["manifest"] = {
        {"dataset_hash", manifest.dataset_hash},
        {"epochs", manifest.epochs},
        {"seed", manifest.seed},
    };
    json dup = json::object();
    for (const auto& [id, n] : manifest.duplication) dup[std::to_string(id)] = n;
    j["manifest"]["duplication"] = std::move(dup);
    write_text_file(path, j.dump(2) + "\n");
}

namespace {

template <typename T>
T field(const json& j, const char* scope, const char* name) {
    try {
        return j.at(name).get<T>();
    } catch (const json::exception& e) {
        throw IoError("checkpoint field '" + std::string(scope) + "." + name + "': " + e.what());
    }
}

} // namespace

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw IoError("checkpoint parse error in " + path.string() + ": " + e.what());
    }
    if (field<int>(j, "", "format_version") != 1) {
        throw IoError("checkpoint field 'format_version': unsupported version");
    }
    if (!j.contains("model")) throw IoError("checkpoint field 'model': missing");
    const json& jm = j["model"];
    DenoiserConfig cfg;
    cfg.data_dim = field<std::size_t>(jm, "model", "data_dim");
    cfg.hidden_dim = field<std::size_t>(jm, "model", "hidden_dim");
    cfg.hidden_layers = field<std::size_t>(jm, "model", "hidden_layers");
    cfg.time_embed_dim = field<std::size_t>(jm, "model", "time_embed_dim");
    cfg.cond_embed_dim = field<std::size_t>(jm, "model", "cond_embed_dim");
    cfg.vocab_size = field<std::size_t>(jm, "model", "vocab_size");
    cfg.cond_slots = field<std::size_t>(jm, "model", "cond_slots");
    cfg.activation = activation_from_string(field<std::string>(jm, "model", "activation"));

    if (!j.contains("schedule")) throw IoError("checkpoint field 'schedule': missing");
    std::vector<double> alphas = field<std::vector<double>>(j["schedule"], "schedule", "alphas");
    NoiseSchedule sched = [&] {
        try {
            return NoiseSchedule::from_alphas(std::move(alphas));
        } catch (const std::exception& e) {
            throw IoError("checkpoint field 'schedule.alphas': " + std::string(e.what()));
        }
    }();

    std::vector<double> weights = field<std::vector<double>>(j, "", "weights");
    Denoiser model = [&] {
        try {
            return Denoiser(cfg, weights);
        } catch (const std::exception& e) {
            throw IoError("checkpoint field 'weights': " + std::string(e.what()));
        }
    }();

    TrainingManifest manifest;
    if (!j.contains("manifest")) throw IoError("checkpoint field 'manifest': missing");
    const json& jman = j["manifest"];
    manifest.dataset_hash = field<std::string>(jman, "manifest", "dataset_hash");
    manifest.epochs = field<std::size_t>(jman, "manifest", "epochs");
    manifest.seed = field<std::uint64_t>(jman, "manifest", "seed");
    try {
        for (const auto& [key, val] : jman.at("duplication").items()) {
            manifest.duplication[std::stoull(key)] = val.get<std::size_t>();
        }
    } catch (const std::exception& e) {
        throw IoError("checkpoint field 'manifest.duplication': " + std::string(e.what()));
    }
    return LoadedCheckpoint{std::move(model), std::move(sched), std::move(manifest)};
}

} // namespace invmm
