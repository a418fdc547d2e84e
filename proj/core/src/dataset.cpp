#include "invmm/dataset.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "invmm/csvio.hpp"
#include "invmm/errors.hpp"
#include "invmm/rng.hpp"

namespace invmm {

using nlohmann::json;

std::size_t ToyDataset::copy_count(std::size_t id) const {
    auto it = duplication.find(id);
    return it == duplication.end() ? 1 : it->second;
}

std::vector<std::size_t> ToyDataset::training_rows() const {
    std::vector<std::size_t> rows;
    for (std::size_t id = 0; id < images.size(); ++id) {
        const std::size_t n = copy_count(id);
        for (std::size_t k = 0; k < n; ++k) rows.push_back(id);
    }
    return rows;
}

std::vector<std::size_t> ToyDataset::duplicated_ids() const {
    std::vector<std::size_t> ids;
    for (const auto& [id, n] : duplication) {
        if (n > 1 && id < images.size()) ids.push_back(id);
    }
    return ids;
}

void ToyDataset::validate() const {
    if (images.empty()) throw ConfigError("dataset has no images");
    const auto& shape0 = images.front().shape();
    for (const auto& img : images) {
        if (img.shape() != shape0) throw ConfigError("dataset images must share one shape");
        for (std::size_t i = 0; i < img.size(); ++i) {
            if (!(img[i] >= -1.0 && img[i] <= 1.0)) {
                throw ConfigError("image values must lie in [-1, 1]");
            }
        }
    }
    if (!labels.empty()) {
        if (labels.size() != images.size()) throw ConfigError("label count != image count");
        if (num_classes == 0) throw ConfigError("labels present but num_classes == 0");
        for (std::size_t l : labels) {
            if (l >= num_classes) throw ConfigError("label id must be < num_classes");
        }
    }
    for (const auto& [id, n] : duplication) {
        if (id >= images.size()) throw ConfigError("duplication id out of range");
        if (n < 1) throw ConfigError("duplication count must be >= 1");
    }
}

namespace {

json dataset_to_json(const ToyDataset& ds) {
    json j;
    j["format_version"] = 1;
    j["kind"] = ds.kind;
    j["seed"] = ds.seed;
    j["image_shape"] = ds.image_shape;
    json imgs = json::array();
    for (const auto& img : ds.images) imgs.push_back(img.vec());
    j["images"] = std::move(imgs);
    if (!ds.labels.empty()) j["labels"] = ds.labels;
    j["num_classes"] = ds.num_classes;
    json dup = json::object();
    for (const auto& [id, n] : ds.duplication) dup[std::to_string(id)] = n;
    j["duplication"] = std::move(dup);
    return j;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

} // namespace

std::string ToyDataset::content_hash() const {
    return "fnv1a:" + hex64(fnv1a(dataset_to_json(*this).dump()));
}

// ---------------------------------------------------------------------------
// Generators

namespace {

void assign_labels(ToyDataset& ds, const DatasetSpec& spec) {
    if (spec.num_classes == 0) return;
    ds.num_classes = spec.num_classes;
    ds.labels.resize(ds.images.size());
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        ds.labels[i] = i % spec.num_classes;
    }
}

// 2-D points. Conditional: per-class blobs placed on a circle, class ids
// round-robin. Unconditional: angles spread uniformly with radial jitter,
// so embedding distances between distinct points stay well separated.
ToyDataset make_gauss2d(const DatasetSpec& spec) {
    ToyDataset ds;
    ds.kind = "gauss2d";
    ds.seed = spec.seed;
    ds.image_shape = {2};
    Rng rng(spec.seed);
    const std::size_t groups = std::max<std::size_t>(1, spec.num_classes);
    for (std::size_t i = 0; i < spec.size; ++i) {
        double angle, radius;
        if (spec.num_classes > 0) {
            const std::size_t g = i % groups;
            angle = 6.283185307179586 * (static_cast<double>(g) + 0.5) / static_cast<double>(groups) +
                    0.15 * rng.normal();
            radius = 0.55 + 0.05 * rng.normal();
        } else {
            angle = 6.283185307179586 * rng.uniform();
            radius = 0.45 + 0.25 * rng.uniform();
        }
        Tensor p({2});
        p[0] = std::clamp(radius * std::cos(angle), -1.0, 1.0);
        p[1] = std::clamp(radius * std::sin(angle), -1.0, 1.0);
        ds.images.push_back(std::move(p));
    }
    assign_labels(ds, spec);
    return ds;
}

// Procedural 8x8 grayscale shapes. Four families (bar, cross, box, dot
// grid) with jittered geometry and intensity; distinct images by
// construction at desk sizes.
ToyDataset make_shapes8x8(const DatasetSpec& spec) {
    ToyDataset ds;
    ds.kind = "shapes8x8";
    ds.seed = spec.seed;
    ds.image_shape = {8, 8};
    Rng rng(spec.seed);
    const std::size_t families = 4;
    for (std::size_t i = 0; i < spec.size; ++i) {
        const std::size_t fam = (spec.num_classes > 0) ? (i % spec.num_classes) % families
                                                       : rng.uniform_int(0, families - 1);
        Tensor img = Tensor::full({64}, -1.0);
        const double fg = 0.45 + 0.5 * rng.uniform();
        auto put = [&](std::size_t r, std::size_t c, double v) {
            img[r * 8 + c] = std::clamp(v, -1.0, 1.0);
        };
        switch (fam) {
            case 0: { // horizontal bar
                const std::size_t row = rng.uniform_int(1, 6);
                const std::size_t thick = rng.uniform_int(1, 2);
                for (std::size_t r = row; r < std::min<std::size_t>(8, row + thick); ++r) {
                    for (std::size_t c = 0; c < 8; ++c) put(r, c, fg);
                }
                break;
            }
            case 1: { // cross
                const std::size_t row = rng.uniform_int(1, 6);
                const std::size_t col = rng.uniform_int(1, 6);
                for (std::size_t c = 0; c < 8; ++c) put(row, c, fg);
                for (std::size_t r = 0; r < 8; ++r) put(r, col, fg);
                break;
            }
            case 2: { // hollow box
                const std::size_t top = rng.uniform_int(0, 2);
                const std::size_t left = rng.uniform_int(0, 2);
                const std::size_t h = rng.uniform_int(4, 7 - top);
                const std::size_t w = rng.uniform_int(4, 7 - left);
                for (std::size_t c = left; c <= left + w; ++c) {
                    put(top, c, fg);
                    put(top + h, c, fg);
                }
                for (std::size_t r = top; r <= top + h; ++r) {
                    put(r, left, fg);
                    put(r, left + w, fg);
                }
                break;
            }
            default: { // dot grid
                const std::size_t phase = rng.uniform_int(0, 1);
                const std::size_t stride = rng.uniform_int(2, 3);
                for (std::size_t r = phase; r < 8; r += stride) {
                    for (std::size_t c = phase; c < 8; c += stride) put(r, c, fg);
                }
                break;
            }
        }
        // Per-image speckle so duplicates-by-chance cannot occur.
        for (int k = 0; k < 3; ++k) {
            const std::size_t r = rng.uniform_int(0, 7);
            const std::size_t c = rng.uniform_int(0, 7);
            put(r, c, img[r * 8 + c] + 0.25 * (rng.uniform() - 0.5));
        }
        ds.images.push_back(std::move(img));
    }
    assign_labels(ds, spec);
    return ds;
}

} // namespace

ToyDataset generate_dataset(const DatasetSpec& spec) {
    if (spec.size == 0) throw ConfigError("dataset size must be positive");
    ToyDataset ds;
    if (spec.kind == "gauss2d") {
        ds = make_gauss2d(spec);
    } else if (spec.kind == "shapes8x8") {
        ds = make_shapes8x8(spec);
    } else {
        throw ConfigError("unknown dataset kind '" + spec.kind + "' (want gauss2d or shapes8x8)");
    }
    ds.duplication = spec.duplication;
    ds.validate();
    return ds;
}

void save_dataset(const ToyDataset& ds, const std::filesystem::path& path) {
    json j = dataset_to_json(ds);
    j["content_hash"] = ds.content_hash();
    write_text_file(path, j.dump(2) + "\n");
}

ToyDataset load_dataset(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw IoError("dataset parse error in " + path.string() + ": " + e.what());
    }
    ToyDataset ds;
    try {
        if (j.at("format_version").get<int>() != 1) {
            throw IoError("unsupported dataset format_version");
        }
        ds.kind = j.at("kind").get<std::string>();
        ds.seed = j.at("seed").get<std::uint64_t>();
        ds.image_shape = j.at("image_shape").get<std::vector<std::size_t>>();
        for (const auto& arr : j.at("images")) {
            std::vector<double> data = arr.get<std::vector<double>>();
            ds.images.emplace_back(std::vector<std::size_t>{data.size()}, std::move(data));
        }
        if (j.contains("labels")) ds.labels = j.at("labels").get<std::vector<std::size_t>>();
        ds.num_classes = j.at("num_classes").get<std::size_t>();
        for (const auto& [key, val] : j.at("duplication").items()) {
            ds.duplication[std::stoull(key)] = val.get<std::size_t>();
        }
        const std::string expect = j.at("content_hash").get<std::string>();
        if (expect != ds.content_hash()) {
            throw IoError("dataset content hash mismatch in " + path.string());
        }
    } catch (const json::exception& e) {
        throw IoError("dataset field error in " + path.string() + ": " + e.what());
    }
    ds.validate();
    return ds;
}

} // namespace invmm
