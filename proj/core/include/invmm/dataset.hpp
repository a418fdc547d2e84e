#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "invmm/tensor.hpp"

namespace invmm {

/// Toy training set: unique images (flat, pixel range [-1, 1]) plus a
/// duplication manifest mapping image id -> copy count in the training
/// stream. Labels, when present, are class ids < num_classes; the id
/// num_classes is reserved for the null condition.
struct ToyDataset {
    std::string kind;
    std::uint64_t seed = 0;
    std::vector<std::size_t> image_shape;
    std::vector<Tensor> images;
    std::vector<std::size_t> labels;
    std::size_t num_classes = 0;
    std::map<std::size_t, std::size_t> duplication;

    std::size_t dim() const { return images.empty() ? 0 : images.front().size(); }
    bool conditional() const { return num_classes > 0; }
    /// Vocabulary size for a conditional model (classes + null id).
    std::size_t vocab_size() const { return num_classes + 1; }

    std::size_t copy_count(std::size_t id) const;
    /// Training stream: image ids expanded by their copy counts.
    std::vector<std::size_t> training_rows() const;
    std::vector<std::size_t> duplicated_ids() const;

    /// FNV-1a over the canonical serialized content; stable across runs.
    std::string content_hash() const;

    void validate() const;
};

struct DatasetSpec {
    std::string kind; // gauss2d | shapes8x8
    std::size_t size = 64;
    std::size_t num_classes = 0; // 0 = unconditional
    std::map<std::size_t, std::size_t> duplication;
    std::uint64_t seed = 0;
};

ToyDataset generate_dataset(const DatasetSpec& spec);

void save_dataset(const ToyDataset& ds, const std::filesystem::path& path);
ToyDataset load_dataset(const std::filesystem::path& path);

} // namespace invmm
