#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "invmm/csvio.hpp"
#include "invmm/dataset.hpp"
#include "invmm/errors.hpp"

using namespace invmm;

namespace {

std::filesystem::path tmp_dir() {
    auto p = std::filesystem::temp_directory_path() / "invmm_dataset_tests";
    std::filesystem::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("duplication expands the training stream") {
    DatasetSpec spec;
    spec.kind = "shapes8x8";
    spec.size = 64;
    spec.duplication = {{3, 20}};
    spec.seed = 8;
    const ToyDataset ds = generate_dataset(spec);
    CHECK(ds.images.size() == 64);
    CHECK(ds.training_rows().size() == 83); // 63 singles + 20 copies
    CHECK(ds.duplicated_ids() == std::vector<std::size_t>{3});
    CHECK(ds.copy_count(3) == 20);
    CHECK(ds.copy_count(4) == 1);
}

TEST_CASE("generation is deterministic byte for byte") {
    DatasetSpec spec;
    spec.kind = "shapes8x8";
    spec.size = 16;
    spec.num_classes = 4;
    spec.seed = 99;
    const auto dir = tmp_dir();
    save_dataset(generate_dataset(spec), dir / "a.json");
    save_dataset(generate_dataset(spec), dir / "b.json");
    CHECK(read_text_file(dir / "a.json") == read_text_file(dir / "b.json"));
}

TEST_CASE("size zero and unknown kinds are rejected") {
    DatasetSpec spec;
    spec.kind = "shapes8x8";
    spec.size = 0;
    CHECK_THROWS_AS(generate_dataset(spec), ConfigError);
    spec.size = 4;
    spec.kind = "unknown";
    CHECK_THROWS_AS(generate_dataset(spec), ConfigError);
}

TEST_CASE("validation guards labels, ranges and duplication ids") {
    DatasetSpec spec;
    spec.kind = "gauss2d";
    spec.size = 6;
    spec.num_classes = 3;
    spec.seed = 1;
    ToyDataset ds = generate_dataset(spec);
    CHECK(ds.vocab_size() == 4);
    for (std::size_t l : ds.labels) CHECK(l < 3);

    ToyDataset bad = ds;
    bad.labels[0] = 7;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    ToyDataset out_of_range = ds;
    out_of_range.images[0][0] = 1.5;
    CHECK_THROWS_AS(out_of_range.validate(), ConfigError);

    ToyDataset bad_dup = ds;
    bad_dup.duplication[99] = 3;
    CHECK_THROWS_AS(bad_dup.validate(), ConfigError);
}

TEST_CASE("save/load round trip preserves content and detects tampering") {
    DatasetSpec spec;
    spec.kind = "gauss2d";
    spec.size = 10;
    spec.num_classes = 2;
    spec.duplication = {{1, 5}};
    spec.seed = 3;
    const ToyDataset ds = generate_dataset(spec);
    const auto dir = tmp_dir();
    save_dataset(ds, dir / "round.json");
    const ToyDataset loaded = load_dataset(dir / "round.json");
    CHECK(loaded.content_hash() == ds.content_hash());
    CHECK(loaded.images.size() == ds.images.size());
    CHECK(loaded.labels == ds.labels);
    CHECK(loaded.duplication == ds.duplication);
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        CHECK(loaded.images[i].vec() == ds.images[i].vec());
    }

    // flip one stored value: the hash check must reject the file
    std::string text = read_text_file(dir / "round.json");
    const auto pos = text.find("\"duplication\"");
    REQUIRE(pos != std::string::npos);
    text.replace(text.find("5", pos), 1, "6");
    write_text_file(dir / "tampered.json", text);
    CHECK_THROWS_AS(load_dataset(dir / "tampered.json"), IoError);
}

TEST_CASE("images stay in pixel range for both generators") {
    for (const char* kind : {"gauss2d", "shapes8x8"}) {
        DatasetSpec spec;
        spec.kind = kind;
        spec.size = 32;
        spec.num_classes = 4;
        spec.seed = 5;
        const ToyDataset ds = generate_dataset(spec);
        CHECK_NOTHROW(ds.validate());
        CHECK(ds.dim() == (std::string(kind) == "gauss2d" ? 2u : 64u));
    }
}
