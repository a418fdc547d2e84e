#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "invmm/nn_test.hpp"
#include "invmm/train.hpp"

using namespace invmm;

namespace {

struct NnToy {
    ToyDataset data;
    NoiseSchedule sched = make_schedule(50, 2e-3, 0.4);
    Denoiser trained;
    Denoiser untrained;
    ReplicationJudge judge;

    NnToy()
        : data([] {
              DatasetSpec spec;
              spec.kind = "gauss2d";
              spec.size = 10;
              spec.seed = 51;
              spec.duplication = {{4, 40}};
              return generate_dataset(spec);
          }()),
          trained([&] {
              DenoiserConfig mc;
              mc.data_dim = 2;
              mc.hidden_dim = 32;
              mc.hidden_layers = 2;
              mc.time_embed_dim = 8;
              TrainConfig tc;
              tc.epochs = 250;
              tc.batch_size = 16;
              tc.lr = 3e-3;
              tc.seed = 52;
              return train_denoiser(data, sched, mc, tc);
          }()),
          untrained([&] {
              DenoiserConfig mc;
              mc.data_dim = 2;
              mc.hidden_dim = 32;
              mc.hidden_layers = 2;
              mc.time_embed_dim = 8;
              Denoiser m(mc, 53);
              m.freeze();
              return m;
          }()),
          judge([&] {
              JudgeConfig jc;
              jc.beta = calibrate_beta(data, jc, 5.0).beta;
              return ReplicationJudge(jc);
          }()) {}
};

const NnToy& toy() {
    static NnToy t;
    return t;
}

} // namespace

TEST_CASE("zero samples are rejected") {
    const auto& t = toy();
    SamplerConfig sc;
    sc.ddim_steps = 25;
    Rng rng(1);
    CHECK_THROWS_AS(
        nearest_neighbor_test(t.trained, t.sched, t.data, 0, t.judge, sc, rng), ContractError);
}

TEST_CASE("an untrained model replicates nothing") {
    const auto& t = toy();
    SamplerConfig sc;
    sc.ddim_steps = 25;
    Rng rng(2);
    const NnTestResult res =
        nearest_neighbor_test(t.untrained, t.sched, t.data, 200, t.judge, sc, rng);
    CHECK(res.replicated_ids.empty());
    CHECK(res.n_samples == 200);
}

TEST_CASE("the heavily duplicated image enters the replicated set") {
    const auto& t = toy();
    SamplerConfig sc;
    sc.ddim_steps = 25;
    Rng rng(3);
    const NnTestResult res =
        nearest_neighbor_test(t.trained, t.sched, t.data, 300, t.judge, sc, rng);
    CHECK(res.replicated_ids.count(4) == 1);
    CHECK(res.hit_counts[4] > 0);
    REQUIRE(res.first_hit_sample[4].has_value());
    CHECK(*res.first_hit_sample[4] < 300);
}

TEST_CASE("csv export lists every image id") {
    const auto& t = toy();
    SamplerConfig sc;
    sc.ddim_steps = 25;
    Rng rng(4);
    const NnTestResult res =
        nearest_neighbor_test(t.trained, t.sched, t.data, 50, t.judge, sc, rng);
    const std::string csv = nn_result_csv(res);
    CHECK(csv.rfind("image_id,hit_count,first_hit_sample_index\n", 0) == 0);
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n' ? 1 : 0;
    CHECK(lines == 1 + t.data.images.size());
}

TEST_CASE("results are deterministic in the generator seed") {
    const auto& t = toy();
    SamplerConfig sc;
    sc.ddim_steps = 25;
    Rng a(9), b(9);
    const NnTestResult r1 = nearest_neighbor_test(t.trained, t.sched, t.data, 80, t.judge, sc, a);
    const NnTestResult r2 = nearest_neighbor_test(t.trained, t.sched, t.data, 80, t.judge, sc, b);
    CHECK(r1.replicated_ids == r2.replicated_ids);
    CHECK(r1.hit_counts == r2.hit_counts);
}
