#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "invmm/dataset.hpp"
#include "invmm/errors.hpp"
#include "invmm/judge.hpp"
#include "invmm/rng.hpp"

using namespace invmm;

TEST_CASE("embeddings are unit norm and deterministic") {
    JudgeConfig jc;
    jc.beta = 0.5;
    const ReplicationJudge judge(jc);
    Rng rng(2);
    const Tensor x = rng.uniform_tensor({16}, -1.0, 1.0);
    const Tensor e1 = judge.embed(x);
    const Tensor e2 = judge.embed(x);
    CHECK(l2_norm(e1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e1.vec() == e2.vec());
    CHECK_THROWS_AS(judge.embed(Tensor::zeros({4})), CalibrationError);
}

TEST_CASE("projection mode is deterministic in its seed and unit norm") {
    JudgeConfig jc;
    jc.mode = EmbedMode::random_projection;
    jc.proj_dim = 8;
    jc.proj_seed = 5;
    jc.beta = 0.5;
    const ReplicationJudge judge(jc);
    const ReplicationJudge judge2(jc);
    Rng rng(3);
    const Tensor x = rng.uniform_tensor({64}, -1.0, 1.0);
    CHECK(judge.embed(x).vec() == judge2.embed(x).vec());
    CHECK(judge.embed(x).size() == 8);
    CHECK(l2_norm(judge.embed(x)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("antipodal raw embeddings sit at distance two") {
    JudgeConfig jc;
    jc.beta = 0.5;
    const ReplicationJudge judge(jc);
    Rng rng(7);
    const Tensor x = rng.uniform_tensor({8}, 0.1, 1.0);
    const Tensor nx = scale(x, -1.0);
    CHECK(judge.distance(x, nx) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("replication decision cases") {
    JudgeConfig jc;
    jc.beta = 1.0;
    const ReplicationJudge judge(jc);
    // identical image replicates itself at any positive threshold
    Rng rng(11);
    const Tensor x = rng.uniform_tensor({6}, -1.0, 1.0);
    CHECK(judge.is_replication(x, x));
    // orthogonal unit embeddings: distance sqrt(2) > 1
    const Tensor a({2}, {1.0, 0.0});
    const Tensor b({2}, {0.0, 1.0});
    CHECK_FALSE(judge.is_replication(a, b));
    // the sphere diameter bound makes beta = 2.01 accept anything
    JudgeConfig wide = jc;
    wide.beta = 2.01;
    const ReplicationJudge everything(wide);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor u = rng.uniform_tensor({6}, -1.0, 1.0);
        const Tensor v = rng.uniform_tensor({6}, -1.0, 1.0);
        CHECK(everything.is_replication(u, v));
    }
    CHECK_THROWS_AS(ReplicationJudge(JudgeConfig{}), ConfigError); // beta 0
}

TEST_CASE("judge symmetry and monotonicity in beta") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor a = rng.uniform_tensor({10}, -1.0, 1.0);
        const Tensor b = rng.uniform_tensor({10}, -1.0, 1.0);
        JudgeConfig jc;
        jc.beta = 0.1 + 1.9 * rng.uniform();
        const ReplicationJudge j(jc);
        CHECK(j.is_replication(a, b) == j.is_replication(b, a));
        JudgeConfig wider = jc;
        wider.beta = jc.beta + 0.3;
        const ReplicationJudge jw(wider);
        if (j.is_replication(a, b)) CHECK(jw.is_replication(a, b));
    }
}

TEST_CASE("calibration of an antipodal pair flags degeneracy") {
    ToyDataset ds;
    ds.kind = "synthetic";
    ds.image_shape = {2};
    ds.images.push_back(Tensor({2}, {0.8, 0.0}));
    ds.images.push_back(Tensor({2}, {-0.8, 0.0}));
    const CalibrationResult cal = calibrate_beta(ds, JudgeConfig{}, 5.0);
    CHECK(cal.beta == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(cal.degenerate);
    CHECK(cal.pair_count == 1);
}

TEST_CASE("exact duplicates are excluded from the calibration pool") {
    ToyDataset ds;
    ds.kind = "synthetic";
    ds.image_shape = {2};
    ds.images.push_back(Tensor({2}, {0.8, 0.1}));
    ds.images.push_back(Tensor({2}, {0.8, 0.1})); // duplicate pair, distance 0
    ds.images.push_back(Tensor({2}, {0.1, 0.9}));
    const CalibrationResult cal = calibrate_beta(ds, JudgeConfig{}, 50.0);
    CHECK(cal.pair_count == 2); // the two (dup, third) distances only
    CHECK(cal.beta > 0.0);

    ToyDataset all_same;
    all_same.kind = "synthetic";
    all_same.image_shape = {2};
    all_same.images.push_back(Tensor({2}, {0.5, 0.5}));
    all_same.images.push_back(Tensor({2}, {0.5, 0.5}));
    CHECK_THROWS_AS(calibrate_beta(all_same, JudgeConfig{}, 5.0), CalibrationError);
}

TEST_CASE("shipped 8x8 toy set calibrates into (0, sqrt(2))") {
    DatasetSpec spec;
    spec.kind = "shapes8x8";
    spec.size = 64;
    spec.seed = 0;
    const ToyDataset ds = generate_dataset(spec);
    const CalibrationResult cal = calibrate_beta(ds, JudgeConfig{}, 5.0);
    CHECK(cal.beta > 0.0);
    CHECK(cal.beta < std::sqrt(2.0));
    CHECK_FALSE(cal.degenerate);
}
