#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "drlora/task.hpp"

using drlora::SyntheticTaskGen;
using drlora::TaskConfig;

TEST_CASE("zero noise makes targets exactly the cluster map of the input") {
    TaskConfig cfg;
    cfg.clusters = 3;
    cfg.dim = 6;
    cfg.input_noise_std = 0.4;
    cfg.target_noise_std = 0.0;
    SyntheticTaskGen gen(cfg, 11);
    auto batch = gen.sample(32, 1);
    for (std::size_t t = 0; t < 32; ++t) {
        // target row must equal the map of the true cluster applied to input
        CHECK(gen.nearest_map(batch.inputs, t, batch.targets, t) == batch.cluster_ids[t]);
    }
}

TEST_CASE("same seed and stream give identical batches") {
    TaskConfig cfg;
    cfg.clusters = 4;
    cfg.dim = 8;
    SyntheticTaskGen gen(cfg, 21);
    auto a = gen.sample(16, 7);
    auto b = gen.sample(16, 7);
    CHECK(a.inputs == b.inputs);
    CHECK(a.targets == b.targets);
    CHECK(a.cluster_ids == b.cluster_ids);
    auto c = gen.sample(16, 8);
    CHECK_FALSE(a.inputs == c.inputs);
}

TEST_CASE("empirical cluster frequencies match configured mixture weights") {
    TaskConfig cfg;
    cfg.clusters = 4;
    cfg.dim = 4;
    cfg.cluster_weights = {0.4, 0.3, 0.2, 0.1};
    SyntheticTaskGen gen(cfg, 31);
    const std::size_t n = 100000;
    std::vector<std::size_t> counts(cfg.clusters, 0);
    const std::size_t chunk = 5000;
    for (std::size_t s = 0; s < n / chunk; ++s) {
        auto batch = gen.sample(chunk, 1000 + s);
        for (std::size_t id : batch.cluster_ids) counts[id]++;
    }
    for (std::size_t c = 0; c < cfg.clusters; ++c) {
        const double w = cfg.cluster_weights[c];
        const double sigma = std::sqrt(n * w * (1 - w));
        CHECK(std::abs(static_cast<double>(counts[c]) - n * w) <= 3.0 * sigma);
    }
}

TEST_CASE("default mixture is skewed toward early clusters") {
    TaskConfig cfg;
    cfg.clusters = 5;
    cfg.dim = 4;
    SyntheticTaskGen gen(cfg, 41);
    auto batch = gen.sample(20000, 3);
    std::vector<std::size_t> counts(cfg.clusters, 0);
    for (std::size_t id : batch.cluster_ids) counts[id]++;
    CHECK(counts[0] > counts[4]);
}

TEST_CASE("invalid configurations are rejected") {
    TaskConfig cfg;
    cfg.clusters = 2;
    cfg.cluster_weights = {0.5};
    CHECK_THROWS_AS(SyntheticTaskGen(cfg, 1), drlora::ConfigError);
    cfg.cluster_weights = {-1.0, 2.0};
    CHECK_THROWS_AS(SyntheticTaskGen(cfg, 1), drlora::ConfigError);
    TaskConfig ok;
    SyntheticTaskGen gen(ok, 1);
    CHECK_THROWS_AS(gen.sample(0, 1), drlora::InputError);
}
