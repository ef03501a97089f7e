#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "drlora/trainer.hpp"

using drlora::Matrix;
using drlora::Method;
using drlora::RouterPolicy;
using drlora::TrainConfig;
using drlora::Trainer;

namespace {

TrainConfig tiny_config() {
    TrainConfig c;
    c.model.layers = 2;
    c.model.experts = 4;
    c.model.top_k = 2;
    c.model.d_model = 8;
    c.model.d_expert = 8;
    c.model.r_init = 2;
    c.model.r_target = 4;
    c.model.r_max = 8;
    c.task.dim = 8;
    c.task.clusters = 4;
    c.total_steps = 120;
    c.t_grow = 20;
    c.warmup_ratio = 0.05;  // 6 warmup steps
    c.tail_guard = 20;
    c.p_grow = 0.2;  // per-event cap 1
    c.batch_size = 8;
    c.eval_interval = 50;
    c.eval_samples = 64;
    c.seed = 3;
    return c;
}

std::size_t layer_rank_sum(const std::vector<std::vector<std::size_t>>& ranks, std::size_t l) {
    return std::accumulate(ranks[l].begin(), ranks[l].end(), std::size_t{0});
}

}  // namespace

TEST_CASE("fixed-lora runs no growth events and sits at r_target") {
    TrainConfig cfg = tiny_config();
    cfg.method = Method::kFixedLora;
    Trainer tr(cfg);
    const auto& log = tr.run();
    CHECK(log.events.empty());
    for (const auto& row : log.final_ranks)
        for (std::size_t r : row) CHECK(r == cfg.model.r_target);
}

TEST_CASE("dr-lora reaches the exact per-layer budget with monotone ranks") {
    TrainConfig cfg = tiny_config();
    Trainer tr(cfg);
    const auto& log = tr.run();
    REQUIRE(log.events.size() == 4);
    // monotone across events, capped by r_max
    auto prev = log.initial_ranks;
    for (const auto& e : log.events) {
        for (std::size_t l = 0; l < cfg.model.layers; ++l)
            for (std::size_t i = 0; i < cfg.model.experts; ++i) {
                CHECK(e.ranks_after[l][i] >= prev[l][i]);
                CHECK(e.ranks_after[l][i] <= cfg.model.r_max);
            }
        prev = e.ranks_after;
    }
    for (std::size_t l = 0; l < cfg.model.layers; ++l)
        CHECK(layer_rank_sum(log.final_ranks, l) == cfg.model.experts * cfg.model.r_target);
}

TEST_CASE("per-layer budget exactness holds for random and proportional strategies") {
    for (Method m : {Method::kRandom, Method::kProportional}) {
        TrainConfig cfg = tiny_config();
        cfg.method = m;
        Trainer tr(cfg);
        const auto& log = tr.run();
        for (std::size_t l = 0; l < cfg.model.layers; ++l)
            CHECK(layer_rank_sum(log.final_ranks, l) == cfg.model.experts * cfg.model.r_target);
    }
}

TEST_CASE("global greedy matches the pooled budget") {
    TrainConfig cfg = tiny_config();
    cfg.method = Method::kGlobalGreedy;
    Trainer tr(cfg);
    const auto& log = tr.run();
    std::size_t total = 0;
    for (std::size_t l = 0; l < cfg.model.layers; ++l) total += layer_rank_sum(log.final_ranks, l);
    CHECK(total == cfg.model.layers * cfg.model.experts * cfg.model.r_target);
}

TEST_CASE("identical config and seed give byte-identical run logs") {
    TrainConfig cfg = tiny_config();
    Trainer a(cfg), b(cfg);
    a.run();
    b.run();
    CHECK(a.log().to_ndjson() == b.log().to_ndjson());
}

TEST_CASE("growth events preserve the pinned-batch loss") {
    TrainConfig cfg = tiny_config();
    Trainer tr(cfg);
    const auto& log = tr.run();
    REQUIRE_FALSE(log.events.empty());
    for (const auto& e : log.events)
        CHECK(std::abs(e.pinned_loss_before - e.pinned_loss_after) <= 1e-12);
}

TEST_CASE("router stays frozen through warmup and first moves at warmup+1") {
    TrainConfig cfg = tiny_config();
    cfg.router_policy = RouterPolicy::kUnfreezeAfterWarmup;
    const std::size_t warmup = cfg.warmup_steps();
    REQUIRE(warmup == 6);
    Trainer tr(cfg);
    const Matrix initial = tr.network().layer(0).router;
    std::vector<std::uint8_t> changed;
    tr.run([&](std::size_t, const drlora::MoeNetwork& net) {
        changed.push_back(drlora::max_abs_diff(net.layer(0).router, initial) != 0.0 ? 1 : 0);
    });
    for (std::size_t t = 1; t <= warmup; ++t) CHECK(changed[t - 1] == 0);
    CHECK(changed[warmup] == 1);  // step warmup+1
}

TEST_CASE("frozen router policy never updates the router") {
    TrainConfig cfg = tiny_config();
    cfg.router_policy = RouterPolicy::kFrozen;
    Trainer tr(cfg);
    std::vector<Matrix> initial;
    for (const auto& layer : tr.network().layers()) initial.push_back(layer.router);
    tr.run();
    for (std::size_t l = 0; l < initial.size(); ++l)
        CHECK(drlora::max_abs_diff(tr.network().layer(l).router, initial[l]) == 0.0);
}

TEST_CASE("frozen base weights are bit-identical after training") {
    TrainConfig cfg = tiny_config();
    Trainer tr(cfg);
    std::vector<Matrix> ups, downs;
    for (const auto& layer : tr.network().layers())
        for (const auto& e : layer.experts) {
            ups.push_back(e.w_up);
            downs.push_back(e.w_down);
        }
    tr.run();
    std::size_t idx = 0;
    for (const auto& layer : tr.network().layers())
        for (const auto& e : layer.experts) {
            CHECK(e.w_up == ups[idx]);
            CHECK(e.w_down == downs[idx]);
            ++idx;
        }
}

TEST_CASE("training loss decreases on the toy task") {
    TrainConfig cfg = tiny_config();
    cfg.total_steps = 300;
    cfg.t_grow = 50;
    Trainer tr(cfg);
    const auto& log = tr.run();
    const double first = log.steps.front().loss;
    double tail = 0.0;
    for (std::size_t i = log.steps.size() - 20; i < log.steps.size(); ++i)
        tail += log.steps[i].loss;
    tail /= 20.0;
    CHECK(tail < first);
}

TEST_CASE("evaluate is deterministic and equals the per-sample mean") {
    TrainConfig cfg = tiny_config();
    Trainer tr(cfg);
    auto a = drlora::evaluate(tr.network(), tr.generator(), 128, cfg.eval_seed);
    auto b = drlora::evaluate(tr.network(), tr.generator(), 128, cfg.eval_seed);
    CHECK(a.loss == b.loss);
    CHECK(a.accuracy == b.accuracy);

    // per-sample oracle over the same eval draw
    const std::uint64_t stream = drlora::Rng(cfg.eval_seed).derive("eval-batch").key();
    auto batch = tr.generator().sample(128, stream);
    auto cache = tr.network().forward(batch.inputs);
    double mean = 0.0;
    for (std::size_t t = 0; t < 128; ++t) {
        double s = 0.0;
        for (std::size_t o = 0; o < cfg.model.d_model; ++o) {
            const double d = cache.prediction(t, o) - batch.targets(t, o);
            s += d * d;
        }
        mean += s / static_cast<double>(cfg.model.d_model);
    }
    mean /= 128.0;
    CHECK(std::abs(mean - a.loss) <= 1e-12);
}

TEST_CASE("non-finite loss aborts with a numeric error") {
    TrainConfig cfg = tiny_config();
    Trainer tr(cfg);
    tr.network().in_head().fill(1e308);
    CHECK_THROWS_AS(tr.run(), drlora::NumericError);
}

TEST_CASE("invalid configurations are rejected up front") {
    TrainConfig cfg = tiny_config();
    cfg.task.dim = 9;
    CHECK_THROWS_AS(Trainer(cfg), drlora::ConfigError);
    cfg = tiny_config();
    cfg.t_grow = 1000;  // exceeds window
    CHECK_THROWS_AS(Trainer(cfg), drlora::ConfigError);
    cfg = tiny_config();
    cfg.beta = 1.0;
    CHECK_THROWS_AS(Trainer(cfg), drlora::ConfigError);
}

TEST_CASE("saliency snapshots in event records have layer-consistent shapes") {
    TrainConfig cfg = tiny_config();
    Trainer tr(cfg);
    const auto& log = tr.run();
    for (const auto& e : log.events) {
        CHECK(e.f.size() == cfg.model.layers * cfg.model.experts);
        CHECK(e.g.size() == e.f.size());
        CHECK(e.saliency.size() == e.f.size());
        CHECK(e.ranks_after.size() == cfg.model.layers);
    }
}
