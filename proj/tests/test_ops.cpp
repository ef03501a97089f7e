#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "drlora/ops.hpp"
#include "drlora/rng.hpp"

using drlora::softmax_topk;
using drlora::TopkResult;

namespace {

// Oracle: full softmax, then renormalize over an exhaustively-verified best
// subset of size k.
TopkResult topk_oracle(const std::vector<double>& logits, std::size_t k) {
    std::vector<double> p(logits.size());
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    // exhaustive subset search: maximize total logit mass
    std::vector<std::size_t> best;
    double best_mass = -1.0;
    const std::size_t n = logits.size();
    for (std::uint32_t bits = 0; bits < (1u << n); ++bits) {
        if (static_cast<std::size_t>(__builtin_popcount(bits)) != k) continue;
        double mass = 0.0;
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < n; ++i)
            if (bits & (1u << i)) {
                mass += p[i];
                idx.push_back(i);
            }
        if (mass > best_mass + 1e-15) {
            best_mass = mass;
            best = idx;
        }
    }
    double sel = 0.0;
    for (std::size_t i : best) sel += p[i];
    TopkResult r;
    r.indices = best;
    for (std::size_t i : best) r.weights.push_back(p[i] / sel);
    return r;
}

}  // namespace

TEST_CASE("softmax_topk two-way softmax") {
    std::vector<double> logits{2, 1, 0, -1};
    auto r = softmax_topk(logits, 2);
    REQUIRE(r.indices == std::vector<std::size_t>{0, 1});
    CHECK(r.weights[0] == Catch::Approx(0.7311).margin(5e-5));
    CHECK(r.weights[1] == Catch::Approx(0.2689).margin(5e-5));
}

TEST_CASE("softmax_topk k equals length with uniform logits") {
    std::vector<double> logits(6, 0.37);
    auto r = softmax_topk(logits, 6);
    for (double w : r.weights) CHECK(w == Catch::Approx(1.0 / 6).epsilon(1e-12));
}

TEST_CASE("softmax_topk matches renormalized-full-softmax oracle") {
    drlora::Rng rng(101);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> logits(8);
        for (double& v : logits) v = 4.0 * (rng.next_double() - 0.5);
        auto got = softmax_topk(logits, 3);
        auto want = topk_oracle(logits, 3);
        REQUIRE(got.indices == want.indices);
        for (std::size_t i = 0; i < got.weights.size(); ++i)
            CHECK(std::abs(got.weights[i] - want.weights[i]) <= 1e-12);
    }
}

TEST_CASE("softmax_topk weights are a distribution") {
    drlora::Rng rng(55);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> logits(10);
        for (double& v : logits) v = 10.0 * (rng.next_double() - 0.5);
        std::size_t k = 1 + rng.next_below(10);
        auto r = softmax_topk(logits, k);
        double sum = 0.0;
        for (double w : r.weights) {
            CHECK(w >= 0.0);
            sum += w;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("softmax_topk tie-break and errors") {
    std::vector<double> ties{1.0, 1.0, 1.0};
    auto r = softmax_topk(ties, 2);
    CHECK(r.indices == std::vector<std::size_t>{0, 1});

    std::vector<double> empty;
    CHECK_THROWS_AS(softmax_topk(empty, 1), drlora::ShapeError);
    CHECK_THROWS_AS(softmax_topk(ties, 4), drlora::ShapeError);
    CHECK_THROWS_AS(softmax_topk(ties, 0), drlora::ShapeError);
}

TEST_CASE("silu basics") {
    CHECK(drlora::silu(0.0) == 0.0);
    // derivative against a central difference
    const double x = 0.7, eps = 1e-6;
    const double num = (drlora::silu(x + eps) - drlora::silu(x - eps)) / (2 * eps);
    CHECK(drlora::silu_grad(x) == Catch::Approx(num).epsilon(1e-8));
}

TEST_CASE("mse loss and gradient") {
    drlora::Matrix pred = drlora::Matrix::from_rows({{1, 2}, {3, 4}});
    drlora::Matrix tgt = drlora::Matrix::from_rows({{0, 2}, {3, 2}});
    CHECK(drlora::mse_loss(pred, tgt) == Catch::Approx((1.0 + 0.0 + 0.0 + 4.0) / 4.0));
    auto g = drlora::mse_loss_grad(pred, tgt);
    CHECK(g(0, 0) == Catch::Approx(2.0 * 1.0 / 4.0));
    CHECK(g(1, 1) == Catch::Approx(2.0 * 2.0 / 4.0));
}
