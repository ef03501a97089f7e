#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "drlora/errors.hpp"
#include "drlora/matrix.hpp"

namespace drlora {

struct TopkResult {
    std::vector<std::size_t> indices;  // ascending index order
    std::vector<double> weights;       // aligned with indices, sums to 1
};

// Top-k gate: pick the k largest logits (ties broken toward the lower index)
// and softmax over the selected set. Equivalent to full softmax followed by
// renormalization over the winners.
inline TopkResult softmax_topk(std::span<const double> logits, std::size_t k) {
    if (logits.empty()) throw ShapeError("softmax_topk: empty logits");
    if (k < 1 || k > logits.size())
        throw ShapeError("softmax_topk: k=" + std::to_string(k) + " out of range");

    std::vector<std::size_t> order(logits.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });

    TopkResult out;
    out.indices.assign(order.begin(), order.begin() + k);
    std::sort(out.indices.begin(), out.indices.end());

    double max_logit = logits[out.indices[0]];
    for (std::size_t i : out.indices) max_logit = std::max(max_logit, logits[i]);
    out.weights.resize(k);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        out.weights[i] = std::exp(logits[out.indices[i]] - max_logit);
        sum += out.weights[i];
    }
    for (double& w : out.weights) w /= sum;
    return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double silu(double x) { return x * sigmoid(x); }

inline double silu_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

inline void silu_inplace(Matrix& m) {
    for (double& v : m.data()) v = silu(v);
}

// Mean over samples and output dims of the squared error.
inline double mse_loss(const Matrix& pred, const Matrix& target) {
    if (!pred.same_shape(target))
        throw ShapeError("mse_loss: " + shape_str(pred) + " vs " + shape_str(target));
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data()[i] - target.data()[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

inline Matrix mse_loss_grad(const Matrix& pred, const Matrix& target) {
    Matrix g(pred.rows(), pred.cols());
    const double scale = 2.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
        g.data()[i] = scale * (pred.data()[i] - target.data()[i]);
    return g;
}

}  // namespace drlora
