#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "drlora/errors.hpp"
#include "drlora/matrix.hpp"

namespace drlora {

// AdamW with decoupled weight decay and bias correction. Moment tables are
// kept per parameter slot, aligned with the caller's parameter list.
struct OptimizerState {
    std::vector<Matrix> first_moment;
    std::vector<Matrix> second_moment;
    std::uint64_t step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
};

inline void adam_init(OptimizerState& state, const std::vector<Matrix*>& params) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (const Matrix* p : params) {
        state.first_moment.emplace_back(p->rows(), p->cols());
        state.second_moment.emplace_back(p->rows(), p->cols());
    }
    state.step = 0;
}

inline void adam_step(const std::vector<Matrix*>& params,
                      const std::vector<const Matrix*>& grads, OptimizerState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size())
        throw ShapeError("adam_step: parameter/gradient/state count mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Matrix& theta = *params[p];
        const Matrix& g = *grads[p];
        Matrix& m = state.first_moment[p];
        Matrix& v = state.second_moment[p];
        if (!theta.same_shape(g) || !theta.same_shape(m))
            throw ShapeError("adam_step: shape mismatch at slot " + std::to_string(p));
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gi = g.data()[i];
            m.data()[i] = state.beta1 * m.data()[i] + (1.0 - state.beta1) * gi;
            v.data()[i] = state.beta2 * v.data()[i] + (1.0 - state.beta2) * gi * gi;
            const double mhat = m.data()[i] / bc1;
            const double vhat = v.data()[i] / bc2;
            theta.data()[i] -= state.lr * (mhat / (std::sqrt(vhat) + state.epsilon) +
                                           state.weight_decay * theta.data()[i]);
        }
    }
}

}  // namespace drlora
