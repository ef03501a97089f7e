#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "drlora/errors.hpp"
#include "drlora/matrix.hpp"

namespace drlora {

// Central-difference validation of hand-derived gradients. Returns the max
// over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|).
// loss_fn must be a pure function of the parameter values.
inline double finite_diff_check(const std::function<double()>& loss_fn,
                                const std::vector<Matrix*>& params,
                                const std::vector<const Matrix*>& analytic_grads,
                                double epsilon) {
    if (epsilon <= 0.0) throw NumericError("finite_diff_check: epsilon must be > 0");
    if (params.size() != analytic_grads.size())
        throw ShapeError("finite_diff_check: param/grad count mismatch");
    double max_rel = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Matrix& theta = *params[p];
        const Matrix& g = *analytic_grads[p];
        if (!theta.same_shape(g))
            throw ShapeError("finite_diff_check: shape mismatch at slot " + std::to_string(p));
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double saved = theta.data()[i];
            theta.data()[i] = saved + epsilon;
            const double lp = loss_fn();
            theta.data()[i] = saved - epsilon;
            const double lm = loss_fn();
            theta.data()[i] = saved;
            if (!std::isfinite(lp) || !std::isfinite(lm))
                throw NumericError("finite_diff_check: non-finite loss");
            const double numeric = (lp - lm) / (2.0 * epsilon);
            const double rel = std::abs(g.data()[i] - numeric) /
                               std::max({1.0, std::abs(g.data()[i]), std::abs(numeric)});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace drlora
