#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "drlora/errors.hpp"
#include "drlora/matrix.hpp"
#include "drlora/rng.hpp"

namespace drlora {

// Low-rank adapter with pre-allocated capacity r_max and a binary mask over
// rank dimensions. Only masked-in dimensions contribute to the forward pass;
// growth activates new dimensions without changing the function (fresh A rows
// are re-drawn, matching B columns are zero, so the new delta is exactly 0).
//
// Layout: a_factor is (r_max, d_in) with one rank dimension per row;
// b_factor is (d_out, r_max) with one rank dimension per column.
class MaskedLoraAdapter {
public:
    MaskedLoraAdapter() = default;

    MaskedLoraAdapter(std::size_t d_in, std::size_t d_out, std::size_t r_init,
                      std::size_t r_target, std::size_t r_max, double scaling, Rng& rng)
        : a_factor_(r_max, d_in),
          b_factor_(d_out, r_max),
          mask_(r_max, 0),
          scaling_(scaling),
          r_init_(r_init),
          r_target_(r_target),
          r_max_(r_max) {
        if (r_init > r_max || r_target > r_max)
            throw BudgetError("adapter: r_init/r_target exceed r_max");
        rng.fill_gaussian(a_factor_, kInitStd);
        for (std::size_t j = 0; j < r_init; ++j) mask_[j] = 1;
    }

    std::size_t d_in() const { return a_factor_.cols(); }
    std::size_t d_out() const { return b_factor_.rows(); }
    std::size_t r_max() const { return r_max_; }
    std::size_t r_init() const { return r_init_; }
    std::size_t r_target() const { return r_target_; }
    double scaling() const { return scaling_; }

    std::size_t active_rank() const {
        std::size_t r = 0;
        for (std::uint8_t m : mask_) r += m;
        return r;
    }

    bool dim_active(std::size_t j) const { return mask_[j] != 0; }
    const std::vector<std::uint8_t>& mask() const { return mask_; }

    Matrix& a_factor() { return a_factor_; }
    const Matrix& a_factor() const { return a_factor_; }
    Matrix& b_factor() { return b_factor_; }
    const Matrix& b_factor() const { return b_factor_; }

    // y = scaling * x * (masked A)^T * (masked B)^T; x is (batch, d_in).
    Matrix forward(const Matrix& x) const {
        if (x.cols() != d_in())
            throw ShapeError("adapter forward: input " + shape_str(x) + " vs d_in=" +
                             std::to_string(d_in()));
        Matrix y(x.rows(), d_out());
        std::vector<double> proj(x.rows());
        for (std::size_t j = 0; j < r_max_; ++j) {
            if (!mask_[j]) continue;
            for (std::size_t t = 0; t < x.rows(); ++t) {
                double s = 0.0;
                for (std::size_t c = 0; c < x.cols(); ++c) s += x(t, c) * a_factor_(j, c);
                proj[t] = s;
            }
            for (std::size_t t = 0; t < x.rows(); ++t) {
                const double zs = scaling_ * proj[t];
                for (std::size_t o = 0; o < d_out(); ++o) y(t, o) += zs * b_factor_(o, j);
            }
        }
        return y;
    }

    // Dense delta scaling * B[:,m] * A[m,:] as (d_out, d_in); test oracle and
    // the cheap path for materializing W + dW.
    Matrix effective_delta() const {
        Matrix delta(d_out(), d_in());
        for (std::size_t j = 0; j < r_max_; ++j) {
            if (!mask_[j]) continue;
            for (std::size_t o = 0; o < d_out(); ++o) {
                const double b = scaling_ * b_factor_(o, j);
                if (b == 0.0) continue;
                for (std::size_t c = 0; c < d_in(); ++c) delta(o, c) += b * a_factor_(j, c);
            }
        }
        return delta;
    }

    // Activates n more rank dimensions, lowest inactive index first. Fresh A
    // rows get a new Gaussian draw, fresh B columns are zeroed, so the forward
    // map is bit-identical at the moment of growth. Mask bits never clear, so
    // active rank is non-decreasing over a run.
    void grow(std::size_t n, Rng& rng) {
        if (n == 0) return;
        if (active_rank() + n > r_max_)
            throw BudgetError("adapter grow: rank " + std::to_string(active_rank()) + "+" +
                              std::to_string(n) + " exceeds r_max=" + std::to_string(r_max_));
        std::size_t left = n;
        for (std::size_t j = 0; j < r_max_ && left > 0; ++j) {
            if (mask_[j]) continue;
            mask_[j] = 1;
            for (std::size_t c = 0; c < d_in(); ++c)
                a_factor_(j, c) = kInitStd * rng.next_gaussian();
            for (std::size_t o = 0; o < d_out(); ++o) b_factor_(o, j) = 0.0;
            --left;
        }
    }

    // Checkpoint restore path; size must match the pre-allocated capacity.
    void restore_mask(const std::vector<std::uint8_t>& mask) {
        if (mask.size() != r_max_)
            throw IoError("adapter mask restore: size " + std::to_string(mask.size()) +
                          " vs r_max=" + std::to_string(r_max_));
        mask_ = mask;
    }

    static constexpr double kInitStd = 0.02;

private:
    Matrix a_factor_;
    Matrix b_factor_;
    std::vector<std::uint8_t> mask_;
    double scaling_ = 2.0;
    std::size_t r_init_ = 0;
    std::size_t r_target_ = 0;
    std::size_t r_max_ = 0;
};

}  // namespace drlora
