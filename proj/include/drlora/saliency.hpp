#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "drlora/errors.hpp"
#include "drlora/matrix.hpp"
#include "drlora/moe.hpp"

namespace drlora {

// Step-level mean post-top-k routing weight per (layer, expert), zeros
// included for unselected experts. Rows of z sum to 1, so each layer's means
// sum to 1 as well.
inline Matrix batch_mean_weight(const RoutingTrace& trace) {
    if (trace.z.empty() || trace.z[0].rows() == 0)
        throw InputError("batch_mean_weight: empty trace");
    Matrix zbar(trace.z.size(), trace.z[0].cols());
    for (std::size_t l = 0; l < trace.z.size(); ++l) {
        const Matrix& z = trace.z[l];
        if (z.rows() == 0) throw InputError("batch_mean_weight: empty batch");
        for (std::size_t t = 0; t < z.rows(); ++t)
            for (std::size_t i = 0; i < z.cols(); ++i) zbar(l, i) += z(t, i);
        for (std::size_t i = 0; i < z.cols(); ++i)
            zbar(l, i) /= static_cast<double>(z.rows());
    }
    return zbar;
}

// One projection's share of a rank dimension's sensitivity: the gradient-
// weight product L1(grad_a .* a) * L1(grad_b .* b). A dimension only scores
// when both factor sides carry signal.
inline double rank_sensitivity(std::span<const double> a_row,
                               std::span<const double> a_grad_row,
                               std::span<const double> b_col,
                               std::span<const double> b_grad_col) {
    if (a_row.size() != a_grad_row.size() || b_col.size() != b_grad_col.size())
        throw ShapeError("rank_sensitivity: factor/grad length mismatch");
    double la = 0.0;
    for (std::size_t i = 0; i < a_row.size(); ++i) la += std::abs(a_grad_row[i] * a_row[i]);
    double lb = 0.0;
    for (std::size_t i = 0; i < b_col.size(); ++i) lb += std::abs(b_grad_col[i] * b_col[i]);
    return la * lb;
}

// Per-dim sensitivity of one adapter at dimension j. Inactive dims have no
// defined sensitivity.
inline double adapter_dim_sensitivity(const MaskedLoraAdapter& adapter,
                                      const AdapterGrads& grads, std::size_t j) {
    if (!adapter.dim_active(j))
        throw StateError("sensitivity queried for inactive rank dim " + std::to_string(j));
    const Matrix& a = adapter.a_factor();
    const Matrix& b = adapter.b_factor();
    std::vector<double> b_col(b.rows()), gb_col(b.rows());
    for (std::size_t o = 0; o < b.rows(); ++o) {
        b_col[o] = b(o, j);
        gb_col[o] = grads.b(o, j);
    }
    return rank_sensitivity(a.row(j), grads.a.row(j), b_col, gb_col);
}

// Flat (L, N, r_max) per-dim sensitivities plus the matching active mask.
struct SensitivitySnapshot {
    std::size_t layers = 0;
    std::size_t experts = 0;
    std::size_t r_max = 0;
    std::vector<double> s;               // zero at inactive dims
    std::vector<std::uint8_t> active;

    std::size_t index(std::size_t l, std::size_t i, std::size_t j) const {
        return (l * experts + i) * r_max + j;
    }
};

// Sums the up- and down-projection products per rank dimension: the two
// projections share one expert-level rank, so their signals add.
inline SensitivitySnapshot collect_sensitivities(const MoeNetwork& net,
                                                 const MoeGradients& grads) {
    const MoeConfig& cfg = net.config();
    SensitivitySnapshot snap;
    snap.layers = cfg.layers;
    snap.experts = cfg.experts;
    snap.r_max = cfg.r_max;
    snap.s.assign(cfg.layers * cfg.experts * cfg.r_max, 0.0);
    snap.active.assign(snap.s.size(), 0);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        for (std::size_t i = 0; i < cfg.experts; ++i) {
            const Expert& e = net.layer(l).experts[i];
            for (std::size_t j = 0; j < cfg.r_max; ++j) {
                if (!e.up.dim_active(j)) continue;
                const std::size_t idx = snap.index(l, i, j);
                snap.active[idx] = 1;
                snap.s[idx] = adapter_dim_sensitivity(e.up, grads.up_grads[l][i], j) +
                              adapter_dim_sensitivity(e.down, grads.down_grads[l][i], j);
            }
        }
    }
    return snap;
}

// L2 norm of the expert's concatenated adapter factor gradients; the local
// gradient intensity used by the covariance-gap diagnostic.
inline double expert_grad_intensity(const MoeGradients& grads, std::size_t l, std::size_t i) {
    const double s = frobenius_sq(grads.up_grads[l][i].a) + frobenius_sq(grads.up_grads[l][i].b) +
                     frobenius_sq(grads.down_grads[l][i].a) +
                     frobenius_sq(grads.down_grads[l][i].b);
    return std::sqrt(s);
}

// EMA tracker for routing frequency f and per-dim rank importance g. Both
// start at zero with no bias correction; warmup populates them before the
// first growth event reads a score.
class ExpertStatistics {
public:
    ExpertStatistics() = default;

    ExpertStatistics(std::size_t layers, std::size_t experts, std::size_t r_max, double beta,
                     double gamma)
        : layers_(layers),
          experts_(experts),
          r_max_(r_max),
          beta_(beta),
          gamma_(gamma),
          f_(layers * experts, 0.0),
          g_dims_(layers * experts * r_max, 0.0) {
        if (beta < 0.0 || beta >= 1.0) throw ConfigError("stats: need beta in [0,1)");
        if (gamma < 0.0) throw ConfigError("stats: need gamma >= 0");
    }

    std::size_t layers() const { return layers_; }
    std::size_t experts() const { return experts_; }
    std::size_t r_max() const { return r_max_; }
    double beta() const { return beta_; }
    double gamma() const { return gamma_; }
    std::uint64_t step_count() const { return step_count_; }

    double frequency(std::size_t l, std::size_t i) const { return f_[l * experts_ + i]; }
    double g_dim(std::size_t l, std::size_t i, std::size_t j) const {
        return g_dims_[(l * experts_ + i) * r_max_ + j];
    }

    // f <- beta f + (1-beta) zbar
    void update_frequency(const Matrix& zbar) {
        if (zbar.rows() != layers_ || zbar.cols() != experts_)
            throw ShapeError("update_frequency: zbar " + shape_str(zbar));
        for (std::size_t l = 0; l < layers_; ++l)
            for (std::size_t i = 0; i < experts_; ++i)
                f_[l * experts_ + i] =
                    beta_ * f_[l * experts_ + i] + (1.0 - beta_) * zbar(l, i);
        step_count_ += 1;
    }

    // Per-dim EMA over active dims; idle experts feed s=0, which decays their
    // importance instead of freezing it.
    void update_rank_importance(const SensitivitySnapshot& snap) {
        if (snap.layers != layers_ || snap.experts != experts_ || snap.r_max != r_max_)
            throw ShapeError("update_rank_importance: snapshot shape mismatch");
        for (std::size_t idx = 0; idx < g_dims_.size(); ++idx)
            if (snap.active[idx])
                g_dims_[idx] = beta_ * g_dims_[idx] + (1.0 - beta_) * snap.s[idx];
    }

    // Expert-level importance: mean of per-dim EMAs over the active dims.
    // Rank dims activate lowest-index-first, so the active set is [0, r).
    double expert_importance(std::size_t l, std::size_t i, std::size_t rank) const {
        if (rank == 0) return 0.0;
        double s = 0.0;
        for (std::size_t j = 0; j < rank; ++j) s += g_dim(l, i, j);
        return s / static_cast<double>(rank);
    }

    // S = f * g / (r + 1)^gamma
    Matrix saliency_score(const std::vector<std::vector<std::size_t>>& ranks) const {
        if (ranks.size() != layers_)
            throw ShapeError("saliency_score: rank matrix layer count");
        Matrix s(layers_, experts_);
        for (std::size_t l = 0; l < layers_; ++l) {
            if (ranks[l].size() != experts_)
                throw ShapeError("saliency_score: rank matrix expert count");
            for (std::size_t i = 0; i < experts_; ++i) {
                const double penalty =
                    std::pow(static_cast<double>(ranks[l][i]) + 1.0, gamma_);
                s(l, i) = frequency(l, i) * expert_importance(l, i, ranks[l][i]) / penalty;
            }
        }
        return s;
    }

    // Post-growth reset: importance restarts from zero, frequency persists.
    void reset_importance() { std::fill(g_dims_.begin(), g_dims_.end(), 0.0); }

    std::vector<double>& f_table() { return f_; }
    const std::vector<double>& f_table() const { return f_; }
    std::vector<double>& g_table() { return g_dims_; }
    const std::vector<double>& g_table() const { return g_dims_; }
    void set_step_count(std::uint64_t c) { step_count_ = c; }

private:
    std::size_t layers_ = 0;
    std::size_t experts_ = 0;
    std::size_t r_max_ = 0;
    double beta_ = 0.9;
    double gamma_ = 1.2;
    std::vector<double> f_;
    std::vector<double> g_dims_;
    std::uint64_t step_count_ = 0;
};

}  // namespace drlora
