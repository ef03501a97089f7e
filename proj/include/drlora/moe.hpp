#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "drlora/adapter.hpp"
#include "drlora/errors.hpp"
#include "drlora/matrix.hpp"
#include "drlora/ops.hpp"
#include "drlora/rng.hpp"

namespace drlora {

struct MoeConfig {
    std::size_t layers = 4;       // L
    std::size_t experts = 8;      // N per layer
    std::size_t top_k = 2;        // k active per token
    std::size_t d_model = 32;
    std::size_t d_expert = 64;
    std::size_t r_init = 8;
    std::size_t r_target = 16;
    std::size_t r_max = 32;
    double adapter_scaling = 2.0;  // alpha/r held constant so growth never rescales

    static constexpr std::size_t kProjectionsPerExpert = 2;  // up + down

    void validate() const {
        if (layers < 1 || experts < 1 || d_model < 1 || d_expert < 1)
            throw ConfigError("moe config: dims must be >= 1");
        if (top_k < 1 || top_k > experts)
            throw ConfigError("moe config: need 1 <= top_k <= experts");
        if (!(r_init <= r_target && r_target <= r_max))
            throw ConfigError("moe config: need r_init <= r_target <= r_max");
    }

    bool operator==(const MoeConfig&) const = default;
};

// One expert: frozen two-projection FFN plus its pair of growable adapters.
struct Expert {
    Matrix w_up;    // (d_expert, d_model), frozen after construction
    Matrix w_down;  // (d_model, d_expert), frozen after construction
    MaskedLoraAdapter up;
    MaskedLoraAdapter down;

    std::size_t active_rank() const { return up.active_rank(); }

    // y = (W_down + dW_down) * silu((W_up + dW_up) * x), with the deltas
    // applied through the masked low-rank path.
    Matrix forward(const Matrix& x) const {
        Matrix u = matmul_nt(x, w_up);
        add_scaled(u, up.forward(x));
        silu_inplace(u);
        Matrix y = matmul_nt(u, w_down);
        add_scaled(y, down.forward(u));
        return y;
    }
};

struct MoeLayer {
    Matrix router;  // (N, d_model)
    std::vector<Expert> experts;
};

// Per-layer dense (tokens, N) post-top-k weights for one forward pass; zero
// for unselected experts, rows sum to 1.
struct RoutingTrace {
    std::vector<Matrix> z;
};

struct ExpertCache {
    std::vector<std::size_t> tokens;  // batch rows routed here
    Matrix x;    // gathered inputs (T, d_model)
    Matrix u;    // pre-activation (T, d_expert)
    Matrix act;  // silu(u)
    Matrix y;    // expert output before z-weighting (T, d_model)
};

struct ForwardCache {
    bool valid = false;
    Matrix input;
    std::vector<Matrix> h;  // h[0] .. h[L]
    RoutingTrace trace;
    std::vector<std::vector<ExpertCache>> experts;  // [layer][expert]
    Matrix prediction;
};

struct AdapterGrads {
    Matrix a;
    Matrix b;
};

struct MoeGradients {
    Matrix in_head;
    Matrix out_head;
    std::vector<Matrix> router;                       // per layer
    std::vector<std::vector<AdapterGrads>> up_grads;  // [layer][expert]
    std::vector<std::vector<AdapterGrads>> down_grads;
};

// Experts removed from routing candidacy, per layer (analysis masking).
using ExpertMaskSet = std::vector<std::vector<std::uint8_t>>;

class MoeNetwork {
public:
    MoeNetwork() = default;

    MoeNetwork(const MoeConfig& config, std::uint64_t seed) : config_(config) {
        config.validate();
        Rng init = Rng(seed).derive("net-init");
        in_head_ = Matrix(config.d_model, config.d_model);
        out_head_ = Matrix(config.d_model, config.d_model);
        const double head_std = 1.0 / std::sqrt(static_cast<double>(config.d_model));
        init.fill_gaussian(in_head_, head_std);
        init.fill_gaussian(out_head_, head_std);
        layers_.resize(config.layers);
        for (std::size_t l = 0; l < config.layers; ++l) {
            MoeLayer& layer = layers_[l];
            layer.router = Matrix(config.experts, config.d_model);
            init.fill_gaussian(layer.router, head_std);
            layer.experts.resize(config.experts);
            for (std::size_t i = 0; i < config.experts; ++i) {
                Expert& e = layer.experts[i];
                e.w_up = Matrix(config.d_expert, config.d_model);
                e.w_down = Matrix(config.d_model, config.d_expert);
                init.fill_gaussian(e.w_up, head_std);
                init.fill_gaussian(e.w_down, 1.0 / std::sqrt(static_cast<double>(config.d_expert)));
                e.up = MaskedLoraAdapter(config.d_model, config.d_expert, config.r_init,
                                         config.r_target, config.r_max,
                                         config.adapter_scaling, init);
                e.down = MaskedLoraAdapter(config.d_expert, config.d_model, config.r_init,
                                           config.r_target, config.r_max,
                                           config.adapter_scaling, init);
            }
        }
    }

    const MoeConfig& config() const { return config_; }
    Matrix& in_head() { return in_head_; }
    const Matrix& in_head() const { return in_head_; }
    Matrix& out_head() { return out_head_; }
    const Matrix& out_head() const { return out_head_; }
    std::vector<MoeLayer>& layers() { return layers_; }
    const std::vector<MoeLayer>& layers() const { return layers_; }
    MoeLayer& layer(std::size_t l) { return layers_[l]; }
    const MoeLayer& layer(std::size_t l) const { return layers_[l]; }

    // (N_layers, N_experts) matrix of active ranks.
    std::vector<std::vector<std::size_t>> rank_matrix() const {
        std::vector<std::vector<std::size_t>> out(config_.layers);
        for (std::size_t l = 0; l < config_.layers; ++l) {
            out[l].resize(config_.experts);
            for (std::size_t i = 0; i < config_.experts; ++i)
                out[l][i] = layers_[l].experts[i].active_rank();
        }
        return out;
    }

    // Per-token routing for one layer: logits = router * x, then top-k with
    // renormalization over the selected set. Masked-out experts never enter
    // candidacy; with s survivors, selection is over min(k, s).
    Matrix route(std::size_t layer_idx, const Matrix& x,
                 const std::vector<std::uint8_t>* masked = nullptr) const {
        const MoeLayer& layer = layers_[layer_idx];
        if (x.cols() != config_.d_model)
            throw ShapeError("route: input " + shape_str(x));
        Matrix logits = matmul_nt(x, layer.router);  // (B, N)
        Matrix z(x.rows(), config_.experts);
        std::vector<std::size_t> survivors;
        survivors.reserve(config_.experts);
        for (std::size_t i = 0; i < config_.experts; ++i)
            if (!masked || !(*masked)[i]) survivors.push_back(i);
        if (survivors.empty()) throw InputError("route: no expert survives masking");
        const std::size_t k = std::min(config_.top_k, survivors.size());
        std::vector<double> sub(survivors.size());
        for (std::size_t t = 0; t < x.rows(); ++t) {
            for (std::size_t s = 0; s < survivors.size(); ++s) sub[s] = logits(t, survivors[s]);
            TopkResult gate = softmax_topk(sub, k);
            for (std::size_t s = 0; s < k; ++s)
                z(t, survivors[gate.indices[s]]) = gate.weights[s];
        }
        return z;
    }

    // Full stack with residual connections around each MoE block.
    ForwardCache forward(const Matrix& x, const ExpertMaskSet* masking = nullptr) const {
        if (x.cols() != config_.d_model)
            throw ShapeError("forward: input " + shape_str(x));
        ForwardCache cache;
        cache.input = x;
        cache.h.reserve(config_.layers + 1);
        cache.h.push_back(matmul_nt(x, in_head_));
        cache.trace.z.reserve(config_.layers);
        cache.experts.resize(config_.layers);
        for (std::size_t l = 0; l < config_.layers; ++l) {
            const Matrix& hin = cache.h.back();
            Matrix z = route(l, hin, masking ? &(*masking)[l] : nullptr);
            Matrix hout = hin;
            cache.experts[l].resize(config_.experts);
            for (std::size_t i = 0; i < config_.experts; ++i) {
                ExpertCache& ec = cache.experts[l][i];
                for (std::size_t t = 0; t < hin.rows(); ++t)
                    if (z(t, i) > 0.0) ec.tokens.push_back(t);
                if (ec.tokens.empty()) continue;
                ec.x = Matrix(ec.tokens.size(), config_.d_model);
                for (std::size_t r = 0; r < ec.tokens.size(); ++r)
                    for (std::size_t c = 0; c < config_.d_model; ++c)
                        ec.x(r, c) = hin(ec.tokens[r], c);
                const Expert& e = layers_[l].experts[i];
                ec.u = matmul_nt(ec.x, e.w_up);
                add_scaled(ec.u, e.up.forward(ec.x));
                ec.act = ec.u;
                silu_inplace(ec.act);
                ec.y = matmul_nt(ec.act, e.w_down);
                add_scaled(ec.y, e.down.forward(ec.act));
                for (std::size_t r = 0; r < ec.tokens.size(); ++r) {
                    const std::size_t t = ec.tokens[r];
                    const double w = z(t, i);
                    for (std::size_t c = 0; c < config_.d_model; ++c)
                        hout(t, c) += w * ec.y(r, c);
                }
            }
            cache.trace.z.push_back(std::move(z));
            cache.h.push_back(std::move(hout));
        }
        cache.prediction = matmul_nt(cache.h.back(), out_head_);
        cache.valid = true;
        return cache;
    }

    // Hand-derived reverse pass. Gradients flow through the gate weights to
    // the inputs even when the router is frozen; router *weight* gradients are
    // always filled and the trainer decides whether to apply them. Inactive
    // adapter rank dimensions get exactly zero gradient.
    MoeGradients backward(const ForwardCache& cache, const Matrix& prediction_grad) const {
        if (!cache.valid) throw StateError("backward called without a forward pass");
        if (!prediction_grad.same_shape(cache.prediction))
            throw ShapeError("backward: prediction grad " + shape_str(prediction_grad));
        MoeGradients grads;
        grads.in_head = Matrix(config_.d_model, config_.d_model);
        grads.out_head = matmul_tn(prediction_grad, cache.h.back());
        grads.router.assign(config_.layers, Matrix(config_.experts, config_.d_model));
        grads.up_grads.resize(config_.layers);
        grads.down_grads.resize(config_.layers);

        Matrix dh = matmul(prediction_grad, out_head_);  // d/dh[L]
        for (std::size_t l = config_.layers; l-- > 0;) {
            const MoeLayer& layer = layers_[l];
            const Matrix& hin = cache.h[l];
            const Matrix& z = cache.trace.z[l];
            Matrix dh_in = dh;  // residual path
            grads.up_grads[l].resize(config_.experts);
            grads.down_grads[l].resize(config_.experts);
            Matrix dgate(z.rows(), config_.experts);  // dL/dz, selected entries
            for (std::size_t i = 0; i < config_.experts; ++i) {
                const Expert& e = layer.experts[i];
                const ExpertCache& ec = cache.experts[l][i];
                AdapterGrads& ug = grads.up_grads[l][i];
                AdapterGrads& dg = grads.down_grads[l][i];
                ug.a = Matrix(e.up.r_max(), config_.d_model);
                ug.b = Matrix(config_.d_expert, e.up.r_max());
                dg.a = Matrix(e.down.r_max(), config_.d_expert);
                dg.b = Matrix(config_.d_model, e.down.r_max());
                if (ec.tokens.empty()) continue;  // never routed: all-zero grads

                const std::size_t T = ec.tokens.size();
                Matrix dyw(T, config_.d_model);  // z-weighted output grad
                for (std::size_t r = 0; r < T; ++r) {
                    const std::size_t t = ec.tokens[r];
                    const double w = z(t, i);
                    double zdot = 0.0;
                    for (std::size_t c = 0; c < config_.d_model; ++c) {
                        dyw(r, c) = w * dh(t, c);
                        zdot += dh(t, c) * ec.y(r, c);
                    }
                    dgate(t, i) = zdot;
                }
                // down projection: y = act * W_down^T + down(act)
                Matrix dact = matmul(dyw, e.w_down);
                adapter_backward(e.down, ec.act, dyw, dg.a, dg.b, &dact);
                // silu
                Matrix du(T, config_.d_expert);
                for (std::size_t r = 0; r < T; ++r)
                    for (std::size_t c = 0; c < config_.d_expert; ++c)
                        du(r, c) = dact(r, c) * silu_grad(ec.u(r, c));
                // up projection: u = x * W_up^T + up(x)
                Matrix dx = matmul(du, e.w_up);
                adapter_backward(e.up, ec.x, du, ug.a, ug.b, &dx);
                for (std::size_t r = 0; r < T; ++r) {
                    const std::size_t t = ec.tokens[r];
                    for (std::size_t c = 0; c < config_.d_model; ++c)
                        dh_in(t, c) += dx(r, c);
                }
            }
            // gate backward: softmax over each token's selected set
            for (std::size_t t = 0; t < z.rows(); ++t) {
                double inner = 0.0;
                for (std::size_t i = 0; i < config_.experts; ++i)
                    if (z(t, i) > 0.0) inner += z(t, i) * dgate(t, i);
                for (std::size_t i = 0; i < config_.experts; ++i) {
                    if (z(t, i) <= 0.0) continue;
                    const double dlogit = z(t, i) * (dgate(t, i) - inner);
                    for (std::size_t c = 0; c < config_.d_model; ++c) {
                        grads.router[l](i, c) += dlogit * hin(t, c);
                        dh_in(t, c) += dlogit * layer.router(i, c);
                    }
                }
            }
            dh = std::move(dh_in);
        }
        grads.in_head = matmul_tn(dh, cache.input);
        return grads;
    }

    // Trainable parameter registry in a fixed order: heads, adapter factors,
    // then routers when requested. Gradients align via collect_gradients.
    std::vector<Matrix*> collect_parameters(bool include_router) {
        std::vector<Matrix*> out{&in_head_, &out_head_};
        for (auto& layer : layers_)
            for (auto& e : layer.experts) {
                out.push_back(&e.up.a_factor());
                out.push_back(&e.up.b_factor());
                out.push_back(&e.down.a_factor());
                out.push_back(&e.down.b_factor());
            }
        if (include_router)
            for (auto& layer : layers_) out.push_back(&layer.router);
        return out;
    }

    static std::vector<const Matrix*> collect_gradients(const MoeGradients& g,
                                                        bool include_router) {
        std::vector<const Matrix*> out{&g.in_head, &g.out_head};
        for (std::size_t l = 0; l < g.up_grads.size(); ++l)
            for (std::size_t i = 0; i < g.up_grads[l].size(); ++i) {
                out.push_back(&g.up_grads[l][i].a);
                out.push_back(&g.up_grads[l][i].b);
                out.push_back(&g.down_grads[l][i].a);
                out.push_back(&g.down_grads[l][i].b);
            }
        if (include_router)
            for (const auto& r : g.router) out.push_back(&r);
        return out;
    }

private:
    // Gradients of out = s * x * (masked A)^T * (masked B)^T wrt A, B and x.
    static void adapter_backward(const MaskedLoraAdapter& ad, const Matrix& x,
                                 const Matrix& dout, Matrix& da, Matrix& db, Matrix* dx) {
        const double s = ad.scaling();
        const Matrix& a = ad.a_factor();
        const Matrix& b = ad.b_factor();
        const std::size_t T = x.rows();
        for (std::size_t j = 0; j < ad.r_max(); ++j) {
            if (!ad.dim_active(j)) continue;
            for (std::size_t r = 0; r < T; ++r) {
                double proj = 0.0;  // (x a_j)
                for (std::size_t c = 0; c < x.cols(); ++c) proj += x(r, c) * a(j, c);
                double back = 0.0;  // (dout b_j)
                for (std::size_t o = 0; o < dout.cols(); ++o) back += dout(r, o) * b(o, j);
                for (std::size_t o = 0; o < dout.cols(); ++o)
                    db(o, j) += s * dout(r, o) * proj;
                const double sb = s * back;
                for (std::size_t c = 0; c < x.cols(); ++c) {
                    da(j, c) += sb * x(r, c);
                    if (dx) (*dx)(r, c) += sb * a(j, c);
                }
            }
        }
    }

    MoeConfig config_;
    Matrix in_head_;
    Matrix out_head_;
    std::vector<MoeLayer> layers_;
};

}  // namespace drlora
