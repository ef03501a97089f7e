#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "drlora/allocator.hpp"
#include "drlora/checkpoint.hpp"
#include "drlora/errors.hpp"
#include "drlora/gradcheck.hpp"
#include "drlora/moe.hpp"
#include "drlora/ops.hpp"
#include "drlora/optim.hpp"
#include "drlora/runlog.hpp"
#include "drlora/saliency.hpp"
#include "drlora/task.hpp"

namespace drlora {

enum class Method { kDrLora, kFixedLora, kRandom, kProportional, kGlobalGreedy };
enum class RouterPolicy { kFrozen, kUnfreezeAfterWarmup };
enum class LrSchedule { kLinearWarmup, kConstant };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::kDrLora: return "dr-lora";
        case Method::kFixedLora: return "fixed-lora";
        case Method::kRandom: return "random";
        case Method::kProportional: return "proportional";
        case Method::kGlobalGreedy: return "global-greedy";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    if (s == "dr-lora") return Method::kDrLora;
    if (s == "fixed-lora") return Method::kFixedLora;
    if (s == "random") return Method::kRandom;
    if (s == "proportional") return Method::kProportional;
    if (s == "global-greedy") return Method::kGlobalGreedy;
    throw ConfigError("unknown method '" + s + "'");
}

inline std::string to_string(RouterPolicy p) {
    return p == RouterPolicy::kFrozen ? "frozen" : "unfreeze-after-warmup";
}

inline RouterPolicy router_policy_from_string(const std::string& s) {
    if (s == "frozen") return RouterPolicy::kFrozen;
    if (s == "unfreeze-after-warmup") return RouterPolicy::kUnfreezeAfterWarmup;
    throw ConfigError("unknown router policy '" + s + "'");
}

inline std::string to_string(LrSchedule s) {
    return s == LrSchedule::kLinearWarmup ? "linear-warmup" : "constant";
}

inline LrSchedule lr_schedule_from_string(const std::string& s) {
    if (s == "linear-warmup") return LrSchedule::kLinearWarmup;
    if (s == "constant") return LrSchedule::kConstant;
    throw ConfigError("unknown lr schedule '" + s + "'");
}

struct TrainConfig {
    MoeConfig model;
    TaskConfig task;
    std::uint64_t task_seed = 7;

    std::size_t total_steps = 2000;
    std::size_t t_grow = 200;
    double warmup_ratio = 0.03;
    std::size_t tail_guard = 200;
    double p_grow = 0.1;

    double beta = 0.9;   // EMA decay for f and g
    double gamma = 1.2;  // rank penalty exponent

    double lr = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    LrSchedule lr_schedule = LrSchedule::kLinearWarmup;

    std::size_t batch_size = 64;
    std::uint64_t seed = 1;
    Method method = Method::kDrLora;
    RouterPolicy router_policy = RouterPolicy::kUnfreezeAfterWarmup;
    std::size_t eval_interval = 200;
    std::size_t eval_samples = 512;
    std::uint64_t eval_seed = 1234;
    bool log_step_stats = true;  // per-step (zbar, q) stream for diagnostics

    std::size_t warmup_steps() const {
        return static_cast<std::size_t>(warmup_ratio * static_cast<double>(total_steps));
    }

    GrowthSchedule growth_schedule() const {
        GrowthSchedule s;
        s.total_steps = total_steps;
        s.warmup_steps = warmup_steps();
        s.tail_guard = tail_guard;
        s.t_grow = t_grow;
        s.p_grow = p_grow;
        s.n_experts = model.experts;
        s.r_init = model.r_init;
        s.r_target = model.r_target;
        s.r_max = model.r_max;
        return s;
    }

    void validate() const {
        model.validate();
        if (total_steps < 1) throw ConfigError("train: total_steps must be >= 1");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (beta < 0.0 || beta >= 1.0) throw ConfigError("train: need beta in [0,1)");
        if (gamma < 0.0) throw ConfigError("train: need gamma >= 0");
        if (warmup_ratio < 0.0 || warmup_ratio >= 1.0)
            throw ConfigError("train: need warmup_ratio in [0,1)");
        if (lr <= 0.0) throw ConfigError("train: lr must be > 0");
        if (method != Method::kFixedLora) growth_schedule().validate();
        if (task.dim != model.d_model)
            throw ConfigError("train: task dim must equal d_model");
    }

    bool operator==(const TrainConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const TaskConfig& t) {
    j = nlohmann::json{{"clusters", t.clusters},
                       {"dim", t.dim},
                       {"center_scale", t.center_scale},
                       {"input_noise_std", t.input_noise_std},
                       {"target_noise_std", t.target_noise_std},
                       {"cluster_weights", t.cluster_weights}};
}

inline void from_json(const nlohmann::json& j, TaskConfig& t) {
    t.clusters = j.at("clusters").get<std::size_t>();
    t.dim = j.at("dim").get<std::size_t>();
    t.center_scale = j.at("center_scale").get<double>();
    t.input_noise_std = j.at("input_noise_std").get<double>();
    t.target_noise_std = j.at("target_noise_std").get<double>();
    t.cluster_weights = j.at("cluster_weights").get<std::vector<double>>();
}

inline void to_json(nlohmann::json& j, const MoeConfig& m) {
    j = nlohmann::json{{"layers", m.layers},   {"experts", m.experts},
                       {"top_k", m.top_k},     {"d_model", m.d_model},
                       {"d_expert", m.d_expert}, {"r_init", m.r_init},
                       {"r_target", m.r_target}, {"r_max", m.r_max},
                       {"adapter_scaling", m.adapter_scaling}};
}

inline void from_json(const nlohmann::json& j, MoeConfig& m) {
    m.layers = j.at("layers").get<std::size_t>();
    m.experts = j.at("experts").get<std::size_t>();
    m.top_k = j.at("top_k").get<std::size_t>();
    m.d_model = j.at("d_model").get<std::size_t>();
    m.d_expert = j.at("d_expert").get<std::size_t>();
    m.r_init = j.at("r_init").get<std::size_t>();
    m.r_target = j.at("r_target").get<std::size_t>();
    m.r_max = j.at("r_max").get<std::size_t>();
    m.adapter_scaling = j.at("adapter_scaling").get<double>();
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"model", c.model},
                       {"task", c.task},
                       {"task_seed", c.task_seed},
                       {"total_steps", c.total_steps},
                       {"t_grow", c.t_grow},
                       {"warmup_ratio", c.warmup_ratio},
                       {"tail_guard", c.tail_guard},
                       {"p_grow", c.p_grow},
                       {"beta", c.beta},
                       {"gamma", c.gamma},
                       {"lr", c.lr},
                       {"adam_beta1", c.adam_beta1},
                       {"adam_beta2", c.adam_beta2},
                       {"adam_eps", c.adam_eps},
                       {"weight_decay", c.weight_decay},
                       {"lr_schedule", to_string(c.lr_schedule)},
                       {"batch_size", c.batch_size},
                       {"seed", c.seed},
                       {"method", to_string(c.method)},
                       {"router_policy", to_string(c.router_policy)},
                       {"eval_interval", c.eval_interval},
                       {"eval_samples", c.eval_samples},
                       {"eval_seed", c.eval_seed},
                       {"log_step_stats", c.log_step_stats}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.model = j.at("model").get<MoeConfig>();
    c.task = j.at("task").get<TaskConfig>();
    c.task_seed = j.at("task_seed").get<std::uint64_t>();
    c.total_steps = j.at("total_steps").get<std::size_t>();
    c.t_grow = j.at("t_grow").get<std::size_t>();
    c.warmup_ratio = j.at("warmup_ratio").get<double>();
    c.tail_guard = j.at("tail_guard").get<std::size_t>();
    c.p_grow = j.at("p_grow").get<double>();
    c.beta = j.at("beta").get<double>();
    c.gamma = j.at("gamma").get<double>();
    c.lr = j.at("lr").get<double>();
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.adam_eps = j.at("adam_eps").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.lr_schedule = lr_schedule_from_string(j.at("lr_schedule").get<std::string>());
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.method = method_from_string(j.at("method").get<std::string>());
    c.router_policy = router_policy_from_string(j.at("router_policy").get<std::string>());
    c.eval_interval = j.at("eval_interval").get<std::size_t>();
    c.eval_samples = j.at("eval_samples").get<std::size_t>();
    c.eval_seed = j.at("eval_seed").get<std::uint64_t>();
    c.log_step_stats = j.at("log_step_stats").get<bool>();
}

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Mean loss and cluster-map accuracy on a fresh seeded eval set, disjoint
// from every training stream.
inline EvalResult evaluate(const MoeNetwork& net, const SyntheticTaskGen& gen, std::size_t n,
                           std::uint64_t eval_seed, const ExpertMaskSet* masking = nullptr) {
    if (n < 1) throw InputError("evaluate: n must be >= 1");
    const std::uint64_t stream = Rng(eval_seed).derive("eval-batch").key();
    auto batch = gen.sample(n, stream);
    auto cache = net.forward(batch.inputs, masking);
    EvalResult out;
    out.loss = mse_loss(cache.prediction, batch.targets);
    std::size_t hits = 0;
    for (std::size_t t = 0; t < n; ++t)
        if (gen.nearest_map(batch.inputs, t, cache.prediction, t) == batch.cluster_ids[t])
            ++hits;
    out.accuracy = static_cast<double>(hits) / static_cast<double>(n);
    return out;
}

using StepObserver = std::function<void(std::size_t step, const MoeNetwork&)>;

// Owns one full training run: warmup with frozen router, per-step statistics,
// scheduled growth events, AdamW updates, eval, checkpointing. All randomness
// is drawn from counter-based streams keyed by (seed, purpose, step), so a
// resumed run replays the exact remaining stream.
class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        MoeConfig model_cfg = cfg_.model;
        if (cfg_.method == Method::kFixedLora) model_cfg.r_init = model_cfg.r_target;
        net_ = MoeNetwork(model_cfg, cfg_.seed);
        gen_ = SyntheticTaskGen(cfg_.task, cfg_.task_seed);
        stats_ = ExpertStatistics(model_cfg.layers, model_cfg.experts, model_cfg.r_max,
                                  cfg_.beta, cfg_.gamma);
        if (cfg_.method != Method::kFixedLora) event_steps_ = schedule_events(cfg_.growth_schedule());
        init_optimizers();
        log_.config = cfg_;
        log_.method = to_string(cfg_.method);
        log_.seed = cfg_.seed;
        log_.layers = model_cfg.layers;
        log_.experts = model_cfg.experts;
        log_.initial_ranks = net_.rank_matrix();
        next_step_ = 1;
    }

    const TrainConfig& config() const { return cfg_; }
    const MoeNetwork& network() const { return net_; }
    MoeNetwork& network() { return net_; }
    const ExpertStatistics& stats() const { return stats_; }
    const SyntheticTaskGen& generator() const { return gen_; }
    const RunLog& log() const { return log_; }
    std::size_t next_step() const { return next_step_; }

    // Runs every remaining step and returns the completed log.
    const RunLog& run(const StepObserver& observer = {}) {
        for (std::size_t t = next_step_; t <= cfg_.total_steps; ++t) {
            step(t);
            if (observer) observer(t, net_);
        }
        next_step_ = cfg_.total_steps + 1;
        finalize_log();
        return log_;
    }

    // Runs steps until (and including) `until`, for checkpoint/resume tests.
    void run_until(std::size_t until, const StepObserver& observer = {}) {
        for (std::size_t t = next_step_; t <= std::min(until, cfg_.total_steps); ++t) {
            step(t);
            if (observer) observer(t, net_);
            next_step_ = t + 1;
        }
        if (next_step_ > cfg_.total_steps) finalize_log();
    }

    double learning_rate_at(std::size_t t) const {
        const std::size_t warm = cfg_.warmup_steps();
        if (cfg_.lr_schedule == LrSchedule::kConstant) return cfg_.lr;
        if (warm > 0 && t <= warm)
            return cfg_.lr * static_cast<double>(t) / static_cast<double>(warm);
        const double denom = static_cast<double>(cfg_.total_steps - warm);
        return denom <= 0.0 ? cfg_.lr
                            : cfg_.lr * static_cast<double>(cfg_.total_steps - t) / denom;
    }

    void save_checkpoint(const std::string& path) const {
        Checkpoint ck;
        ck.put_json("config", nlohmann::json(cfg_));
        ck.put_u64("next_step", next_step_);
        ck.put_u64("seed", cfg_.seed);
        ck.put_matrix("net.in_head", net_.in_head());
        ck.put_matrix("net.out_head", net_.out_head());
        for (std::size_t l = 0; l < net_.layers().size(); ++l) {
            const auto prefix = "net.layer" + std::to_string(l);
            ck.put_matrix(prefix + ".router", net_.layer(l).router);
            for (std::size_t i = 0; i < net_.layer(l).experts.size(); ++i) {
                const auto& e = net_.layer(l).experts[i];
                const auto ep = prefix + ".expert" + std::to_string(i);
                ck.put_matrix(ep + ".w_up", e.w_up);
                ck.put_matrix(ep + ".w_down", e.w_down);
                ck.put_matrix(ep + ".up.a", e.up.a_factor());
                ck.put_matrix(ep + ".up.b", e.up.b_factor());
                ck.put_u8(ep + ".up.mask", e.up.mask());
                ck.put_matrix(ep + ".down.a", e.down.a_factor());
                ck.put_matrix(ep + ".down.b", e.down.b_factor());
                ck.put_u8(ep + ".down.mask", e.down.mask());
            }
        }
        ck.put_f64("stats.f", stats_.f_table());
        ck.put_f64("stats.g", stats_.g_table());
        ck.put_u64("stats.steps", stats_.step_count());
        save_optimizer(ck, "opt.main", opt_main_);
        save_optimizer(ck, "opt.router", opt_router_);
        ck.put_text("log", log_.to_ndjson());
        ck.save(path);
    }

    static Trainer load_checkpoint(const std::string& path) {
        Checkpoint ck = Checkpoint::load(path);
        TrainConfig cfg = ck.get_json("config").get<TrainConfig>();
        Trainer tr(cfg);
        tr.next_step_ = static_cast<std::size_t>(ck.get_u64("next_step"));
        tr.net_.in_head() = ck.get_matrix("net.in_head");
        tr.net_.out_head() = ck.get_matrix("net.out_head");
        for (std::size_t l = 0; l < tr.net_.layers().size(); ++l) {
            const auto prefix = "net.layer" + std::to_string(l);
            tr.net_.layer(l).router = ck.get_matrix(prefix + ".router");
            for (std::size_t i = 0; i < tr.net_.layer(l).experts.size(); ++i) {
                auto& e = tr.net_.layer(l).experts[i];
                const auto ep = prefix + ".expert" + std::to_string(i);
                e.w_up = ck.get_matrix(ep + ".w_up");
                e.w_down = ck.get_matrix(ep + ".w_down");
                e.up.a_factor() = ck.get_matrix(ep + ".up.a");
                e.up.b_factor() = ck.get_matrix(ep + ".up.b");
                e.up.restore_mask(ck.get_u8(ep + ".up.mask"));
                e.down.a_factor() = ck.get_matrix(ep + ".down.a");
                e.down.b_factor() = ck.get_matrix(ep + ".down.b");
                e.down.restore_mask(ck.get_u8(ep + ".down.mask"));
            }
        }
        tr.stats_.f_table() = ck.get_f64("stats.f");
        tr.stats_.g_table() = ck.get_f64("stats.g");
        tr.stats_.set_step_count(ck.get_u64("stats.steps"));
        tr.load_optimizer(ck, "opt.main", tr.opt_main_);
        tr.load_optimizer(ck, "opt.router", tr.opt_router_);
        tr.log_ = RunLog::from_ndjson(ck.get_text("log"));
        tr.event_index_ = 0;
        while (tr.event_index_ < tr.event_steps_.size() &&
               tr.event_steps_[tr.event_index_] < tr.next_step_)
            tr.event_index_ += 1;
        return tr;
    }

    // Network-only load for post-hoc analysis; the stored model geometry must
    // match the expectation.
    static MoeNetwork load_network(const std::string& path, const MoeConfig& expect) {
        Checkpoint ck = Checkpoint::load(path);
        TrainConfig cfg = ck.get_json("config").get<TrainConfig>();
        if (!(cfg.model == expect))
            throw ConfigError("checkpoint model config does not match expectation");
        Trainer tr = load_checkpoint(path);
        return std::move(tr.net_);
    }

private:
    // Registries are rebuilt on demand (fixed order) so Trainer stays movable
    // without dangling parameter pointers.
    std::vector<Matrix*> router_params() {
        std::vector<Matrix*> out;
        for (auto& layer : net_.layers()) out.push_back(&layer.router);
        return out;
    }

    void init_optimizers() {
        opt_main_ = OptimizerState{};
        opt_main_.beta1 = cfg_.adam_beta1;
        opt_main_.beta2 = cfg_.adam_beta2;
        opt_main_.epsilon = cfg_.adam_eps;
        opt_main_.weight_decay = cfg_.weight_decay;
        adam_init(opt_main_, net_.collect_parameters(false));
        opt_router_ = opt_main_;
        adam_init(opt_router_, router_params());
    }

    void save_optimizer(Checkpoint& ck, const std::string& prefix,
                        const OptimizerState& st) const {
        ck.put_u64(prefix + ".step", st.step);
        for (std::size_t p = 0; p < st.first_moment.size(); ++p) {
            ck.put_matrix(prefix + ".m" + std::to_string(p), st.first_moment[p]);
            ck.put_matrix(prefix + ".v" + std::to_string(p), st.second_moment[p]);
        }
    }

    void load_optimizer(const Checkpoint& ck, const std::string& prefix, OptimizerState& st) {
        st.step = ck.get_u64(prefix + ".step");
        for (std::size_t p = 0; p < st.first_moment.size(); ++p) {
            st.first_moment[p] = ck.get_matrix(prefix + ".m" + std::to_string(p));
            st.second_moment[p] = ck.get_matrix(prefix + ".v" + std::to_string(p));
        }
    }

    double pinned_batch_loss() const {
        const std::uint64_t stream = Rng(cfg_.seed).derive("probe").key();
        auto probe = gen_.sample(cfg_.batch_size, stream);
        auto cache = net_.forward(probe.inputs);
        return mse_loss(cache.prediction, probe.targets);
    }

    void step(std::size_t t) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr_t = learning_rate_at(t);
        const std::uint64_t stream = Rng(cfg_.seed).derive("data", t).key();
        auto batch = gen_.sample(cfg_.batch_size, stream);
        auto cache = net_.forward(batch.inputs);
        const double loss = mse_loss(cache.prediction, batch.targets);
        if (!std::isfinite(loss))
            throw NumericError("non-finite training loss at step " + std::to_string(t));
        auto grads = net_.backward(cache, mse_loss_grad(cache.prediction, batch.targets));

        Matrix zbar = batch_mean_weight(cache.trace);
        stats_.update_frequency(zbar);
        stats_.update_rank_importance(collect_sensitivities(net_, grads));

        StepRecord rec{t, loss, lr_t, {}, {}};
        if (cfg_.log_step_stats) {
            rec.zbar.assign(zbar.data().begin(), zbar.data().end());
            rec.q.reserve(zbar.size());
            for (std::size_t l = 0; l < log_.layers; ++l)
                for (std::size_t i = 0; i < log_.experts; ++i)
                    rec.q.push_back(expert_grad_intensity(grads, l, i));
        }
        log_.steps.push_back(std::move(rec));

        opt_main_.lr = lr_t;
        adam_step(net_.collect_parameters(false), MoeNetwork::collect_gradients(grads, false),
                  opt_main_);
        const bool router_trainable = cfg_.router_policy == RouterPolicy::kUnfreezeAfterWarmup &&
                                      t > cfg_.warmup_steps();
        if (router_trainable) {
            opt_router_.lr = lr_t;
            std::vector<const Matrix*> rg;
            for (const auto& r : grads.router) rg.push_back(&r);
            adam_step(router_params(), rg, opt_router_);
        }

        if (event_index_ < event_steps_.size() && event_steps_[event_index_] == t)
            growth_event(t);

        if (cfg_.eval_interval > 0 && t % cfg_.eval_interval == 0 && t != cfg_.total_steps) {
            auto ev = evaluate(net_, gen_, cfg_.eval_samples, cfg_.eval_seed);
            log_.evals.push_back({t, ev.loss, ev.accuracy});
        }
        log_.wall_ms.push_back(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count());
        next_step_ = t + 1;
    }

    void growth_event(std::size_t t) {
        const GrowthSchedule sched = cfg_.growth_schedule();
        AllocationInputs in;
        in.step = t;
        in.ranks = net_.rank_matrix();
        in.saliency = stats_.saliency_score(in.ranks);
        in.r_init = cfg_.model.r_init;
        in.r_target = cfg_.model.r_target;
        in.r_max = cfg_.model.r_max;
        in.p_grow = cfg_.p_grow;
        in.quota = sched.quota();
        in.final_event = event_index_ + 1 == event_steps_.size();

        EventRecord rec;
        rec.step = t;
        rec.pinned_loss_before = pinned_batch_loss();
        rec.f = stats_.f_table();
        rec.g.reserve(log_.layers * log_.experts);
        rec.saliency.assign(in.saliency.data().begin(), in.saliency.data().end());
        for (std::size_t l = 0; l < log_.layers; ++l)
            for (std::size_t i = 0; i < log_.experts; ++i)
                rec.g.push_back(stats_.expert_importance(l, i, in.ranks[l][i]));

        std::vector<AllocationDecision> decisions;
        switch (cfg_.method) {
            case Method::kDrLora:
                decisions = allocate_per_layer_greedy(in);
                break;
            case Method::kRandom: {
                Rng rng = Rng(cfg_.seed).derive("alloc", event_index_);
                decisions = allocate_random(in, rng);
                break;
            }
            case Method::kProportional:
                decisions = allocate_proportional(in);
                break;
            case Method::kGlobalGreedy:
                decisions = allocate_global_greedy(in);
                break;
            case Method::kFixedLora:
                return;  // unreachable: fixed-lora schedules no events
        }
        const std::size_t n_experts = log_.experts;
        for (const auto& d : decisions) {
            std::vector<std::size_t> per_expert(n_experts, 0);
            for (const auto& g : d.grants) per_expert[g.expert] += g.ranks;
            for (std::size_t i = 0; i < n_experts; ++i) {
                if (per_expert[i] == 0) continue;
                Expert& e = net_.layer(d.layer).experts[i];
                const std::uint64_t salt = (event_index_ * log_.layers + d.layer) * n_experts + i;
                Rng up_rng = Rng(cfg_.seed).derive("grow-up", salt);
                Rng down_rng = Rng(cfg_.seed).derive("grow-down", salt);
                e.up.grow(per_expert[i], up_rng);
                e.down.grow(per_expert[i], down_rng);
            }
        }
        stats_.reset_importance();
        rec.decisions = std::move(decisions);
        rec.ranks_after = net_.rank_matrix();
        rec.pinned_loss_after = pinned_batch_loss();
        log_.events.push_back(std::move(rec));
        event_index_ += 1;
    }

    void finalize_log() {
        if (log_finalized_ || !log_.final_ranks.empty()) return;
        log_.final_ranks = net_.rank_matrix();
        log_.final_train_loss = log_.steps.empty() ? 0.0 : log_.steps.back().loss;
        auto ev = evaluate(net_, gen_, cfg_.eval_samples, cfg_.eval_seed);
        log_.evals.push_back({cfg_.total_steps, ev.loss, ev.accuracy});
        log_.final_eval_loss = ev.loss;
        log_.final_eval_accuracy = ev.accuracy;
        log_finalized_ = true;
    }

    TrainConfig cfg_;
    MoeNetwork net_;
    SyntheticTaskGen gen_;
    ExpertStatistics stats_;
    OptimizerState opt_main_;
    OptimizerState opt_router_;
    RunLog log_;
    std::vector<std::size_t> event_steps_;
    std::size_t event_index_ = 0;
    std::size_t next_step_ = 1;
    bool log_finalized_ = false;
};

// Convenience wrapper matching the one-shot training entry point.
inline RunLog train(const TrainConfig& cfg, const StepObserver& observer = {}) {
    Trainer tr(cfg);
    tr.run(observer);
    return tr.log();
}

}  // namespace drlora
