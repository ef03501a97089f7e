#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "drlora/errors.hpp"
#include "drlora/moe.hpp"
#include "drlora/rng.hpp"
#include "drlora/runlog.hpp"
#include "drlora/task.hpp"
#include "drlora/trainer.hpp"

namespace drlora {

// Mean absolute pairwise difference normalized by 2 n^2 mu; 0 for a uniform
// vector, (n-1)/n for all mass on one entry. Values are sorted first so the
// accumulation order (and hence the result) is permutation-invariant.
inline double gini(const std::vector<double>& values) {
    if (values.empty()) throw InputError("gini: empty input");
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    double mu = 0.0;
    for (double v : sorted) {
        if (v < 0.0) throw InputError("gini: negative entry");
        mu += v;
    }
    const double n = static_cast<double>(sorted.size());
    mu /= n;
    if (mu <= 0.0) throw InputError("gini: needs at least one positive entry");
    double pairwise = 0.0;
    for (double a : sorted)
        for (double b : sorted) pairwise += std::abs(a - b);
    return pairwise / (2.0 * n * n * mu);
}

inline double gini_of_ranks(const std::vector<std::vector<std::size_t>>& ranks) {
    std::vector<double> flat;
    for (const auto& row : ranks)
        for (std::size_t r : row) flat.push_back(static_cast<double>(r));
    return gini(flat);
}

enum class MaskGroup { kTopQuantileByRank, kBottomGroup, kRandom };

inline std::string to_string(MaskGroup g) {
    switch (g) {
        case MaskGroup::kTopQuantileByRank: return "top-quantile-by-rank";
        case MaskGroup::kBottomGroup: return "bottom-group";
        case MaskGroup::kRandom: return "random";
    }
    return "?";
}

struct MaskingSpec {
    MaskGroup group = MaskGroup::kTopQuantileByRank;
    double quantile = 0.25;       // top fraction by final rank
    double budget_fraction = 0.10;  // of per-layer total rank
    std::uint64_t seed = 0;

    void validate() const {
        // zero budget is the degenerate no-op case (zero degradation)
        if (!(budget_fraction >= 0.0 && budget_fraction < 1.0))
            throw ConfigError("masking: budget fraction must be in [0,1)");
        if (!(quantile > 0.0 && quantile < 1.0))
            throw ConfigError("masking: quantile must be in (0,1)");
    }
};

struct MaskingReport {
    MaskGroup group;
    double budget_fraction = 0.0;
    ExpertMaskSet masked;  // per layer, 1 = removed from routing
    double base_loss = 0.0;
    double masked_loss = 0.0;
    double degradation = 0.0;
    std::size_t masked_experts = 0;
};

// Chooses experts per the group rule, layer by layer, until their summed
// ranks first reach the budget share of that layer's total rank.
inline ExpertMaskSet select_masked_experts(const std::vector<std::vector<std::size_t>>& ranks,
                                           const MaskingSpec& spec) {
    spec.validate();
    ExpertMaskSet masked;
    Rng rng = Rng(spec.seed).derive("masking");
    for (std::size_t l = 0; l < ranks.size(); ++l) {
        const auto& row = ranks[l];
        const std::size_t n = row.size();
        const std::size_t total = std::accumulate(row.begin(), row.end(), std::size_t{0});
        const double budget = spec.budget_fraction * static_cast<double>(total);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
        std::vector<std::size_t> pool;
        const std::size_t top_count = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::ceil(spec.quantile * static_cast<double>(n))));
        switch (spec.group) {
            case MaskGroup::kTopQuantileByRank:
                // largest-first inside the top quantile
                pool.assign(order.begin(), order.begin() + top_count);
                break;
            case MaskGroup::kBottomGroup:
                // smallest-first inside the remaining group
                pool.assign(order.begin() + top_count, order.end());
                std::reverse(pool.begin(), pool.end());
                break;
            case MaskGroup::kRandom: {
                pool.resize(n);
                std::iota(pool.begin(), pool.end(), 0);
                for (std::size_t i = n; i > 1; --i)
                    std::swap(pool[i - 1], pool[rng.next_below(i)]);
                break;
            }
        }
        std::vector<std::uint8_t> layer_mask(n, 0);
        double summed = 0.0;
        for (std::size_t i : pool) {
            if (summed >= budget) break;
            layer_mask[i] = 1;
            summed += static_cast<double>(row[i]);
        }
        if (summed < budget)
            throw InputError("masking: budget unreachable with group '" +
                             to_string(spec.group) + "' in layer " + std::to_string(l));
        masked.push_back(std::move(layer_mask));
    }
    return masked;
}

// Removes the selected experts from routing candidacy and reports the eval
// degradation against the unmasked network.
inline MaskingReport masking_experiment(const MoeNetwork& net,
                                        const std::vector<std::vector<std::size_t>>& final_ranks,
                                        const MaskingSpec& spec, const SyntheticTaskGen& gen,
                                        std::size_t eval_samples, std::uint64_t eval_seed) {
    MaskingReport report;
    report.group = spec.group;
    report.budget_fraction = spec.budget_fraction;
    report.masked = select_masked_experts(final_ranks, spec);
    for (const auto& layer_mask : report.masked) {
        const std::size_t survivors =
            layer_mask.size() - std::accumulate(layer_mask.begin(), layer_mask.end(),
                                                std::size_t{0});
        if (survivors == 0) throw InputError("masking: no expert survives in some layer");
        report.masked_experts += layer_mask.size() - survivors;
    }
    report.base_loss = evaluate(net, gen, eval_samples, eval_seed).loss;
    report.masked_loss = evaluate(net, gen, eval_samples, eval_seed, &report.masked).loss;
    report.degradation = report.masked_loss - report.base_loss;
    return report;
}

struct CovarianceGapRow {
    std::size_t layer = 0;
    std::size_t expert = 0;
    bool defined = false;       // false when the expert was never activated
    double e_zq = 0.0;          // E[z q]
    double e_z = 0.0;           // E[z]
    double e_q_active = 0.0;    // E[q | z > 0]
    double covariance = 0.0;    // E[zq] - E[z] E[q | z>0]
    double relative_gap = 0.0;  // |cov| / (E[z] E[q|z>0] + eps)
};

// Empirical check of the mean-field factorization E[zq] ~ E[z] E[q | z>0]
// from per-step (zbar, q) streams.
inline std::vector<CovarianceGapRow> covariance_gap(const RunLog& log, double eps = 1e-12) {
    if (log.steps.empty() || log.steps.front().zbar.empty())
        throw InputError("covariance_gap: log has no per-step (z, q) stream");
    const std::size_t n = log.layers * log.experts;
    std::vector<CovarianceGapRow> rows(n);
    std::vector<double> sum_zq(n, 0.0), sum_z(n, 0.0), sum_q_active(n, 0.0);
    std::vector<std::size_t> active_steps(n, 0);
    std::size_t steps = 0;
    for (const auto& s : log.steps) {
        if (s.zbar.size() != n) throw InputError("covariance_gap: malformed step record");
        ++steps;
        for (std::size_t i = 0; i < n; ++i) {
            sum_zq[i] += s.zbar[i] * s.q[i];
            sum_z[i] += s.zbar[i];
            if (s.zbar[i] > 0.0) {
                sum_q_active[i] += s.q[i];
                active_steps[i] += 1;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        CovarianceGapRow& r = rows[i];
        r.layer = i / log.experts;
        r.expert = i % log.experts;
        if (active_steps[i] == 0) continue;  // undefined, not zero
        r.defined = true;
        r.e_zq = sum_zq[i] / static_cast<double>(steps);
        r.e_z = sum_z[i] / static_cast<double>(steps);
        r.e_q_active = sum_q_active[i] / static_cast<double>(active_steps[i]);
        r.covariance = r.e_zq - r.e_z * r.e_q_active;
        r.relative_gap = std::abs(r.covariance) / (r.e_z * r.e_q_active + eps);
    }
    return rows;
}

struct FlopsReport {
    double base_gflops = 0.0;
    double lora_gflops = 0.0;
    double total_gflops = 0.0;
    double ratio = 0.0;  // total vs no-adapter baseline
};

// Forward-pass cost model: base expert FLOPs 4 B L K d_m d_e, adapter FLOPs
// 8 B L K d_e r (two adapted projections per expert).
inline FlopsReport flops_model(double batch, double layers, double active_experts,
                               double d_model, double d_expert, double rank) {
    if (batch < 0 || layers < 0 || active_experts < 0 || d_model < 0 || d_expert < 0 ||
        rank < 0)
        throw InputError("flops_model: inputs must be >= 0");
    FlopsReport r;
    r.base_gflops = 4.0 * batch * layers * active_experts * d_model * d_expert / 1e9;
    r.lora_gflops = 8.0 * batch * layers * active_experts * d_expert * rank / 1e9;
    r.total_gflops = r.base_gflops + r.lora_gflops;
    r.ratio = r.base_gflops > 0.0 ? r.total_gflops / r.base_gflops : 0.0;
    return r;
}

// Rank matrices keyed by event step, reconstructable by replaying the
// allocation decisions from the initial ranks.
struct RankEvolution {
    std::vector<std::vector<std::size_t>> initial;               // (L, N)
    std::vector<std::size_t> event_steps;
    std::vector<std::vector<std::vector<std::size_t>>> matrices;  // per event
};

inline RankEvolution export_rank_evolution(const RunLog& log) {
    RankEvolution evo;
    evo.initial = log.initial_ranks;
    for (const auto& e : log.events) {
        evo.event_steps.push_back(e.step);
        evo.matrices.push_back(e.ranks_after);
    }
    return evo;
}

// Replay oracle: initial ranks plus cumulative grants must reproduce every
// recorded matrix exactly.
inline bool rank_evolution_replay_matches(const RunLog& log) {
    auto ranks = log.initial_ranks;
    for (const auto& e : log.events) {
        for (const auto& d : e.decisions)
            for (const auto& g : d.grants) ranks[d.layer][g.expert] += g.ranks;
        if (ranks != e.ranks_after) return false;
    }
    return log.final_ranks.empty() || ranks == log.final_ranks;
}

}  // namespace drlora
