#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "drlora/errors.hpp"
#include "drlora/matrix.hpp"
#include "drlora/rng.hpp"

namespace drlora {

// Growth timetable. Events run every t_grow steps inside the window between
// warmup and tail_guard; each event hands every layer a quota Q of new ranks.
struct GrowthSchedule {
    std::size_t total_steps = 2000;
    std::size_t warmup_steps = 60;  // floor(warmup_ratio * total_steps)
    std::size_t tail_guard = 200;
    std::size_t t_grow = 200;
    double p_grow = 0.1;
    std::size_t n_experts = 8;
    std::size_t r_init = 8;
    std::size_t r_target = 16;
    std::size_t r_max = 32;

    std::size_t t_window() const {
        if (total_steps <= tail_guard + warmup_steps) return 0;
        return total_steps - tail_guard - warmup_steps;
    }

    std::size_t n_grow() const { return t_grow == 0 ? 0 : t_window() / t_grow; }

    // Q = ceil(N * (r_target - r_init) / N_grow), in expert-rank units (both
    // projections of an expert grow in lockstep, so the module-level count is
    // the same formula times P).
    std::size_t quota() const {
        const std::size_t need = n_experts * (r_target - r_init);
        return (need + n_grow() - 1) / n_grow();
    }

    // Eq-style per-event per-expert cap component.
    std::size_t per_event_cap() const {
        return static_cast<std::size_t>(
            std::floor(static_cast<double>(r_max - r_init) * p_grow));
    }

    void validate() const {
        if (t_window() == 0)
            throw ConfigError("schedule: growth window is empty (total <= warmup + tail_guard)");
        if (n_grow() < 1) throw ConfigError("schedule: t_grow exceeds the growth window");
        if (r_target > r_init && per_event_cap() < 1)
            throw ConfigError("schedule: per-event growth cap rounds to zero; raise p_grow");
        if (!(r_init <= r_target && r_target <= r_max))
            throw ConfigError("schedule: need r_init <= r_target <= r_max");
    }
};

// Event steps: warmup + t_grow, warmup + 2 t_grow, ...
inline std::vector<std::size_t> schedule_events(const GrowthSchedule& s) {
    s.validate();
    std::vector<std::size_t> steps;
    steps.reserve(s.n_grow());
    for (std::size_t e = 1; e <= s.n_grow(); ++e)
        steps.push_back(s.warmup_steps + e * s.t_grow);
    return steps;
}

// n_grow = min(floor((r_max - r_init) * p_grow), r_max - r, Q_remain)
inline std::size_t growth_cap(std::size_t r, std::size_t r_init, std::size_t r_max,
                              double p_grow, std::size_t q_remain) {
    if (r > r_max) throw BudgetError("growth_cap: r exceeds r_max");
    const std::size_t frac_cap = static_cast<std::size_t>(
        std::floor(static_cast<double>(r_max - r_init) * p_grow));
    return std::min({frac_cap, r_max - r, q_remain});
}

struct AllocationGrant {
    std::size_t expert = 0;
    std::size_t ranks = 0;
};

struct AllocationDecision {
    std::size_t step = 0;
    std::size_t layer = 0;
    std::vector<AllocationGrant> grants;
    std::string strategy;

    std::size_t total() const {
        std::size_t t = 0;
        for (const auto& g : grants) t += g.ranks;
        return t;
    }
};

// Everything an allocation strategy sees at one growth event.
struct AllocationInputs {
    std::size_t step = 0;
    Matrix saliency;                              // (L, N)
    std::vector<std::vector<std::size_t>> ranks;  // current active ranks
    std::size_t r_init = 8;
    std::size_t r_target = 16;
    std::size_t r_max = 32;
    double p_grow = 0.1;
    std::size_t quota = 0;     // per-layer Q for this event
    bool final_event = false;  // last event trues the budget up exactly
};

namespace detail {

// Grants are recorded in cap-sized chunks so no single grant entry ever
// exceeds the per-event cap, even when the final event needs several passes.
inline void emit_grant(AllocationDecision& d, std::size_t expert, std::size_t n,
                       std::size_t chunk) {
    while (n > 0) {
        const std::size_t take = chunk == 0 ? n : std::min(n, chunk);
        d.grants.push_back({expert, take});
        n -= take;
    }
}

inline std::size_t layer_budget_left(const AllocationInputs& in, std::size_t layer) {
    const std::size_t n = in.ranks[layer].size();
    const std::size_t target = n * in.r_target;
    const std::size_t have = std::accumulate(in.ranks[layer].begin(), in.ranks[layer].end(),
                                             std::size_t{0});
    return have >= target ? 0 : target - have;
}

inline std::vector<std::size_t> saliency_order(const Matrix& s, std::size_t layer) {
    std::vector<std::size_t> order(s.cols());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return s(layer, a) > s(layer, b);
    });
    return order;
}

}  // namespace detail

// Per-layer greedy: sort by saliency descending (ties toward the lower
// index), walk the list granting each expert its cap until the quota runs
// out. The final event replaces Q with the exact remaining budget and keeps
// passing over the list until it is placed, so end-of-training totals match
// the uniform-rank budget exactly.
inline std::vector<AllocationDecision> allocate_per_layer_greedy(const AllocationInputs& in) {
    std::vector<AllocationDecision> out;
    const std::size_t layers = in.ranks.size();
    for (std::size_t l = 0; l < layers; ++l) {
        AllocationDecision d{in.step, l, {}, "per-layer-greedy"};
        const std::size_t budget = detail::layer_budget_left(in, l);
        std::size_t q_remain = in.final_event ? budget : std::min(in.quota, budget);
        std::vector<std::size_t> r = in.ranks[l];
        const auto order = detail::saliency_order(in.saliency, l);
        const std::size_t chunk = growth_cap(in.r_init, in.r_init, in.r_max, in.p_grow,
                                             std::numeric_limits<std::size_t>::max());
        bool progress = true;
        while (q_remain > 0 && progress) {
            progress = false;
            for (std::size_t i : order) {
                if (q_remain == 0) break;
                const std::size_t n = growth_cap(r[i], in.r_init, in.r_max, in.p_grow, q_remain);
                if (n == 0) continue;
                detail::emit_grant(d, i, n, chunk);
                r[i] += n;
                q_remain -= n;
                progress = true;
            }
            if (!in.final_event) break;  // one pass per regular event
        }
        out.push_back(std::move(d));
    }
    return out;
}

// Global greedy: one pooled quota L*Q over every (layer, expert) pair. Layers
// with uniformly higher scores may absorb most of the pool; only the global
// budget is honored.
inline std::vector<AllocationDecision> allocate_global_greedy(const AllocationInputs& in) {
    const std::size_t layers = in.ranks.size();
    const std::size_t n_experts = layers ? in.ranks[0].size() : 0;
    // Per-layer headroom is not enforced here; the pooled budget is the total
    // distance to the global target.
    std::size_t have = 0;
    for (const auto& row : in.ranks) have += std::accumulate(row.begin(), row.end(), std::size_t{0});
    const std::size_t global_target = layers * n_experts * in.r_target;
    const std::size_t global_budget = have >= global_target ? 0 : global_target - have;
    std::size_t q_remain =
        in.final_event ? global_budget : std::min(layers * in.quota, global_budget);

    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (layer, expert)
    pairs.reserve(layers * n_experts);
    for (std::size_t l = 0; l < layers; ++l)
        for (std::size_t i = 0; i < n_experts; ++i) pairs.emplace_back(l, i);
    std::stable_sort(pairs.begin(), pairs.end(), [&](const auto& a, const auto& b) {
        return in.saliency(a.first, a.second) > in.saliency(b.first, b.second);
    });

    auto ranks = in.ranks;
    std::vector<AllocationDecision> out(layers);
    for (std::size_t l = 0; l < layers; ++l) out[l] = {in.step, l, {}, "global-greedy"};
    const std::size_t chunk = growth_cap(in.r_init, in.r_init, in.r_max, in.p_grow,
                                         std::numeric_limits<std::size_t>::max());
    bool progress = true;
    while (q_remain > 0 && progress) {
        progress = false;
        for (const auto& [l, i] : pairs) {
            if (q_remain == 0) break;
            const std::size_t n = growth_cap(ranks[l][i], in.r_init, in.r_max, in.p_grow, q_remain);
            if (n == 0) continue;
            detail::emit_grant(out[l], i, n, chunk);
            ranks[l][i] += n;
            q_remain -= n;
            progress = true;
        }
        if (!in.final_event) break;
    }
    return out;
}

// Proportional: largest-remainder apportionment of the per-layer quota by
// normalized saliency, clipped by the per-expert cap and redistributed until
// the quota or the capacity is exhausted. All-zero saliency falls back to a
// uniform split.
inline std::vector<AllocationDecision> allocate_proportional(const AllocationInputs& in) {
    std::vector<AllocationDecision> out;
    const std::size_t layers = in.ranks.size();
    for (std::size_t l = 0; l < layers; ++l) {
        AllocationDecision d{in.step, l, {}, "proportional"};
        const std::size_t n_experts = in.ranks[l].size();
        const std::size_t budget = detail::layer_budget_left(in, l);
        std::size_t q_remain = in.final_event ? budget : std::min(in.quota, budget);
        const std::size_t chunk = growth_cap(in.r_init, in.r_init, in.r_max, in.p_grow,
                                             std::numeric_limits<std::size_t>::max());
        // Per-event cap per expert; the final event may exceed it through
        // redistribution rounds so the budget lands exactly.
        std::vector<std::size_t> cap(n_experts);
        std::vector<std::size_t> granted(n_experts, 0);
        for (std::size_t i = 0; i < n_experts; ++i) {
            cap[i] = in.final_event
                         ? in.r_max - in.ranks[l][i]
                         : growth_cap(in.ranks[l][i], in.r_init, in.r_max, in.p_grow,
                                      std::numeric_limits<std::size_t>::max());
        }
        while (q_remain > 0) {
            std::vector<std::size_t> active;
            double weight_sum = 0.0;
            for (std::size_t i = 0; i < n_experts; ++i)
                if (granted[i] < cap[i]) active.push_back(i);
            if (active.empty()) break;
            for (std::size_t i : active) weight_sum += in.saliency(l, i);
            std::vector<double> share(active.size());
            for (std::size_t a = 0; a < active.size(); ++a)
                share[a] = weight_sum > 0.0
                               ? static_cast<double>(q_remain) * in.saliency(l, active[a]) /
                                     weight_sum
                               : static_cast<double>(q_remain) /
                                     static_cast<double>(active.size());
            std::vector<std::size_t> round(active.size());
            std::size_t assigned = 0;
            for (std::size_t a = 0; a < active.size(); ++a) {
                round[a] = static_cast<std::size_t>(std::floor(share[a]));
                assigned += round[a];
            }
            std::vector<std::size_t> rema(active.size());
            std::iota(rema.begin(), rema.end(), 0);
            std::stable_sort(rema.begin(), rema.end(), [&](std::size_t x, std::size_t y) {
                return share[x] - std::floor(share[x]) > share[y] - std::floor(share[y]);
            });
            for (std::size_t k = 0; k < rema.size() && assigned < q_remain; ++k) {
                round[rema[k]] += 1;
                assigned += 1;
            }
            std::size_t placed = 0;
            for (std::size_t a = 0; a < active.size(); ++a) {
                const std::size_t i = active[a];
                const std::size_t n = std::min(round[a], cap[i] - granted[i]);
                granted[i] += n;
                placed += n;
            }
            if (placed == 0) break;
            q_remain -= placed;
        }
        for (std::size_t i = 0; i < n_experts; ++i)
            if (granted[i] > 0) detail::emit_grant(d, i, granted[i], chunk);
        out.push_back(std::move(d));
    }
    return out;
}

// Random baseline: uniform expert draws, one rank per draw, until the quota
// or capacity runs out. Saliency is ignored entirely.
inline std::vector<AllocationDecision> allocate_random(const AllocationInputs& in, Rng& rng) {
    std::vector<AllocationDecision> out;
    const std::size_t layers = in.ranks.size();
    for (std::size_t l = 0; l < layers; ++l) {
        AllocationDecision d{in.step, l, {}, "random"};
        const std::size_t n_experts = in.ranks[l].size();
        const std::size_t budget = detail::layer_budget_left(in, l);
        std::size_t q_remain = in.final_event ? budget : std::min(in.quota, budget);
        const std::size_t chunk = growth_cap(in.r_init, in.r_init, in.r_max, in.p_grow,
                                             std::numeric_limits<std::size_t>::max());
        std::vector<std::size_t> cap(n_experts);
        std::vector<std::size_t> granted(n_experts, 0);
        for (std::size_t i = 0; i < n_experts; ++i) {
            cap[i] = in.final_event
                         ? in.r_max - in.ranks[l][i]
                         : growth_cap(in.ranks[l][i], in.r_init, in.r_max, in.p_grow,
                                      std::numeric_limits<std::size_t>::max());
        }
        while (q_remain > 0) {
            std::vector<std::size_t> eligible;
            for (std::size_t i = 0; i < n_experts; ++i)
                if (granted[i] < cap[i]) eligible.push_back(i);
            if (eligible.empty()) break;
            const std::size_t pick = eligible[rng.next_below(eligible.size())];
            granted[pick] += 1;
            q_remain -= 1;
        }
        for (std::size_t i = 0; i < n_experts; ++i)
            if (granted[i] > 0) detail::emit_grant(d, i, granted[i], chunk);
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace drlora
