#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <json.hpp>

#include "drlora/errors.hpp"
#include "drlora/trainer.hpp"

namespace drlora {

// Experiment description: one TrainConfig template plus sweep axes. The text
// format is nested key/value (INI-style sections); parse -> serialize ->
// parse is the identity on the parsed struct.
struct ExperimentConfig {
    std::string preset = "toy";
    TrainConfig base;
    std::vector<std::uint64_t> seeds{1};
    std::vector<double> gammas;           // empty: use base.gamma only
    std::vector<std::string> strategies;  // empty: use base.method only
    std::vector<std::size_t> r_inits;     // empty: use base r_init only
    std::string out_dir = "runs";
    int verbosity = 1;

    bool operator==(const ExperimentConfig&) const = default;
};

inline TrainConfig preset_config(const std::string& name) {
    TrainConfig c;  // the "toy" defaults
    if (name == "toy") return c;
    if (name == "paper-table8") {
        // full-scale training hyperparameters on the desk-scale model
        c.total_steps = 3750;
        c.batch_size = 48;
        c.lr = 2e-5;
        c.t_grow = 200;
        c.warmup_ratio = 0.03;
        c.tail_guard = 200;
        c.p_grow = 0.1;
        c.beta = 0.9;
        c.gamma = 1.2;
        c.weight_decay = 0.0;
        c.lr_schedule = LrSchedule::kLinearWarmup;
        return c;
    }
    if (name == "acceptance") {
        // small, fast specialization benchmark used by the acceptance suite
        c.model.layers = 2;
        c.model.experts = 8;
        c.model.top_k = 2;
        c.model.d_model = 32;
        c.model.d_expert = 64;
        c.task.dim = 32;
        c.task.clusters = 8;
        c.total_steps = 1200;
        c.t_grow = 100;
        c.batch_size = 32;
        c.eval_samples = 512;
        c.eval_interval = 200;
        return c;
    }
    throw ConfigError("unknown preset '" + name + "'");
}

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

template <typename T>
T parse_number(const std::string& value, const std::string& field) {
    std::istringstream in(value);
    T out;
    in >> out;
    if (in.fail() || !in.eof())
        throw ConfigError("field '" + field + "': cannot parse '" + value + "'");
    return out;
}

inline bool parse_bool(const std::string& value, const std::string& field) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("field '" + field + "': expected true/false, got '" + value + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& value, const std::string& field) {
    std::vector<T> out;
    std::istringstream in(value);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(parse_number<T>(item, field));
    }
    return out;
}

inline std::string format_double(double v) { return nlohmann::json(v).dump(); }

template <typename T>
std::string format_list(const std::vector<T>& values) {
    std::ostringstream out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out << ",";
        if constexpr (std::is_same_v<T, double>)
            out << format_double(values[i]);
        else
            out << values[i];
    }
    return out.str();
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    std::map<std::string, std::string> kv;  // "section.key" -> value
    std::vector<std::pair<std::string, std::size_t>> order;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": unterminated section");
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (kv.count(full))
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + full +
                              "'");
        kv[full] = value;
        order.emplace_back(full, lineno);
    }

    if (!kv.count("preset")) throw ConfigError("missing required field 'preset'");
    ExperimentConfig cfg;
    cfg.preset = kv["preset"];
    cfg.base = preset_config(cfg.preset);

    std::map<std::string, bool> seen;
    auto take = [&](const std::string& full) -> const std::string* {
        auto it = kv.find(full);
        if (it == kv.end()) return nullptr;
        seen[full] = true;
        return &it->second;
    };
    take("preset");

    using detail::parse_bool;
    using detail::parse_list;
    using detail::parse_number;

    if (auto* v = take("out_dir")) cfg.out_dir = *v;
    if (auto* v = take("verbosity")) cfg.verbosity = parse_number<int>(*v, "verbosity");

    TrainConfig& b = cfg.base;
    if (auto* v = take("model.layers")) b.model.layers = parse_number<std::size_t>(*v, "model.layers");
    if (auto* v = take("model.experts")) b.model.experts = parse_number<std::size_t>(*v, "model.experts");
    if (auto* v = take("model.top_k")) b.model.top_k = parse_number<std::size_t>(*v, "model.top_k");
    if (auto* v = take("model.d_model")) b.model.d_model = parse_number<std::size_t>(*v, "model.d_model");
    if (auto* v = take("model.d_expert")) b.model.d_expert = parse_number<std::size_t>(*v, "model.d_expert");
    if (auto* v = take("adapter.r_init")) b.model.r_init = parse_number<std::size_t>(*v, "adapter.r_init");
    if (auto* v = take("adapter.r_target")) b.model.r_target = parse_number<std::size_t>(*v, "adapter.r_target");
    if (auto* v = take("adapter.r_max")) b.model.r_max = parse_number<std::size_t>(*v, "adapter.r_max");
    if (auto* v = take("adapter.scaling")) b.model.adapter_scaling = parse_number<double>(*v, "adapter.scaling");

    if (auto* v = take("task.clusters")) b.task.clusters = parse_number<std::size_t>(*v, "task.clusters");
    if (auto* v = take("task.dim")) b.task.dim = parse_number<std::size_t>(*v, "task.dim");
    if (auto* v = take("task.center_scale")) b.task.center_scale = parse_number<double>(*v, "task.center_scale");
    if (auto* v = take("task.input_noise_std")) b.task.input_noise_std = parse_number<double>(*v, "task.input_noise_std");
    if (auto* v = take("task.target_noise_std")) b.task.target_noise_std = parse_number<double>(*v, "task.target_noise_std");
    if (auto* v = take("task.cluster_weights")) b.task.cluster_weights = parse_list<double>(*v, "task.cluster_weights");
    if (auto* v = take("task.seed")) b.task_seed = parse_number<std::uint64_t>(*v, "task.seed");

    if (auto* v = take("schedule.total_steps")) b.total_steps = parse_number<std::size_t>(*v, "schedule.total_steps");
    if (auto* v = take("schedule.t_grow")) b.t_grow = parse_number<std::size_t>(*v, "schedule.t_grow");
    if (auto* v = take("schedule.warmup_ratio")) b.warmup_ratio = parse_number<double>(*v, "schedule.warmup_ratio");
    if (auto* v = take("schedule.tail_guard")) b.tail_guard = parse_number<std::size_t>(*v, "schedule.tail_guard");
    if (auto* v = take("schedule.p_grow")) b.p_grow = parse_number<double>(*v, "schedule.p_grow");

    if (auto* v = take("saliency.beta")) b.beta = parse_number<double>(*v, "saliency.beta");
    if (auto* v = take("saliency.gamma")) b.gamma = parse_number<double>(*v, "saliency.gamma");

    if (auto* v = take("optimizer.lr")) b.lr = parse_number<double>(*v, "optimizer.lr");
    if (auto* v = take("optimizer.beta1")) b.adam_beta1 = parse_number<double>(*v, "optimizer.beta1");
    if (auto* v = take("optimizer.beta2")) b.adam_beta2 = parse_number<double>(*v, "optimizer.beta2");
    if (auto* v = take("optimizer.eps")) b.adam_eps = parse_number<double>(*v, "optimizer.eps");
    if (auto* v = take("optimizer.weight_decay")) b.weight_decay = parse_number<double>(*v, "optimizer.weight_decay");
    if (auto* v = take("optimizer.lr_schedule")) b.lr_schedule = lr_schedule_from_string(*v);

    if (auto* v = take("train.batch_size")) b.batch_size = parse_number<std::size_t>(*v, "train.batch_size");
    if (auto* v = take("train.seed")) b.seed = parse_number<std::uint64_t>(*v, "train.seed");
    if (auto* v = take("train.method")) b.method = method_from_string(*v);
    if (auto* v = take("train.router_policy")) b.router_policy = router_policy_from_string(*v);
    if (auto* v = take("train.eval_interval")) b.eval_interval = parse_number<std::size_t>(*v, "train.eval_interval");
    if (auto* v = take("train.eval_samples")) b.eval_samples = parse_number<std::size_t>(*v, "train.eval_samples");
    if (auto* v = take("train.eval_seed")) b.eval_seed = parse_number<std::uint64_t>(*v, "train.eval_seed");
    if (auto* v = take("train.log_step_stats")) b.log_step_stats = parse_bool(*v, "train.log_step_stats");

    if (auto* v = take("sweep.seeds")) cfg.seeds = parse_list<std::uint64_t>(*v, "sweep.seeds");
    if (auto* v = take("sweep.gammas")) cfg.gammas = parse_list<double>(*v, "sweep.gammas");
    if (auto* v = take("sweep.r_inits")) cfg.r_inits = parse_list<std::size_t>(*v, "sweep.r_inits");
    if (auto* v = take("sweep.strategies")) {
        cfg.strategies.clear();
        std::istringstream items(*v);
        std::string item;
        while (std::getline(items, item, ',')) {
            item = detail::trim(item);
            if (item.empty()) continue;
            method_from_string(item);  // validate early
            cfg.strategies.push_back(item);
        }
    }

    for (const auto& [full, at] : order)
        if (!seen.count(full))
            throw ConfigError("line " + std::to_string(at) + ": unknown field '" + full + "'");
    if (cfg.seeds.empty()) throw ConfigError("field 'sweep.seeds': must not be empty");
    return cfg;
}

inline std::string serialize_experiment_config(const ExperimentConfig& cfg) {
    using detail::format_double;
    using detail::format_list;
    const TrainConfig& b = cfg.base;
    std::ostringstream out;
    out << "preset = " << cfg.preset << "\n";
    out << "out_dir = " << cfg.out_dir << "\n";
    out << "verbosity = " << cfg.verbosity << "\n\n";
    out << "[model]\n";
    out << "layers = " << b.model.layers << "\n";
    out << "experts = " << b.model.experts << "\n";
    out << "top_k = " << b.model.top_k << "\n";
    out << "d_model = " << b.model.d_model << "\n";
    out << "d_expert = " << b.model.d_expert << "\n\n";
    out << "[adapter]\n";
    out << "r_init = " << b.model.r_init << "\n";
    out << "r_target = " << b.model.r_target << "\n";
    out << "r_max = " << b.model.r_max << "\n";
    out << "scaling = " << format_double(b.model.adapter_scaling) << "\n\n";
    out << "[task]\n";
    out << "clusters = " << b.task.clusters << "\n";
    out << "dim = " << b.task.dim << "\n";
    out << "center_scale = " << format_double(b.task.center_scale) << "\n";
    out << "input_noise_std = " << format_double(b.task.input_noise_std) << "\n";
    out << "target_noise_std = " << format_double(b.task.target_noise_std) << "\n";
    if (!b.task.cluster_weights.empty())
        out << "cluster_weights = " << format_list(b.task.cluster_weights) << "\n";
    out << "seed = " << b.task_seed << "\n\n";
    out << "[schedule]\n";
    out << "total_steps = " << b.total_steps << "\n";
    out << "t_grow = " << b.t_grow << "\n";
    out << "warmup_ratio = " << format_double(b.warmup_ratio) << "\n";
    out << "tail_guard = " << b.tail_guard << "\n";
    out << "p_grow = " << format_double(b.p_grow) << "\n\n";
    out << "[saliency]\n";
    out << "beta = " << format_double(b.beta) << "\n";
    out << "gamma = " << format_double(b.gamma) << "\n\n";
    out << "[optimizer]\n";
    out << "lr = " << format_double(b.lr) << "\n";
    out << "beta1 = " << format_double(b.adam_beta1) << "\n";
    out << "beta2 = " << format_double(b.adam_beta2) << "\n";
    out << "eps = " << format_double(b.adam_eps) << "\n";
    out << "weight_decay = " << format_double(b.weight_decay) << "\n";
    out << "lr_schedule = " << to_string(b.lr_schedule) << "\n\n";
    out << "[train]\n";
    out << "batch_size = " << b.batch_size << "\n";
    out << "seed = " << b.seed << "\n";
    out << "method = " << to_string(b.method) << "\n";
    out << "router_policy = " << to_string(b.router_policy) << "\n";
    out << "eval_interval = " << b.eval_interval << "\n";
    out << "eval_samples = " << b.eval_samples << "\n";
    out << "eval_seed = " << b.eval_seed << "\n";
    out << "log_step_stats = " << (b.log_step_stats ? "true" : "false") << "\n\n";
    out << "[sweep]\n";
    out << "seeds = " << format_list(cfg.seeds) << "\n";
    if (!cfg.gammas.empty()) out << "gammas = " << format_list(cfg.gammas) << "\n";
    if (!cfg.strategies.empty()) {
        out << "strategies = ";
        for (std::size_t i = 0; i < cfg.strategies.size(); ++i)
            out << (i ? "," : "") << cfg.strategies[i];
        out << "\n";
    }
    if (!cfg.r_inits.empty()) out << "r_inits = " << format_list(cfg.r_inits) << "\n";
    return out.str();
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str());
}

// One concrete training run inside a sweep.
struct SweepCell {
    std::string name;
    TrainConfig config;
};

inline std::vector<SweepCell> expand_sweep(const ExperimentConfig& cfg) {
    std::vector<std::string> strategies =
        cfg.strategies.empty() ? std::vector<std::string>{to_string(cfg.base.method)}
                               : cfg.strategies;
    std::vector<double> gammas = cfg.gammas.empty() ? std::vector<double>{cfg.base.gamma}
                                                    : cfg.gammas;
    std::vector<std::size_t> r_inits =
        cfg.r_inits.empty() ? std::vector<std::size_t>{cfg.base.model.r_init} : cfg.r_inits;
    std::vector<SweepCell> cells;
    for (const auto& strategy : strategies)
        for (double gamma : gammas)
            for (std::size_t r_init : r_inits)
                for (std::uint64_t seed : cfg.seeds) {
                    TrainConfig c = cfg.base;
                    c.method = method_from_string(strategy);
                    c.gamma = gamma;
                    c.model.r_init = r_init;
                    c.seed = seed;
                    std::ostringstream name;
                    name << strategy << "_g" << detail::format_double(gamma) << "_r" << r_init
                         << "_s" << seed;
                    cells.push_back({name.str(), std::move(c)});
                }
    return cells;
}

}  // namespace drlora
