#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "drlora/allocator.hpp"
#include "drlora/errors.hpp"

namespace drlora {

struct StepRecord {
    std::size_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    std::vector<double> zbar;  // flat (L, N); empty when step stats are off
    std::vector<double> q;     // flat (L, N) adapter-gradient intensity
};

struct EvalRecord {
    std::size_t step = 0;
    double loss = 0.0;
    double accuracy = 0.0;
};

struct EventRecord {
    std::size_t step = 0;
    std::vector<AllocationDecision> decisions;
    std::vector<std::vector<std::size_t>> ranks_after;
    std::vector<double> f;         // flat (L, N) snapshots at the event
    std::vector<double> g;
    std::vector<double> saliency;
    double pinned_loss_before = 0.0;
    double pinned_loss_after = 0.0;
};

// Complete record of one training run. Serializes to newline-delimited JSON;
// every emitted byte is a pure function of (config, seed). Wall-clock timing
// lives only in memory so logs from identical runs stay byte-identical.
struct RunLog {
    nlohmann::json config;  // canonical config echo
    std::string method;
    std::uint64_t seed = 0;
    std::size_t layers = 0;
    std::size_t experts = 0;
    std::vector<std::vector<std::size_t>> initial_ranks;
    std::vector<StepRecord> steps;
    std::vector<EvalRecord> evals;
    std::vector<EventRecord> events;
    std::vector<std::vector<std::size_t>> final_ranks;
    double final_train_loss = 0.0;
    double final_eval_loss = 0.0;
    double final_eval_accuracy = 0.0;
    std::vector<double> wall_ms;  // in-memory only, never serialized

    std::string to_ndjson() const {
        std::ostringstream out;
        nlohmann::json meta{{"type", "meta"},       {"method", method},
                            {"seed", seed},         {"layers", layers},
                            {"experts", experts},   {"initial_ranks", initial_ranks},
                            {"config", config}};
        out << meta.dump() << "\n";
        for (const auto& s : steps) {
            nlohmann::json j{{"type", "step"}, {"t", s.step}, {"loss", s.loss}, {"lr", s.lr}};
            if (!s.zbar.empty()) {
                j["zbar"] = s.zbar;
                j["q"] = s.q;
            }
            out << j.dump() << "\n";
        }
        for (const auto& e : evals) {
            out << nlohmann::json{{"type", "eval"}, {"t", e.step}, {"loss", e.loss},
                                  {"acc", e.accuracy}}
                       .dump()
                << "\n";
        }
        for (const auto& e : events) {
            nlohmann::json decisions = nlohmann::json::array();
            for (const auto& d : e.decisions) {
                nlohmann::json grants = nlohmann::json::array();
                for (const auto& g : d.grants)
                    grants.push_back(nlohmann::json::array({g.expert, g.ranks}));
                decisions.push_back({{"layer", d.layer},
                                     {"strategy", d.strategy},
                                     {"grants", grants}});
            }
            out << nlohmann::json{{"type", "event"},
                                  {"t", e.step},
                                  {"decisions", decisions},
                                  {"ranks", e.ranks_after},
                                  {"f", e.f},
                                  {"g", e.g},
                                  {"S", e.saliency},
                                  {"loss_before", e.pinned_loss_before},
                                  {"loss_after", e.pinned_loss_after}}
                       .dump()
                << "\n";
        }
        out << nlohmann::json{{"type", "final"},
                              {"ranks", final_ranks},
                              {"train_loss", final_train_loss},
                              {"eval_loss", final_eval_loss},
                              {"eval_acc", final_eval_accuracy}}
                   .dump()
            << "\n";
        return out.str();
    }

    static RunLog from_ndjson(const std::string& text) {
        RunLog log;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        bool saw_meta = false;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw IoError("run log line " + std::to_string(lineno) + ": " + e.what());
            }
            const std::string type = j.value("type", "");
            if (type == "meta") {
                log.method = j.value("method", "");
                log.seed = j.value("seed", std::uint64_t{0});
                log.layers = j.value("layers", std::size_t{0});
                log.experts = j.value("experts", std::size_t{0});
                log.initial_ranks =
                    j.value("initial_ranks", std::vector<std::vector<std::size_t>>{});
                log.config = j.value("config", nlohmann::json::object());
                saw_meta = true;
            } else if (type == "step") {
                StepRecord s;
                s.step = j.at("t").get<std::size_t>();
                s.loss = j.at("loss").get<double>();
                s.lr = j.at("lr").get<double>();
                if (j.contains("zbar")) {
                    s.zbar = j.at("zbar").get<std::vector<double>>();
                    s.q = j.at("q").get<std::vector<double>>();
                }
                log.steps.push_back(std::move(s));
            } else if (type == "eval") {
                log.evals.push_back({j.at("t").get<std::size_t>(), j.at("loss").get<double>(),
                                     j.at("acc").get<double>()});
            } else if (type == "event") {
                EventRecord e;
                e.step = j.at("t").get<std::size_t>();
                for (const auto& dj : j.at("decisions")) {
                    AllocationDecision d;
                    d.step = e.step;
                    d.layer = dj.at("layer").get<std::size_t>();
                    d.strategy = dj.value("strategy", "");
                    for (const auto& gj : dj.at("grants"))
                        d.grants.push_back({gj.at(0).get<std::size_t>(),
                                            gj.at(1).get<std::size_t>()});
                    e.decisions.push_back(std::move(d));
                }
                e.ranks_after = j.at("ranks").get<std::vector<std::vector<std::size_t>>>();
                e.f = j.value("f", std::vector<double>{});
                e.g = j.value("g", std::vector<double>{});
                e.saliency = j.value("S", std::vector<double>{});
                e.pinned_loss_before = j.value("loss_before", 0.0);
                e.pinned_loss_after = j.value("loss_after", 0.0);
                log.events.push_back(std::move(e));
            } else if (type == "final") {
                log.final_ranks = j.at("ranks").get<std::vector<std::vector<std::size_t>>>();
                log.final_train_loss = j.at("train_loss").get<double>();
                log.final_eval_loss = j.at("eval_loss").get<double>();
                log.final_eval_accuracy = j.at("eval_acc").get<double>();
            } else {
                throw IoError("run log line " + std::to_string(lineno) +
                              ": unknown record type '" + type + "'");
            }
        }
        if (!saw_meta) throw IoError("run log: missing meta record");
        return log;
    }

    static RunLog load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open run log: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return from_ndjson(ss.str());
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write run log: " + path);
        out << to_ndjson();
    }
};

}  // namespace drlora
