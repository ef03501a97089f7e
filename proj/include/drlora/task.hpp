#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "drlora/errors.hpp"
#include "drlora/matrix.hpp"
#include "drlora/rng.hpp"

namespace drlora {

struct TaskConfig {
    std::size_t clusters = 8;
    std::size_t dim = 32;              // inputs and targets share this width
    double center_scale = 3.0;         // separation of cluster centers
    double input_noise_std = 0.3;      // spread around the center
    double target_noise_std = 0.02;
    std::vector<double> cluster_weights;  // empty => 1/(c+1) skew

    bool operator==(const TaskConfig&) const = default;
};

// Clustered regression task: inputs near one of C centers, targets from that
// cluster's own linear map. Cluster-conditional maps force the cluster
// identity through the routed experts (a single linear head cannot fit them),
// and the skewed mixture makes some experts matter more than others.
class SyntheticTaskGen {
public:
    SyntheticTaskGen() = default;

    SyntheticTaskGen(const TaskConfig& config, std::uint64_t seed)
        : config_(config), seed_(seed), centers_(config.clusters, config.dim) {
        if (config.clusters < 1) throw ConfigError("task: clusters must be >= 1");
        Rng init = Rng(seed).derive("task-init");
        init.fill_gaussian(centers_, config.center_scale);
        maps_.reserve(config.clusters);
        for (std::size_t c = 0; c < config.clusters; ++c) {
            Matrix m(config.dim, config.dim);
            init.fill_gaussian(m, 1.0 / std::sqrt(static_cast<double>(config.dim)));
            maps_.push_back(std::move(m));
        }
        weights_ = config.cluster_weights;
        if (weights_.empty()) {
            weights_.resize(config.clusters);
            for (std::size_t c = 0; c < config.clusters; ++c)
                weights_[c] = 1.0 / static_cast<double>(c + 1);
        }
        if (weights_.size() != config.clusters)
            throw ConfigError("task: cluster_weights size mismatch");
        double total = 0.0;
        for (double w : weights_) {
            if (w < 0.0) throw ConfigError("task: negative cluster weight");
            total += w;
        }
        if (total <= 0.0) throw ConfigError("task: cluster weights sum to zero");
        cumulative_.resize(config.clusters);
        double acc = 0.0;
        for (std::size_t c = 0; c < config.clusters; ++c) {
            acc += weights_[c] / total;
            cumulative_[c] = acc;
        }
        cumulative_.back() = 1.0;
    }

    struct Batch {
        Matrix inputs;   // (n, dim)
        Matrix targets;  // (n, dim)
        std::vector<std::size_t> cluster_ids;
    };

    // Deterministic under (seed, stream): the same stream id always yields the
    // same batch, independent of call order.
    Batch sample(std::size_t n, std::uint64_t stream) const {
        if (n < 1) throw InputError("sample: n must be >= 1");
        Rng rng = Rng(seed_).derive("task-batch", stream);
        Batch batch{Matrix(n, config_.dim), Matrix(n, config_.dim), {}};
        batch.cluster_ids.resize(n);
        for (std::size_t t = 0; t < n; ++t) {
            const double u = rng.next_double();
            std::size_t c = 0;
            while (c + 1 < config_.clusters && u >= cumulative_[c]) ++c;
            batch.cluster_ids[t] = c;
            for (std::size_t d = 0; d < config_.dim; ++d)
                batch.inputs(t, d) =
                    centers_(c, d) + config_.input_noise_std * rng.next_gaussian();
            const Matrix& map = maps_[c];
            for (std::size_t d = 0; d < config_.dim; ++d) {
                double s = 0.0;
                for (std::size_t k = 0; k < config_.dim; ++k)
                    s += map(d, k) * batch.inputs(t, k);
                batch.targets(t, d) = s + config_.target_noise_std * rng.next_gaussian();
            }
        }
        return batch;
    }

    // Cluster whose map output is nearest to the prediction; the accuracy
    // metric counts matches with the true cluster id.
    std::size_t nearest_map(const Matrix& input_row, std::size_t row,
                            const Matrix& prediction, std::size_t pred_row) const {
        std::size_t best = 0;
        double best_d = 0.0;
        for (std::size_t c = 0; c < config_.clusters; ++c) {
            double d = 0.0;
            for (std::size_t o = 0; o < config_.dim; ++o) {
                double m = 0.0;
                for (std::size_t k = 0; k < config_.dim; ++k)
                    m += maps_[c](o, k) * input_row(row, k);
                const double diff = prediction(pred_row, o) - m;
                d += diff * diff;
            }
            if (c == 0 || d < best_d) {
                best_d = d;
                best = c;
            }
        }
        return best;
    }

    const TaskConfig& config() const { return config_; }
    const std::vector<double>& normalized_weights_cumulative() const { return cumulative_; }
    std::uint64_t seed() const { return seed_; }

private:
    TaskConfig config_;
    std::uint64_t seed_ = 0;
    Matrix centers_;
    std::vector<Matrix> maps_;
    std::vector<double> weights_;
    std::vector<double> cumulative_;
};

}  // namespace drlora
