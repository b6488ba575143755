#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "localegn/csv.hpp"
#include "localegn/dataset.hpp"
#include "localegn/errors.hpp"
#include "localegn/model.hpp"
#include "localegn/optim.hpp"
#include "localegn/rng.hpp"

namespace localegn {

/// Training protocol settings. Defaults: Adam, lr 0.001, weight decay
/// 0.0005, 3000 iterations, lookback 12, hidden 64, one GN layer, 20%
/// training subsample.
struct TrainConfig {
    double lr = 0.001;
    double weight_decay = 0.0005;
    std::size_t iterations = 3000;
    std::size_t lookback = 12;
    std::size_t hidden = 64;
    std::size_t gn_layers = 1;
    std::uint64_t seed = 1;
    std::size_t batch_size = 16;
    double subsample_fraction = 0.2;
    bool contiguous_subsample = false;
    std::size_t repeats = 5;
    std::size_t val_every = 100;

    void validate() const {
        if (lr <= 0 || weight_decay < 0 || iterations == 0 || lookback == 0 || hidden == 0 ||
            gn_layers == 0 || batch_size == 0 || val_every == 0)
            throw ConfigError("train config: all settings must be positive");
        if (subsample_fraction <= 0.0 || subsample_fraction > 1.0)
            throw ConfigError("train config: subsample fraction must be in (0, 1]");
    }
};

/// Per-iteration loss trace plus the validation checkpoints.
struct TrainLog {
    std::vector<double> loss;                   // loss[i] = iteration i+1
    std::vector<std::size_t> checkpoint_iters;  // iterations with a validation pass
    std::vector<double> checkpoint_val_rmse;    // physical units
    std::size_t best_checkpoint = 0;            // index into the checkpoint arrays

    std::string to_csv() const {
        std::string out = "iter,loss,val_rmse\n";
        std::size_t ck = 0;
        for (std::size_t i = 0; i < loss.size(); ++i) {
            out += std::to_string(i + 1) + "," + csv::format_double(loss[i]) + ",";
            if (ck < checkpoint_iters.size() && checkpoint_iters[ck] == i + 1)
                out += csv::format_double(checkpoint_val_rmse[ck++]);
            out += "\n";
        }
        return out;
    }
};

struct TrainResult {
    ParameterStore params; // best validation checkpoint
    TrainLog log;
};

/// Sum of squared errors over nodes (not the mean), computed on normalized
/// values — recorded on the tape so it can be differentiated.
inline TensorRef l2_loss(Tape& t, TensorRef pred, TensorRef target) {
    if (pred.rows != target.rows || pred.cols != target.cols)
        throw ShapeError("l2_loss: prediction " + std::to_string(pred.rows) + "x" +
                         std::to_string(pred.cols) + " vs target " +
                         std::to_string(target.rows) + "x" + std::to_string(target.cols));
    const TensorRef d = t.sub(pred, target);
    return t.sum_all(t.hadamard(d, d));
}

/// Plain-value counterpart for reporting.
inline double l2_loss_value(const Tensor2& pred, const Tensor2& target) {
    require_same_shape(pred, target, "l2_loss");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data()[i] - target.data()[i];
        s += d * d;
    }
    return s;
}

/// Horizon-1 RMSE of the model over a window set, in physical units.
inline double validation_rmse(const ModelConfig& cfg, const DirectedGraph& graph,
                              const ParameterStore& store,
                              const std::vector<WindowSample>& windows,
                              const Normalizer& norm, std::size_t chunk = 32) {
    double sq = 0.0;
    std::size_t n = 0;
    for (std::size_t begin = 0; begin < windows.size(); begin += chunk) {
        const std::size_t count = std::min(chunk, windows.size() - begin);
        std::vector<std::size_t> chosen(count);
        std::iota(chosen.begin(), chosen.end(), begin);
        const GraphWiring wiring = make_wiring(graph, count);
        const Tensor2 input = stack_windows(windows, chosen, norm);
        const Tensor2 pred = rollout(cfg, wiring, input, store, 1);
        for (std::size_t b = 0; b < count; ++b)
            for (std::size_t i = 0; i < graph.num_nodes; ++i) {
                const double yhat = norm.invert(pred(b * graph.num_nodes + i, 0));
                const double y = windows[chosen[b]].future(i, 0);
                sq += (yhat - y) * (yhat - y);
                ++n;
            }
    }
    return std::sqrt(sq / static_cast<double>(n));
}

/// Seeded mini-batch training with best-validation checkpoint selection.
/// Batches are drawn by reshuffling the subsampled window indices whenever
/// the previous pass is exhausted; the per-step loss is the mean over the
/// batch of the per-sample sum-of-squares. Aborts on a non-finite loss.
inline TrainResult train(const ModelConfig& model_cfg, const Dataset& data,
                         const DirectedGraph& graph, const TrainConfig& cfg) {
    cfg.validate();
    if (data.train.empty()) throw DataError("train: no training windows");
    ParameterStore params = make_param_store(model_cfg, derive_seed(cfg.seed, "init"));
    AdamState adam(params);
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    adam_cfg.weight_decay = cfg.weight_decay;

    Rng shuffle_rng(derive_seed(cfg.seed, "batches"));
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size(); // force a shuffle on first use

    const std::size_t batch = std::min(cfg.batch_size, data.train.size());
    const GraphWiring wiring = make_wiring(graph, batch);

    TrainResult result;
    result.log.loss.reserve(cfg.iterations);
    ParameterStore best = params;
    double best_rmse = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> chosen(batch);
    for (std::size_t iter = 1; iter <= cfg.iterations; ++iter) {
        for (std::size_t b = 0; b < batch; ++b) {
            if (cursor >= order.size()) {
                for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                    const std::size_t j = i + shuffle_rng.below(order.size() - i);
                    std::swap(order[i], order[j]);
                }
                cursor = 0;
            }
            chosen[b] = order[cursor++];
        }

        Tape tape;
        tape.reserve(64 + 16 * model_cfg.lookback);
        const BoundParams bound = bind_model(tape, params);
        const TensorRef window = tape.leaf(stack_windows(data.train, chosen, data.normalizer));
        const TensorRef attr = tape.leaf(wiring.edge_attr);
        const TensorRef target = tape.leaf(stack_targets(data.train, chosen, data.normalizer));
        const TensorRef pred = model_forward(tape, model_cfg, wiring, window, attr, bound);
        const TensorRef loss =
            tape.scale(l2_loss(tape, pred, target), 1.0 / static_cast<double>(batch));

        const double loss_value = tape.value(loss)(0, 0);
        if (!std::isfinite(loss_value))
            throw NumericError("train: non-finite loss at iteration " + std::to_string(iter));
        result.log.loss.push_back(loss_value);

        params.zero_grads();
        backward_into(tape, loss, bound.bindings, params);
        adam.step(params, adam_cfg);

        if (iter % cfg.val_every == 0 || iter == cfg.iterations) {
            const double rmse =
                validation_rmse(model_cfg, graph, params, data.val, data.normalizer);
            result.log.checkpoint_iters.push_back(iter);
            result.log.checkpoint_val_rmse.push_back(rmse);
            if (rmse < best_rmse) {
                best_rmse = rmse;
                best = params;
                result.log.best_checkpoint = result.log.checkpoint_iters.size() - 1;
            }
        }
    }
    result.params = std::move(best);
    return result;
}

} // namespace localegn
