#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "localegn/dataset.hpp"
#include "localegn/errors.hpp"
#include "localegn/model.hpp"

namespace localegn {

/// Pooled error metrics of one prediction set, physical units. MAPE skips
/// entries whose true value is below `mape_eps` in magnitude (near-zero flow
/// makes the percentage error arbitrarily large) and reports how many were
/// skipped; if everything is skipped the metric is undefined, not a number.
struct MetricSample {
    double rmse = 0.0;
    double mae = 0.0;
    std::optional<double> mape; // percent
    std::size_t mape_excluded = 0;
    std::size_t count = 0;
};

inline constexpr double kMapeEps = 1e-6;

inline MetricSample compute_metrics(std::span<const double> pred,
                                    std::span<const double> truth,
                                    double mape_eps = kMapeEps) {
    if (pred.size() != truth.size())
        throw ShapeError("metrics: prediction length " + std::to_string(pred.size()) +
                         " vs truth length " + std::to_string(truth.size()));
    if (pred.empty()) throw ShapeError("metrics: empty input");
    MetricSample m;
    m.count = pred.size();
    double sq = 0.0, ab = 0.0, pe = 0.0;
    std::size_t pe_n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        sq += d * d;
        ab += std::abs(d);
        if (std::abs(truth[i]) >= mape_eps) {
            pe += std::abs(d / truth[i]);
            ++pe_n;
        }
    }
    m.rmse = std::sqrt(sq / static_cast<double>(pred.size()));
    m.mae = ab / static_cast<double>(pred.size());
    m.mape_excluded = pred.size() - pe_n;
    if (pe_n > 0) m.mape = 100.0 * pe / static_cast<double>(pe_n);
    return m;
}

inline double rmse(std::span<const double> pred, std::span<const double> truth) {
    return compute_metrics(pred, truth).rmse;
}
inline double mae(std::span<const double> pred, std::span<const double> truth) {
    return compute_metrics(pred, truth).mae;
}
inline std::optional<double> mape(std::span<const double> pred, std::span<const double> truth,
                                  double eps = kMapeEps) {
    return compute_metrics(pred, truth, eps).mape;
}

/// Metrics of one evaluation run, per horizon, pooled jointly over all test
/// windows and nodes.
struct RunEval {
    std::vector<std::size_t> horizons;
    std::vector<MetricSample> per_horizon;

    const MetricSample& at_horizon(std::size_t h) const {
        for (std::size_t i = 0; i < horizons.size(); ++i)
            if (horizons[i] == h) return per_horizon[i];
        throw ConfigError("evaluation has no horizon " + std::to_string(h));
    }
};

/// Per-horizon metrics aggregated over experimental repeats: mean and sample
/// standard deviation per (horizon, metric).
struct EvalReport {
    std::vector<std::size_t> horizons;
    std::string units = "units";
    std::vector<RunEval> runs;

    static double mean_of(std::span<const double> v) {
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    }
    static double std_of(std::span<const double> v) {
        if (v.size() < 2) return 0.0;
        const double m = mean_of(v);
        double sq = 0.0;
        for (double x : v) sq += (x - m) * (x - m);
        return std::sqrt(sq / static_cast<double>(v.size() - 1));
    }

    struct Aggregate {
        double mean = 0.0;
        double std = 0.0;
        std::size_t n = 0;        // repeats
        std::size_t excluded = 0; // MAPE exclusions (identical across repeats)
        bool defined = true;
    };

    Aggregate aggregate(std::size_t horizon, const std::string& metric) const {
        std::vector<double> vals;
        std::size_t excluded = 0;
        bool defined = true;
        for (const auto& run : runs) {
            const MetricSample& m = run.at_horizon(horizon);
            if (metric == "rmse") {
                vals.push_back(m.rmse);
            } else if (metric == "mae") {
                vals.push_back(m.mae);
            } else if (metric == "mape") {
                excluded = std::max(excluded, m.mape_excluded);
                if (m.mape)
                    vals.push_back(*m.mape);
                else
                    defined = false;
            } else {
                throw ConfigError("unknown metric: " + metric);
            }
        }
        Aggregate a;
        a.n = runs.size();
        a.excluded = excluded;
        a.defined = defined && !vals.empty();
        if (a.defined) {
            a.mean = mean_of(vals);
            a.std = std_of(vals);
        }
        return a;
    }

    std::string to_csv() const {
        std::string out = "horizon,metric,mean,std,n,excluded\n";
        for (std::size_t h : horizons) {
            for (const char* metric : {"rmse", "mape", "mae"}) {
                const Aggregate a = aggregate(h, metric);
                out += std::to_string(h) + "," + metric + ",";
                out += a.defined ? csv::format_double(a.mean) : std::string("NA");
                out += ",";
                out += a.defined ? csv::format_double(a.std) : std::string("NA");
                out += "," + std::to_string(a.n) + "," + std::to_string(a.excluded) + "\n";
            }
        }
        return out;
    }

    std::string to_table() const {
        std::string out = "horizon  metric  mean +- std          (n, excluded)  [" + units + "]\n";
        for (std::size_t h : horizons) {
            for (const char* metric : {"rmse", "mape", "mae"}) {
                const Aggregate a = aggregate(h, metric);
                char buf[128];
                if (a.defined)
                    std::snprintf(buf, sizeof(buf), "%-8zu %-7s %.4f +- %.4f  (%zu, %zu)\n", h,
                                  metric, a.mean, a.std, a.n, a.excluded);
                else
                    std::snprintf(buf, sizeof(buf), "%-8zu %-7s NA             (%zu, %zu)\n", h,
                                  metric, a.n, a.excluded);
                out += buf;
            }
        }
        return out;
    }
};

/// Evaluate a trained model over test windows: autoregressive rollout to the
/// largest horizon, metrics per horizon on de-normalized values, pooled over
/// windows and nodes. Windows are processed in fixed-size chunks so memory
/// stays flat; chunk order is deterministic.
inline RunEval evaluate(const ModelConfig& cfg, const DirectedGraph& graph,
                        const ParameterStore& store, const std::vector<WindowSample>& test,
                        const Normalizer& norm, std::span<const std::size_t> horizons,
                        std::size_t chunk = 32) {
    if (test.empty()) throw DataError("evaluate: no test windows");
    std::size_t max_h = 0;
    for (std::size_t h : horizons) max_h = std::max(max_h, h);
    if (max_h == 0) throw ConfigError("evaluate: empty horizon list");
    if (test.front().future.cols() < max_h)
        throw DataError("evaluate: test windows carry " +
                        std::to_string(test.front().future.cols()) +
                        " future steps, horizon needs " + std::to_string(max_h));

    std::vector<std::vector<double>> preds(horizons.size()), truths(horizons.size());
    for (std::size_t begin = 0; begin < test.size(); begin += chunk) {
        const std::size_t count = std::min(chunk, test.size() - begin);
        std::vector<std::size_t> chosen(count);
        std::iota(chosen.begin(), chosen.end(), begin);
        const GraphWiring wiring = make_wiring(graph, count);
        const Tensor2 input = stack_windows(test, chosen, norm);
        const Tensor2 out = rollout(cfg, wiring, input, store, max_h);
        for (std::size_t hi = 0; hi < horizons.size(); ++hi) {
            const std::size_t h = horizons[hi];
            for (std::size_t b = 0; b < count; ++b)
                for (std::size_t i = 0; i < graph.num_nodes; ++i) {
                    preds[hi].push_back(norm.invert(out(b * graph.num_nodes + i, h - 1)));
                    truths[hi].push_back(test[chosen[b]].future(i, h - 1));
                }
        }
    }
    RunEval run;
    run.horizons.assign(horizons.begin(), horizons.end());
    for (std::size_t hi = 0; hi < horizons.size(); ++hi)
        run.per_horizon.push_back(compute_metrics(preds[hi], truths[hi]));
    return run;
}

/// Predict the last observed value at every horizon.
inline Tensor2 persistence_baseline(const Tensor2& window, std::size_t horizon) {
    Tensor2 out(window.rows(), horizon);
    for (std::size_t i = 0; i < window.rows(); ++i)
        for (std::size_t h = 0; h < horizon; ++h) out(i, h) = window(i, window.cols() - 1);
    return out;
}

/// Evaluate the persistence baseline over the same test windows.
inline RunEval evaluate_persistence(const DirectedGraph& graph,
                                    const std::vector<WindowSample>& test,
                                    std::span<const std::size_t> horizons) {
    if (test.empty()) throw DataError("evaluate: no test windows");
    std::size_t max_h = 0;
    for (std::size_t h : horizons) max_h = std::max(max_h, h);
    std::vector<std::vector<double>> preds(horizons.size()), truths(horizons.size());
    for (const auto& w : test) {
        const Tensor2 out = persistence_baseline(w.window, max_h);
        for (std::size_t hi = 0; hi < horizons.size(); ++hi)
            for (std::size_t i = 0; i < graph.num_nodes; ++i) {
                preds[hi].push_back(out(i, horizons[hi] - 1));
                truths[hi].push_back(w.future(i, horizons[hi] - 1));
            }
    }
    RunEval run;
    run.horizons.assign(horizons.begin(), horizons.end());
    for (std::size_t hi = 0; hi < horizons.size(); ++hi)
        run.per_horizon.push_back(compute_metrics(preds[hi], truths[hi]));
    return run;
}

/// Zero-shot evaluation of parameters trained elsewhere on a different
/// graph. The parameters are never reshaped or retrained: compatibility is
/// checked, the shared evaluate() path runs, and a checksum proves the store
/// came back untouched.
inline RunEval transfer_evaluate(const ModelConfig& cfg, const ParameterStore& store,
                                 const DirectedGraph& target_graph,
                                 const std::vector<WindowSample>& target_test,
                                 const Normalizer& target_norm,
                                 std::span<const std::size_t> horizons) {
    validate_params(cfg, store);
    if (target_graph.attr_dim() != cfg.attr_dim)
        throw ConfigError("transfer: target graph attribute dim " +
                          std::to_string(target_graph.attr_dim()) +
                          " does not match the checkpoint's " + std::to_string(cfg.attr_dim));
    const std::uint64_t before = store.checksum();
    RunEval run = evaluate(cfg, target_graph, store, target_test, target_norm, horizons);
    if (store.checksum() != before)
        throw NumericError("transfer: parameter store was mutated during evaluation");
    return run;
}

} // namespace localegn
