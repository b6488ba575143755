#pragma once

#include <cstdint>
#include <vector>

#include "localegn/metrics.hpp"
#include "localegn/train.hpp"

namespace localegn {

/// Seeded repeats of the full protocol — subsample, train, evaluate —
/// reported as mean plus sample standard deviation per metric. Repeat r runs
/// with seed base_seed + r * seed_stride; a stride of 0 degenerates every
/// repeat to the same run, which must then report zero deviation.
struct ExperimentResult {
    EvalReport report;
    std::vector<TrainResult> trainings; // one per repeat, repeat order
    std::vector<Dataset> datasets;      // the per-repeat subsampled data
};

inline ExperimentResult repeat_experiment(const ModelConfig& model_cfg,
                                          const SignalSeries& series,
                                          const DirectedGraph& graph, const TrainConfig& base,
                                          std::span<const std::size_t> horizons,
                                          std::size_t repeats = 5,
                                          std::uint64_t seed_stride = 1,
                                          const std::string& units = "units") {
    if (repeats < 2) throw ConfigError("repeat_experiment: needs at least 2 repeats");
    std::size_t max_h = 1;
    for (std::size_t h : horizons) max_h = std::max(max_h, h);
    ExperimentResult out;
    out.report.horizons.assign(horizons.begin(), horizons.end());
    out.report.units = units;
    for (std::size_t r = 0; r < repeats; ++r) {
        TrainConfig cfg = base;
        cfg.seed = base.seed + r * seed_stride;
        Dataset data = prepare_dataset(series, cfg.lookback, max_h, cfg.subsample_fraction,
                                       cfg.seed, cfg.contiguous_subsample);
        TrainResult tr = train(model_cfg, data, graph, cfg);
        out.report.runs.push_back(
            evaluate(model_cfg, graph, tr.params, data.test, data.normalizer, horizons));
        out.trainings.push_back(std::move(tr));
        out.datasets.push_back(std::move(data));
    }
    return out;
}

} // namespace localegn
