#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "localegn/csv.hpp"
#include "localegn/errors.hpp"
#include "localegn/graph.hpp"
#include "localegn/rng.hpp"
#include "localegn/tensor.hpp"

namespace localegn {

/// Node readings over the study period: one row per time interval, one
/// column per node. Values are physical units (miles/hour or vehicles/hour).
struct SignalSeries {
    Tensor2 values; // T x num_nodes
    double interval_minutes = 5.0;

    std::size_t steps() const { return values.rows(); }
    std::size_t num_nodes() const { return values.cols(); }
};

/// Load a signal CSV: header `n0..n{N-1}`, one data row per interval.
/// Missing or unparsable cells are rejected, not imputed.
inline SignalSeries load_signals(const std::string& path, const DirectedGraph& graph,
                                 double interval_minutes = 5.0) {
    const auto lines = csv::read_lines(path);
    if (lines.empty()) throw DataError(path + ": empty signal file");
    const auto header = csv::split(lines[0]);
    if (header.size() != graph.num_nodes)
        throw DataError(path + ": signal has " + std::to_string(header.size()) +
                        " columns but the graph has " + std::to_string(graph.num_nodes) +
                        " nodes");
    if (lines.size() < 2) throw DataError(path + ": no data rows");

    SignalSeries s;
    s.interval_minutes = interval_minutes;
    s.values = Tensor2(lines.size() - 1, graph.num_nodes);
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto cells = csv::split(lines[r]);
        if (cells.size() != graph.num_nodes)
            throw DataError(path + ": row " + std::to_string(r) + " has " +
                            std::to_string(cells.size()) + " columns, expected " +
                            std::to_string(graph.num_nodes));
        for (std::size_t c = 0; c < cells.size(); ++c)
            s.values(r - 1, c) = csv::parse_double(cells[c], r, c + 1, path);
    }
    return s;
}

inline void write_signals(const std::string& path, const SignalSeries& s) {
    std::string out;
    for (std::size_t c = 0; c < s.num_nodes(); ++c)
        out += (c ? ",n" : "n") + std::to_string(c);
    out += "\n";
    for (std::size_t r = 0; r < s.steps(); ++r) {
        for (std::size_t c = 0; c < s.num_nodes(); ++c) {
            if (c) out += ",";
            out += csv::format_double(s.values(r, c));
        }
        out += "\n";
    }
    csv::write_file(path, out);
}

/// Chronological [begin, end) row range of a series.
struct Segment {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t length() const { return end - begin; }
};

struct SplitSegments {
    Segment train, val, test;
};

/// Raw split arithmetic: |train| = floor(r_train*T/total), |val| =
/// floor(r_val*T/total), test takes the remainder.
inline SplitSegments split_lengths(std::size_t T, std::size_t ratio_train = 6,
                                   std::size_t ratio_val = 1, std::size_t ratio_test = 1) {
    const std::size_t total = ratio_train + ratio_val + ratio_test;
    SplitSegments out;
    out.train = {0, ratio_train * T / total};
    out.val = {out.train.end, out.train.end + ratio_val * T / total};
    out.test = {out.val.end, T};
    return out;
}

/// Contiguous chronological 6:1:1 split (train then val then test). Every
/// segment must be long enough to hold at least one window at the maximum
/// horizon.
inline SplitSegments split_series(const SignalSeries& s, std::size_t lookback,
                                  std::size_t max_horizon, std::size_t ratio_train = 6,
                                  std::size_t ratio_val = 1, std::size_t ratio_test = 1) {
    SplitSegments out = split_lengths(s.steps(), ratio_train, ratio_val, ratio_test);
    const std::size_t need = lookback + max_horizon;
    for (const auto& [name, seg] :
         {std::pair{"train", out.train}, {"val", out.val}, {"test", out.test}}) {
        if (seg.length() < need)
            throw DataError(std::string("split: ") + name + " segment has " +
                            std::to_string(seg.length()) + " steps but lookback " +
                            std::to_string(lookback) + " + horizon " +
                            std::to_string(max_horizon) + " needs " + std::to_string(need));
    }
    return out;
}

/// One training/evaluation sample: the lookback window ending at tau and the
/// future slice tau+1 .. tau+horizon. Node rows align with graph node ids.
/// Edge attributes are static and live on the graph.
struct WindowSample {
    Tensor2 window; // num_nodes x lookback
    Tensor2 future; // num_nodes x horizon, physical units
    std::size_t tau = 0;
};

/// All windows of a segment, one per valid tau. The window covers
/// [tau-lookback+1, tau]; the stored future runs up to the maximum horizon.
inline std::vector<WindowSample> make_windows(const SignalSeries& s, const Segment& seg,
                                              std::size_t lookback, std::size_t horizon) {
    if (lookback < 1 || horizon < 1)
        throw ConfigError("make_windows: lookback and horizon must be >= 1");
    std::vector<WindowSample> out;
    if (seg.length() < lookback + horizon) return out;
    for (std::size_t tau = seg.begin + lookback - 1; tau + horizon < seg.end; ++tau) {
        WindowSample w;
        w.tau = tau;
        w.window = Tensor2(s.num_nodes(), lookback);
        w.future = Tensor2(s.num_nodes(), horizon);
        for (std::size_t i = 0; i < s.num_nodes(); ++i) {
            for (std::size_t m = 0; m < lookback; ++m)
                w.window(i, m) = s.values(tau - lookback + 1 + m, i);
            for (std::size_t h = 0; h < horizon; ++h)
                w.future(i, h) = s.values(tau + 1 + h, i);
        }
        out.push_back(std::move(w));
    }
    return out;
}

/// Uniformly random subset of window start-indices, without replacement,
/// seeded. With `contiguous` the same number of windows is taken as one
/// random contiguous block instead (kept chronological either way).
inline std::vector<std::size_t> subsample_indices(std::size_t count, double fraction,
                                                  std::uint64_t seed,
                                                  bool contiguous = false) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw ConfigError("subsample: fraction must be in (0, 1], got " +
                          std::to_string(fraction));
    const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(count)));
    if (keep == 0) throw DataError("subsample: resulting sample set is empty");
    if (keep >= count) {
        std::vector<std::size_t> all(count);
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    Rng rng(derive_seed(seed, "subsample"));
    if (contiguous) {
        const std::size_t start = rng.below(count - keep + 1);
        std::vector<std::size_t> out(keep);
        std::iota(out.begin(), out.end(), start);
        return out;
    }
    // Fisher-Yates prefix, then restore chronological order.
    std::vector<std::size_t> all(count);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t i = 0; i < keep; ++i) {
        const std::size_t j = i + rng.below(count - i);
        std::swap(all[i], all[j]);
    }
    std::vector<std::size_t> out(all.begin(), all.begin() + keep);
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<WindowSample> subsample_train(const std::vector<WindowSample>& train,
                                                 double fraction, std::uint64_t seed,
                                                 bool contiguous = false) {
    const auto idx = subsample_indices(train.size(), fraction, seed, contiguous);
    std::vector<WindowSample> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(train[i]);
    return out;
}

/// z-score over all nodes jointly, fitted on the training rows only.
struct Normalizer {
    double mean = 0.0;
    double std = 1.0;

    static Normalizer fit(const SignalSeries& s, const Segment& train) {
        Normalizer n;
        const std::size_t count = train.length() * s.num_nodes();
        if (count == 0) throw DataError("normalizer: empty training segment");
        double sum = 0.0;
        for (std::size_t r = train.begin; r < train.end; ++r)
            for (std::size_t c = 0; c < s.num_nodes(); ++c) sum += s.values(r, c);
        n.mean = sum / static_cast<double>(count);
        double sq = 0.0;
        for (std::size_t r = train.begin; r < train.end; ++r)
            for (std::size_t c = 0; c < s.num_nodes(); ++c) {
                const double d = s.values(r, c) - n.mean;
                sq += d * d;
            }
        n.std = std::sqrt(sq / static_cast<double>(count));
        if (!(n.std > 0.0))
            throw DataError("normalizer: zero variance in the training segment");
        return n;
    }

    double apply(double x) const { return (x - mean) / std; }
    double invert(double z) const { return z * std + mean; }

    Tensor2 apply(const Tensor2& t) const {
        Tensor2 out = t;
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = apply(out.data()[i]);
        return out;
    }
    Tensor2 invert(const Tensor2& t) const {
        Tensor2 out = t;
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = invert(out.data()[i]);
        return out;
    }
};

/// Split + windows + normalizer for one series under the experimental
/// protocol. Train windows carry horizon 1 (the optimization target is
/// always tau+1); val and test windows carry the maximum horizon so rollouts
/// can be scored. Windows are stored in physical units; normalization is
/// applied where tensors enter the model.
struct Dataset {
    SplitSegments segments;
    Normalizer normalizer;
    std::vector<WindowSample> train;      // horizon 1, after subsampling
    std::vector<WindowSample> train_full; // horizon 1, before subsampling
    std::vector<WindowSample> val;        // horizon 1
    std::vector<WindowSample> test;       // horizon max_horizon
};

inline Dataset prepare_dataset(const SignalSeries& s, std::size_t lookback,
                               std::size_t max_horizon, double subsample_fraction,
                               std::uint64_t seed, bool contiguous_subsample = false) {
    Dataset d;
    d.segments = split_series(s, lookback, max_horizon);
    d.normalizer = Normalizer::fit(s, d.segments.train);
    d.train_full = make_windows(s, d.segments.train, lookback, 1);
    d.train = subsample_train(d.train_full, subsample_fraction, seed, contiguous_subsample);
    d.val = make_windows(s, d.segments.val, lookback, 1);
    d.test = make_windows(s, d.segments.test, lookback, max_horizon);
    return d;
}

} // namespace localegn
