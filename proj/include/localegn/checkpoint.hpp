#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "localegn/dataset.hpp"
#include "localegn/errors.hpp"
#include "localegn/model.hpp"
#include "localegn/param_store.hpp"

namespace localegn {

/// A trained model on disk: manifest plus every parameter tensor. Values are
/// written as C hexfloats, so a load/save cycle is bit-exact while the file
/// stays a plain text diffable artifact.
struct Checkpoint {
    ModelConfig config;
    std::uint64_t seed = 0;
    Normalizer normalizer;
    ParameterStore params;
};

namespace detail {
inline std::string hexfloat(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}
inline double parse_hexfloat(const std::string& s, const std::string& path) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw DataError(path + ": bad numeric literal '" + s + "'");
    return v;
}
} // namespace detail

inline constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ostringstream out;
    out << "localegn-checkpoint " << kCheckpointVersion << "\n";
    out << "variant " << variant_name(ck.config.variant) << "\n";
    out << "lookback " << ck.config.lookback << "\n";
    out << "attr_dim " << ck.config.attr_dim << "\n";
    out << "hidden " << ck.config.hidden << "\n";
    out << "gn_layers " << ck.config.gn_layers << "\n";
    out << "aggregate "
        << (ck.config.aggregate == AggregateOver::Incoming ? "incoming" : "outgoing") << "\n";
    out << "seed " << ck.seed << "\n";
    out << "norm_mean " << detail::hexfloat(ck.normalizer.mean) << "\n";
    out << "norm_std " << detail::hexfloat(ck.normalizer.std) << "\n";
    out << "tensors " << ck.params.num_tensors() << "\n";
    for (const auto& [name, e] : ck.params) {
        out << "tensor " << name << " " << e.value.rows() << " " << e.value.cols() << "\n";
        for (std::size_t r = 0; r < e.value.rows(); ++r) {
            for (std::size_t c = 0; c < e.value.cols(); ++c) {
                if (c) out << " ";
                out << detail::hexfloat(e.value(r, c));
            }
            out << "\n";
        }
    }
    std::ofstream f(path);
    if (!f) throw DataError("cannot open checkpoint for writing: " + path);
    f << out.str();
    if (!f) throw DataError("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open checkpoint: " + path);
    auto next_line = [&f, &path]() {
        std::string line;
        if (!std::getline(f, line)) throw DataError(path + ": truncated checkpoint");
        return line;
    };
    auto expect_field = [&path](const std::string& line, const std::string& key) {
        if (line.compare(0, key.size() + 1, key + " ") != 0)
            throw ConfigError(path + ": expected '" + key + "', found '" + line + "'");
        return line.substr(key.size() + 1);
    };

    Checkpoint ck;
    {
        const std::string header = next_line();
        std::istringstream hs(header);
        std::string magic;
        int version = -1;
        hs >> magic >> version;
        if (magic != "localegn-checkpoint")
            throw ConfigError(path + ": not a checkpoint file");
        if (version != kCheckpointVersion)
            throw ConfigError(path + ": unsupported checkpoint version " +
                              std::to_string(version));
    }
    ck.config.variant = parse_variant(expect_field(next_line(), "variant"));
    ck.config.lookback = std::stoul(expect_field(next_line(), "lookback"));
    ck.config.attr_dim = std::stoul(expect_field(next_line(), "attr_dim"));
    ck.config.hidden = std::stoul(expect_field(next_line(), "hidden"));
    ck.config.gn_layers = std::stoul(expect_field(next_line(), "gn_layers"));
    {
        const std::string agg = expect_field(next_line(), "aggregate");
        if (agg == "incoming")
            ck.config.aggregate = AggregateOver::Incoming;
        else if (agg == "outgoing")
            ck.config.aggregate = AggregateOver::Outgoing;
        else
            throw ConfigError(path + ": unknown aggregation direction '" + agg + "'");
    }
    ck.seed = std::stoull(expect_field(next_line(), "seed"));
    ck.normalizer.mean = detail::parse_hexfloat(expect_field(next_line(), "norm_mean"), path);
    ck.normalizer.std = detail::parse_hexfloat(expect_field(next_line(), "norm_std"), path);
    const std::size_t tensors = std::stoul(expect_field(next_line(), "tensors"));
    for (std::size_t t = 0; t < tensors; ++t) {
        std::istringstream hs(next_line());
        std::string tag, name;
        std::size_t rows = 0, cols = 0;
        hs >> tag >> name >> rows >> cols;
        if (tag != "tensor" || name.empty() || rows == 0 || cols == 0)
            throw DataError(path + ": malformed tensor header");
        Tensor2 v(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            std::istringstream row(next_line());
            std::string cell;
            for (std::size_t c = 0; c < cols; ++c) {
                if (!(row >> cell)) throw DataError(path + ": truncated tensor " + name);
                v(r, c) = detail::parse_hexfloat(cell, path);
            }
        }
        ck.params.add(name, std::move(v));
    }
    validate_params(ck.config, ck.params);
    return ck;
}

/// Manifest compatibility for zero-shot use of a checkpoint under a
/// requested configuration.
inline void require_manifest(const Checkpoint& ck, const ModelConfig& want) {
    auto fail = [](const std::string& what) {
        throw ConfigError("checkpoint manifest mismatch: " + what);
    };
    if (ck.config.variant != want.variant)
        fail(std::string("variant ") + variant_name(ck.config.variant) + " vs " +
             variant_name(want.variant));
    if (ck.config.lookback != want.lookback)
        fail("lookback " + std::to_string(ck.config.lookback) + " vs " +
             std::to_string(want.lookback));
    if (ck.config.attr_dim != want.attr_dim)
        fail("attr_dim " + std::to_string(ck.config.attr_dim) + " vs " +
             std::to_string(want.attr_dim));
    if (ck.config.hidden != want.hidden)
        fail("hidden " + std::to_string(ck.config.hidden) + " vs " +
             std::to_string(want.hidden));
}

} // namespace localegn
