#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "localegn/dataset.hpp"
#include "localegn/errors.hpp"
#include "localegn/graph.hpp"
#include "localegn/param_store.hpp"
#include "localegn/tape.hpp"

namespace localegn {

enum class ModelVariant { LocaleGn, GnOnly, NodeGruOnly, ResidualGn, AttentionGn };

inline const char* variant_name(ModelVariant v) {
    switch (v) {
    case ModelVariant::LocaleGn: return "locale-gn";
    case ModelVariant::GnOnly: return "gn-only";
    case ModelVariant::NodeGruOnly: return "node-gru-only";
    case ModelVariant::ResidualGn: return "residual-gn";
    case ModelVariant::AttentionGn: return "attention-gn";
    }
    return "?";
}

inline ModelVariant parse_variant(const std::string& s) {
    for (ModelVariant v : {ModelVariant::LocaleGn, ModelVariant::GnOnly,
                           ModelVariant::NodeGruOnly, ModelVariant::ResidualGn,
                           ModelVariant::AttentionGn})
        if (s == variant_name(v)) return v;
    throw ConfigError("unknown model variant: " + s);
}

/// Which edges aggregate into a node. Incoming (head(k) == i) is the
/// default; the tail-based reading stays available as a switch.
enum class AggregateOver { Incoming, Outgoing };

struct ModelConfig {
    ModelVariant variant = ModelVariant::LocaleGn;
    std::size_t lookback = 12; // M
    std::size_t attr_dim = 1;
    std::size_t hidden = 64; // H
    std::size_t gn_layers = 1;
    AggregateOver aggregate = AggregateOver::Incoming;

    bool has_gn() const { return variant != ModelVariant::NodeGruOnly; }
    bool has_gru() const {
        return variant == ModelVariant::LocaleGn || variant == ModelVariant::NodeGruOnly;
    }
    bool has_attention() const { return variant == ModelVariant::AttentionGn; }
    bool gn_residual() const { return variant == ModelVariant::ResidualGn; }
    std::size_t output_width() const {
        return variant == ModelVariant::LocaleGn ? 2 * hidden : hidden;
    }
};

// ---- parameter layout ----------------------------------------------------

inline std::size_t dense_param_count(std::size_t in, std::size_t out) {
    return in * out + out;
}

/// Closed-form trainable-parameter count. A pure function of
/// (lookback, attr_dim, hidden, variant); graph size never enters.
inline std::size_t count_parameters(const ModelConfig& cfg) {
    const std::size_t H = cfg.hidden, M = cfg.lookback, A = cfg.attr_dim;
    const std::size_t gru = 3 * (H + H * H + H); // per gate: W 1xH, U HxH, b 1xH
    std::size_t n = 0;
    if (cfg.has_gru()) n += gru;
    if (cfg.has_gn()) {
        n += dense_param_count(M, H);     // node encoder
        n += dense_param_count(A, H);     // edge encoder
        n += dense_param_count(3 * H, H); // edge update
        n += dense_param_count(2 * H, H); // node update
        n += dense_param_count(H, H);     // node decoder
    }
    if (cfg.has_attention()) n += 3 * (M * H) + dense_param_count(H, M);
    n += dense_param_count(cfg.output_width(), 1);
    return n;
}

/// Freshly initialized store with exactly the tensors of the variant.
inline ParameterStore make_param_store(const ModelConfig& cfg, std::uint64_t seed) {
    const std::size_t H = cfg.hidden, M = cfg.lookback, A = cfg.attr_dim;
    ParameterStore s;
    if (cfg.has_gru()) {
        for (const char* gate : {"z", "r", "h"}) {
            s.add(std::string("gru.") + gate + ".W", Tensor2(1, H));
            s.add(std::string("gru.") + gate + ".U", Tensor2(H, H));
            s.add(std::string("gru.") + gate + ".b", Tensor2(1, H));
        }
    }
    if (cfg.has_gn()) {
        s.add("enc_v.W", Tensor2(M, H));
        s.add("enc_v.b", Tensor2(1, H));
        s.add("enc_e.W", Tensor2(A, H));
        s.add("enc_e.b", Tensor2(1, H));
        s.add("phi_e.W", Tensor2(3 * H, H));
        s.add("phi_e.b", Tensor2(1, H));
        s.add("phi_v.W", Tensor2(2 * H, H));
        s.add("phi_v.b", Tensor2(1, H));
        s.add("dec_v.W", Tensor2(H, H));
        s.add("dec_v.b", Tensor2(1, H));
    }
    if (cfg.has_attention()) {
        s.add("attn.q.W", Tensor2(M, H));
        s.add("attn.k.W", Tensor2(M, H));
        s.add("attn.v.W", Tensor2(M, H));
        s.add("attn.proj.W", Tensor2(H, M));
        s.add("attn.proj.b", Tensor2(1, M));
    }
    s.add("out.W", Tensor2(cfg.output_width(), 1));
    s.add("out.b", Tensor2(1, 1));
    init_params(s, seed);
    return s;
}

inline void validate_params(const ModelConfig& cfg, const ParameterStore& store) {
    const ParameterStore expect = make_param_store(cfg, 0);
    if (store.num_tensors() != expect.num_tensors())
        throw ConfigError("parameter store does not match variant " +
                          std::string(variant_name(cfg.variant)) + ": expected " +
                          std::to_string(expect.num_tensors()) + " tensors, got " +
                          std::to_string(store.num_tensors()));
    for (const auto& [name, e] : expect) {
        if (!store.contains(name))
            throw ConfigError("parameter store is missing tensor " + name);
        if (!store.value(name).same_shape(e.value))
            throw ConfigError("parameter " + name + " has shape " +
                              store.value(name).shape_str() + ", expected " +
                              e.value.shape_str());
    }
}

// ---- graph wiring ----------------------------------------------------------

/// Edge wiring for a forward pass, possibly over a disjoint union of several
/// copies of the same graph (windows batched as one big graph).
struct GraphWiring {
    std::size_t num_nodes = 0;
    std::vector<std::uint32_t> tails;
    std::vector<std::uint32_t> heads;
    Tensor2 edge_attr; // num_edges x attr_dim
    std::size_t copies = 1;
    std::size_t nodes_per_copy = 0;

    std::size_t num_edges() const { return tails.size(); }
};

inline GraphWiring make_wiring(const DirectedGraph& g, std::size_t copies = 1) {
    GraphWiring w;
    w.copies = copies;
    w.nodes_per_copy = g.num_nodes;
    w.num_nodes = g.num_nodes * copies;
    w.tails.reserve(g.num_edges() * copies);
    w.heads.reserve(g.num_edges() * copies);
    w.edge_attr = Tensor2(g.num_edges() * copies, g.attr_dim());
    for (std::size_t b = 0; b < copies; ++b) {
        const auto off = static_cast<std::uint32_t>(b * g.num_nodes);
        for (std::size_t k = 0; k < g.num_edges(); ++k) {
            w.tails.push_back(off + static_cast<std::uint32_t>(g.edges[k].tail));
            w.heads.push_back(off + static_cast<std::uint32_t>(g.edges[k].head));
            for (std::size_t c = 0; c < g.attr_dim(); ++c)
                w.edge_attr(b * g.num_edges() + k, c) = g.edge_attr(k, c);
        }
    }
    return w;
}

/// Stack normalized windows of the chosen samples into one (B*N_v) x M input.
inline Tensor2 stack_windows(const std::vector<WindowSample>& samples,
                             std::span<const std::size_t> chosen, const Normalizer& norm) {
    if (chosen.empty()) throw ConfigError("stack_windows: empty selection");
    const std::size_t nv = samples[chosen[0]].window.rows();
    const std::size_t m = samples[chosen[0]].window.cols();
    Tensor2 out(nv * chosen.size(), m);
    for (std::size_t b = 0; b < chosen.size(); ++b) {
        const Tensor2& w = samples[chosen[b]].window;
        for (std::size_t i = 0; i < nv; ++i)
            for (std::size_t j = 0; j < m; ++j) out(b * nv + i, j) = norm.apply(w(i, j));
    }
    return out;
}

/// Stack the normalized step-`h` targets (0-based) the same way, as a column.
inline Tensor2 stack_targets(const std::vector<WindowSample>& samples,
                             std::span<const std::size_t> chosen, const Normalizer& norm,
                             std::size_t h = 0) {
    const std::size_t nv = samples[chosen[0]].future.rows();
    Tensor2 out(nv * chosen.size(), 1);
    for (std::size_t b = 0; b < chosen.size(); ++b)
        for (std::size_t i = 0; i < nv; ++i)
            out(b * nv + i, 0) = norm.apply(samples[chosen[b]].future(i, h));
    return out;
}

// ---- forward pass ----------------------------------------------------------

/// Tape leaves of one bound forward pass, addressable by parameter name.
struct BoundParams {
    ParamBindings bindings;
    std::map<std::string, TensorRef> by_name;

    TensorRef at(const std::string& name) const {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ConfigError("forward: missing parameter " + name);
        return it->second;
    }
};

inline BoundParams bind_model(Tape& tape, const ParameterStore& store) {
    BoundParams b;
    b.bindings = bind_params(tape, store);
    for (const auto& [name, ref] : b.bindings.leaves) b.by_name.emplace(name, ref);
    return b;
}

inline TensorRef dense(Tape& t, TensorRef x, TensorRef w, TensorRef b) {
    return t.add_row_bias(t.matmul(x, w), b);
}

inline TensorRef dense_relu(Tape& t, TensorRef x, TensorRef w, TensorRef b) {
    return t.relu(dense(t, x, w, b));
}

/// Shared-weight GRU over the lookback window: one scalar reading per step,
/// hidden state per node row, zero initial state. Returns the final hidden
/// state, rows aligned with the input rows.
inline TensorRef node_gru(Tape& t, TensorRef window, const BoundParams& p) {
    return t.gru_sequence(window, p.at("gru.z.W"), p.at("gru.z.U"), p.at("gru.z.b"),
                          p.at("gru.r.W"), p.at("gru.r.U"), p.at("gru.r.b"),
                          p.at("gru.h.W"), p.at("gru.h.U"), p.at("gru.h.b"));
}

struct EncodedGraph {
    TensorRef nodes; // rows x H
    TensorRef edges; // num_edges x H
};

/// Node and edge encoders: one dense layer + ReLU each.
inline EncodedGraph encode(Tape& t, TensorRef window, TensorRef edge_attr,
                           const BoundParams& p) {
    return {dense_relu(t, window, p.at("enc_v.W"), p.at("enc_v.b")),
            dense_relu(t, edge_attr, p.at("enc_e.W"), p.at("enc_e.b"))};
}

/// One graph-network layer: per-edge update from (edge, tail, head) features,
/// per-node mean aggregation of its incoming updated edges (zero vector when
/// the in-set is empty), then per-node update from (aggregate, node). With
/// `residual`, the incoming node features are added back to the update.
inline EncodedGraph gn_block(Tape& t, const EncodedGraph& g, const GraphWiring& w,
                             const BoundParams& p, AggregateOver agg, bool residual) {
    const TensorRef tail_feats = t.gather_rows(g.nodes, w.tails);
    const TensorRef head_feats = t.gather_rows(g.nodes, w.heads);
    const TensorRef edge_in = t.concat_cols(g.edges, t.concat_cols(tail_feats, head_feats));
    const TensorRef edges_updated = dense_relu(t, edge_in, p.at("phi_e.W"), p.at("phi_e.b"));
    const auto& group = agg == AggregateOver::Incoming ? w.heads : w.tails;
    const TensorRef aggregated = t.scatter_mean_rows(edges_updated, group, w.num_nodes);
    const TensorRef node_in = t.concat_cols(aggregated, g.nodes);
    TensorRef nodes_updated = dense_relu(t, node_in, p.at("phi_v.W"), p.at("phi_v.b"));
    if (residual) nodes_updated = t.add(nodes_updated, g.nodes);
    return {nodes_updated, edges_updated};
}

/// Node decoder plus the output layer. The final dense layer carries no ReLU:
/// predictions live in z-scored units where a ReLU would clip every
/// below-mean target.
inline TensorRef decode_and_output(Tape& t, TensorRef gn_nodes, TensorRef gru_state,
                                   const BoundParams& p, const ModelConfig& cfg) {
    TensorRef head;
    if (cfg.has_gn()) {
        const TensorRef decoded = dense_relu(t, gn_nodes, p.at("dec_v.W"), p.at("dec_v.b"));
        head = cfg.has_gru() ? t.concat_cols(decoded, gru_state) : decoded;
    } else {
        head = gru_state;
    }
    return dense(t, head, p.at("out.W"), p.at("out.b"));
}

/// Scaled dot-product self-attention across the nodes of each graph copy,
/// projected back to window width and added to the raw windows.
inline TensorRef attention_mix(Tape& t, TensorRef window, const GraphWiring& w,
                               const BoundParams& p) {
    const std::size_t H = p.at("attn.q.W").cols;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(H));
    std::vector<TensorRef> mixed;
    mixed.reserve(w.copies);
    for (std::size_t b = 0; b < w.copies; ++b) {
        const TensorRef win = w.copies == 1
                                  ? window
                                  : t.slice_rows(window, b * w.nodes_per_copy, w.nodes_per_copy);
        const TensorRef q = t.matmul(win, p.at("attn.q.W"));
        const TensorRef k = t.matmul(win, p.at("attn.k.W"));
        const TensorRef v = t.matmul(win, p.at("attn.v.W"));
        const TensorRef scores = t.scale(t.matmul(q, t.transpose(k)), inv_scale);
        const TensorRef attended = t.matmul(t.softmax_rows(scores), v);
        const TensorRef proj = dense(t, attended, p.at("attn.proj.W"), p.at("attn.proj.b"));
        mixed.push_back(t.add(win, proj));
    }
    if (mixed.size() == 1) return mixed.front();
    return t.stack_rows(mixed);
}

/// Full forward pass: normalized windows in, one normalized next-step
/// prediction per node row out.
inline TensorRef model_forward(Tape& t, const ModelConfig& cfg, const GraphWiring& w,
                               TensorRef window, TensorRef edge_attr,
                               const BoundParams& p) {
    if (window.cols != cfg.lookback)
        throw ShapeError("forward: window has " + std::to_string(window.cols) +
                         " columns, lookback is " + std::to_string(cfg.lookback));
    TensorRef gru_state{};
    if (cfg.has_gru()) gru_state = node_gru(t, window, p);
    TensorRef gn_nodes{};
    if (cfg.has_gn()) {
        const TensorRef node_input =
            cfg.has_attention() ? attention_mix(t, window, w, p) : window;
        EncodedGraph g = encode(t, node_input, edge_attr, p);
        for (std::size_t layer = 0; layer < cfg.gn_layers; ++layer)
            g = gn_block(t, g, w, p, cfg.aggregate, cfg.gn_residual());
        gn_nodes = g.nodes;
    }
    return decode_and_output(t, gn_nodes, gru_state, p, cfg);
}

/// Convenience single-tape forward from plain tensors.
inline Tensor2 forward_values(const ModelConfig& cfg, const GraphWiring& w,
                              const Tensor2& window, const ParameterStore& store) {
    validate_params(cfg, store);
    Tape t;
    const BoundParams p = bind_model(t, store);
    const TensorRef win = t.leaf(window);
    const TensorRef attr = t.leaf(w.edge_attr);
    const TensorRef out = model_forward(t, cfg, w, win, attr, p);
    return t.value(out);
}

/// Autoregressive rollout: predict one step, drop the oldest window column,
/// append the prediction, repeat. Everything stays in normalized units; a
/// fresh tape per step keeps memory flat. Returns rows x horizon.
inline Tensor2 rollout(const ModelConfig& cfg, const GraphWiring& w, const Tensor2& window,
                       const ParameterStore& store, std::size_t horizon) {
    if (horizon < 1) throw ConfigError("rollout: horizon must be >= 1");
    validate_params(cfg, store);
    Tensor2 cur = window;
    Tensor2 out(window.rows(), horizon);
    for (std::size_t h = 0; h < horizon; ++h) {
        Tape t;
        const BoundParams p = bind_model(t, store);
        const TensorRef win = t.leaf(cur);
        const TensorRef attr = t.leaf(w.edge_attr);
        const Tensor2& pred = t.value(model_forward(t, cfg, w, win, attr, p));
        for (std::size_t i = 0; i < cur.rows(); ++i) {
            out(i, h) = pred(i, 0);
            for (std::size_t j = 0; j + 1 < cur.cols(); ++j) cur(i, j) = cur(i, j + 1);
            cur(i, cur.cols() - 1) = pred(i, 0);
        }
    }
    return out;
}

} // namespace localegn
