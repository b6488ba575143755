#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "localegn/errors.hpp"
#include "localegn/rng.hpp"
#include "localegn/tape.hpp"
#include "localegn/tensor.hpp"

namespace localegn {

/// Every trainable tensor of a model variant, addressable by stable name,
/// with a paired same-shape gradient buffer. Iteration order is the name
/// order of the map, which keeps all reductions and checksums deterministic.
class ParameterStore {
public:
    struct Entry {
        Tensor2 value;
        Tensor2 grad;
    };

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }

    void add(const std::string& name, Tensor2 value) {
        if (contains(name)) throw ConfigError("parameter already defined: " + name);
        Entry e;
        e.grad = Tensor2(value.rows(), value.cols(), 0.0);
        e.value = std::move(value);
        entries_.emplace(name, std::move(e));
    }

    Tensor2& value(const std::string& name) { return at(name).value; }
    const Tensor2& value(const std::string& name) const { return at(name).value; }
    Tensor2& grad(const std::string& name) { return at(name).grad; }
    const Tensor2& grad(const std::string& name) const { return at(name).grad; }

    void zero_grads() {
        for (auto& [_, e] : entries_) e.grad.fill(0.0);
    }

    std::size_t num_tensors() const { return entries_.size(); }

    std::size_t num_scalars() const {
        std::size_t n = 0;
        for (const auto& [_, e] : entries_) n += e.value.size();
        return n;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& [k, _] : entries_) out.push_back(k);
        return out;
    }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    /// FNV-1a over the raw bytes of all values, in name order. Used to prove
    /// that evaluation paths never mutate parameters.
    std::uint64_t checksum() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&h](const void* p, std::size_t n) {
            const auto* b = static_cast<const unsigned char*>(p);
            for (std::size_t i = 0; i < n; ++i) {
                h ^= b[i];
                h *= 0x100000001b3ULL;
            }
        };
        for (const auto& [name, e] : entries_) {
            mix(name.data(), name.size());
            mix(e.value.data(), e.value.size() * sizeof(double));
        }
        return h;
    }

private:
    Entry& at(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }
    const Entry& at(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }

    std::map<std::string, Entry> entries_;
};

/// Mapping from parameter names to the tape leaves of one recorded forward
/// pass.
struct ParamBindings {
    std::vector<std::pair<std::string, TensorRef>> leaves;
};

/// Register every parameter tensor as a tape leaf.
inline ParamBindings bind_params(Tape& tape, const ParameterStore& store) {
    ParamBindings b;
    for (const auto& [name, e] : store)
        b.leaves.emplace_back(name, tape.leaf(e.value));
    return b;
}

/// Run the reverse sweep from `loss` and add the resulting parameter
/// adjoints into the store's gradient buffers. Parameters the loss does not
/// reach contribute nothing (their adjoints are zero). Calling this twice
/// without zero_grads() doubles every gradient.
inline void backward_into(Tape& tape, TensorRef loss, const ParamBindings& bindings,
                          ParameterStore& store) {
    tape.backward(loss);
    for (const auto& [name, ref] : bindings.leaves) {
        Tensor2& dst = store.grad(name);
        const Tensor2& src = tape.grad(ref);
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += src.data()[i];
    }
}

/// Seeded init: biases (names ending in ".b") start at zero, weights uniform
/// in [-1/sqrt(fan_in), 1/sqrt(fan_in)]. Each tensor draws from its own
/// name-derived stream so the result does not depend on insertion order.
inline void init_params(ParameterStore& store, std::uint64_t seed) {
    for (auto& [name, e] : store) {
        if (name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0) {
            e.value.fill(0.0);
            continue;
        }
        Rng rng(derive_seed(seed, name));
        const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(
                                 e.value.rows(), 1)));
        for (std::size_t i = 0; i < e.value.size(); ++i)
            e.value.data()[i] = rng.uniform(-bound, bound);
    }
}

} // namespace localegn
