#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "localegn/errors.hpp"
#include "localegn/tensor.hpp"

namespace localegn {

/// Handle to a tensor recorded on a Tape. Carries the shape so callers can
/// wire ops without tape lookups.
struct TensorRef {
    std::uint32_t id = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
};

/// Reverse-mode tape over Tensor2 primitives. Ops are recorded in execution
/// order, which is a topological order by construction; backward() replays
/// them strictly in reverse. Single-threaded by contract: a Tape may be moved
/// across threads but never shared mutably.
///
/// backward() recomputes adjoints from scratch on every call (seed 1 at the
/// loss); accumulation across calls is the caller's concern (see
/// accumulate_grads in param_store.hpp).
class Tape {
    enum class Op : std::uint8_t {
        Leaf,
        MatMul,
        Add,
        Sub,
        Hadamard,
        AddRowBias,
        Relu,
        Sigmoid,
        Tanh,
        ConcatCols,
        SliceRows,
        SliceCols,
        StackRows,
        MeanRows,
        GatherRows,
        ScatterMeanRows,
        Transpose,
        SoftmaxRows,
        Scale,
        SumAll,
        GruSequence,
    };

    struct Node {
        Op op = Op::Leaf;
        std::uint32_t a = 0, b = 0;
        std::vector<std::uint32_t> many; // n-ary inputs or row/group indices
        std::uint32_t i0 = 0, i1 = 0;    // slice offset / extent
        double c = 0.0;                  // scale constant
        std::vector<double> saved;       // extra forward state for fused ops
    };

public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    void reserve(std::size_t n) {
        nodes_.reserve(n);
        values_.reserve(n);
    }

    std::size_t num_nodes() const { return nodes_.size(); }

    const Tensor2& value(TensorRef r) const { return values_[r.id]; }

    /// Adjoint from the most recent backward() call; zero tensor if the node
    /// was not reached.
    const Tensor2& grad(TensorRef r) const { return adjoints_[r.id]; }

    TensorRef leaf(Tensor2 v) {
        Node n;
        n.op = Op::Leaf;
        return push(std::move(n), std::move(v));
    }

    TensorRef zeros(std::size_t rows, std::size_t cols) {
        return leaf(Tensor2(rows, cols, 0.0));
    }

    TensorRef constant(std::size_t rows, std::size_t cols, double fill) {
        return leaf(Tensor2(rows, cols, fill));
    }

    TensorRef matmul(TensorRef a, TensorRef b) {
        if (a.cols != b.rows)
            throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a) +
                             " times " + shape_str(b));
        Tensor2 out(a.rows, b.cols);
        matmul_acc(values_[a.id], values_[b.id], out);
        Node n;
        n.op = Op::MatMul;
        n.a = a.id;
        n.b = b.id;
        return push(std::move(n), std::move(out));
    }

    TensorRef add(TensorRef a, TensorRef b) { return binary(Op::Add, a, b); }
    TensorRef sub(TensorRef a, TensorRef b) { return binary(Op::Sub, a, b); }
    TensorRef hadamard(TensorRef a, TensorRef b) { return binary(Op::Hadamard, a, b); }

    /// out(i,j) = a(i,j) + bias(0,j). The only broadcast in the engine.
    TensorRef add_row_bias(TensorRef a, TensorRef bias) {
        if (bias.rows != 1 || bias.cols != a.cols)
            throw ShapeError("add_row_bias: bias " + shape_str(bias) +
                             " does not broadcast over " + shape_str(a));
        Tensor2 out = values_[a.id];
        const Tensor2& bv = values_[bias.id];
        for (std::size_t i = 0; i < out.rows(); ++i) {
            double* row = out.row(i);
            for (std::size_t j = 0; j < out.cols(); ++j) row[j] += bv(0, j);
        }
        Node n;
        n.op = Op::AddRowBias;
        n.a = a.id;
        n.b = bias.id;
        return push(std::move(n), std::move(out));
    }

    TensorRef relu(TensorRef a) { return unary(Op::Relu, a); }
    TensorRef sigmoid(TensorRef a) { return unary(Op::Sigmoid, a); }
    TensorRef tanh(TensorRef a) { return unary(Op::Tanh, a); }

    TensorRef concat_cols(TensorRef a, TensorRef b) {
        if (a.rows != b.rows)
            throw ShapeError("concat_cols: row counts disagree, " + shape_str(a) +
                             " vs " + shape_str(b));
        Tensor2 out(a.rows, a.cols + b.cols);
        const Tensor2& av = values_[a.id];
        const Tensor2& bv = values_[b.id];
        for (std::size_t i = 0; i < out.rows(); ++i) {
            double* row = out.row(i);
            std::copy(av.row(i), av.row(i) + a.cols, row);
            std::copy(bv.row(i), bv.row(i) + b.cols, row + a.cols);
        }
        Node n;
        n.op = Op::ConcatCols;
        n.a = a.id;
        n.b = b.id;
        n.i0 = a.cols;
        return push(std::move(n), std::move(out));
    }

    TensorRef slice_rows(TensorRef a, std::size_t r0, std::size_t nrows) {
        if (r0 + nrows > a.rows)
            throw ShapeError("slice_rows: range [" + std::to_string(r0) + ", " +
                             std::to_string(r0 + nrows) + ") exceeds " + shape_str(a));
        Tensor2 out(nrows, a.cols);
        const Tensor2& av = values_[a.id];
        std::copy(av.row(r0), av.row(r0) + nrows * a.cols, out.data());
        Node n;
        n.op = Op::SliceRows;
        n.a = a.id;
        n.i0 = static_cast<std::uint32_t>(r0);
        n.i1 = static_cast<std::uint32_t>(nrows);
        return push(std::move(n), std::move(out));
    }

    TensorRef slice_cols(TensorRef a, std::size_t c0, std::size_t ncols) {
        if (c0 + ncols > a.cols)
            throw ShapeError("slice_cols: range [" + std::to_string(c0) + ", " +
                             std::to_string(c0 + ncols) + ") exceeds " + shape_str(a));
        Tensor2 out(a.rows, ncols);
        const Tensor2& av = values_[a.id];
        for (std::size_t i = 0; i < out.rows(); ++i)
            std::copy(av.row(i) + c0, av.row(i) + c0 + ncols, out.row(i));
        Node n;
        n.op = Op::SliceCols;
        n.a = a.id;
        n.i0 = static_cast<std::uint32_t>(c0);
        n.i1 = static_cast<std::uint32_t>(ncols);
        return push(std::move(n), std::move(out));
    }

    /// Vertical concatenation of the inputs, in argument order.
    TensorRef stack_rows(std::span<const TensorRef> parts) {
        if (parts.empty()) throw ShapeError("stack_rows: empty input list");
        const std::uint32_t cols = parts.front().cols;
        std::size_t rows = 0;
        for (const auto& p : parts) {
            if (p.cols != cols)
                throw ShapeError("stack_rows: column counts disagree, " +
                                 shape_str(parts.front()) + " vs " + shape_str(p));
            rows += p.rows;
        }
        Tensor2 out(rows, cols);
        Node n;
        n.op = Op::StackRows;
        n.many.reserve(parts.size());
        std::size_t r = 0;
        for (const auto& p : parts) {
            const Tensor2& pv = values_[p.id];
            std::copy(pv.data(), pv.data() + pv.size(), out.row(r));
            r += p.rows;
            n.many.push_back(p.id);
        }
        return push(std::move(n), std::move(out));
    }

    /// Elementwise mean of same-shape inputs. The summation order is fixed by
    /// ascending tape id, so any permutation of the argument list produces a
    /// bit-identical result.
    TensorRef mean_rows(std::span<const TensorRef> parts) {
        if (parts.empty()) throw ShapeError("mean_rows: empty input set");
        for (const auto& p : parts)
            if (p.rows != parts.front().rows || p.cols != parts.front().cols)
                throw ShapeError("mean_rows: shape mismatch " + shape_str(parts.front()) +
                                 " vs " + shape_str(p));
        Node n;
        n.op = Op::MeanRows;
        n.many.reserve(parts.size());
        for (const auto& p : parts) n.many.push_back(p.id);
        std::sort(n.many.begin(), n.many.end());
        Tensor2 out(parts.front().rows, parts.front().cols);
        for (std::uint32_t id : n.many) {
            const Tensor2& pv = values_[id];
            for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += pv.data()[i];
        }
        const double inv = 1.0 / static_cast<double>(n.many.size());
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= inv;
        return push(std::move(n), std::move(out));
    }

    /// out(r, :) = a(rows[r], :). Duplicate indices allowed; backward
    /// scatter-adds in ascending output-row order.
    TensorRef gather_rows(TensorRef a, std::span<const std::uint32_t> rows) {
        Tensor2 out(rows.size(), a.cols);
        const Tensor2& av = values_[a.id];
        Node n;
        n.op = Op::GatherRows;
        n.a = a.id;
        n.many.assign(rows.begin(), rows.end());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r] >= a.rows)
                throw ShapeError("gather_rows: index " + std::to_string(rows[r]) +
                                 " out of range for " + shape_str(a));
            std::copy(av.row(rows[r]), av.row(rows[r]) + a.cols, out.row(r));
        }
        return push(std::move(n), std::move(out));
    }

    /// Grouped elementwise mean: out(g, :) = mean of rows r with group[r] == g,
    /// or zero if the group is empty. Rows are summed in ascending r, matching
    /// mean_rows' fixed-order rule for per-group aggregation by ascending id.
    TensorRef scatter_mean_rows(TensorRef a, std::span<const std::uint32_t> group,
                                std::size_t num_groups) {
        if (group.size() != a.rows)
            throw ShapeError("scatter_mean_rows: group list length " +
                             std::to_string(group.size()) + " vs rows of " + shape_str(a));
        Tensor2 out(num_groups, a.cols);
        std::vector<std::uint32_t> count(num_groups, 0);
        const Tensor2& av = values_[a.id];
        for (std::size_t r = 0; r < group.size(); ++r) {
            if (group[r] >= num_groups)
                throw ShapeError("scatter_mean_rows: group " + std::to_string(group[r]) +
                                 " out of range " + std::to_string(num_groups));
            ++count[group[r]];
            double* orow = out.row(group[r]);
            const double* arow = av.row(r);
            for (std::size_t j = 0; j < a.cols; ++j) orow[j] += arow[j];
        }
        for (std::size_t g = 0; g < num_groups; ++g) {
            if (count[g] == 0) continue;
            const double inv = 1.0 / static_cast<double>(count[g]);
            double* orow = out.row(g);
            for (std::size_t j = 0; j < a.cols; ++j) orow[j] *= inv;
        }
        Node n;
        n.op = Op::ScatterMeanRows;
        n.a = a.id;
        n.many.assign(group.begin(), group.end());
        return push(std::move(n), std::move(out));
    }

    TensorRef transpose(TensorRef a) {
        Tensor2 out = transposed(values_[a.id]);
        Node n;
        n.op = Op::Transpose;
        n.a = a.id;
        return push(std::move(n), std::move(out));
    }

    /// Row-wise softmax, numerically stabilized by the row max.
    TensorRef softmax_rows(TensorRef a) {
        Tensor2 out = values_[a.id];
        for (std::size_t i = 0; i < out.rows(); ++i) {
            double* row = out.row(i);
            double mx = row[0];
            for (std::size_t j = 1; j < out.cols(); ++j) mx = std::max(mx, row[j]);
            double sum = 0.0;
            for (std::size_t j = 0; j < out.cols(); ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            const double inv = 1.0 / sum;
            for (std::size_t j = 0; j < out.cols(); ++j) row[j] *= inv;
        }
        Node n;
        n.op = Op::SoftmaxRows;
        n.a = a.id;
        return push(std::move(n), std::move(out));
    }

    TensorRef scale(TensorRef a, double c) {
        Tensor2 out = values_[a.id];
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= c;
        Node n;
        n.op = Op::Scale;
        n.a = a.id;
        n.c = c;
        return push(std::move(n), std::move(out));
    }

    /// Fused GRU recurrence over a window of scalar readings: one column per
    /// step, shared weights across rows, zero initial state. Equivalent to
    /// composing the recurrence from the primitives above, recorded as a
    /// single op. Weight order per gate g in {z, r, h}: input map W_g (1xH),
    /// recurrent map U_g (HxH), bias b_g (1xH), with
    ///   z = sigmoid(x W_z + h U_z + b_z)
    ///   r = sigmoid(x W_r + h U_r + b_r)
    ///   c = tanh(x W_h + (r . h) U_h + b_h)
    ///   h' = (1 - z) . h + z . c
    TensorRef gru_sequence(TensorRef window, TensorRef wz, TensorRef uz, TensorRef bz,
                           TensorRef wr, TensorRef ur, TensorRef br, TensorRef wh,
                           TensorRef uh, TensorRef bh) {
        const std::size_t R = window.rows, M = window.cols, H = uz.rows;
        for (const TensorRef w : {wz, wr, wh})
            if (w.rows != 1 || w.cols != H)
                throw ShapeError("gru: input weight must be 1x" + std::to_string(H) +
                                 ", got " + shape_str(w));
        for (const TensorRef u : {uz, ur, uh})
            if (u.rows != H || u.cols != H)
                throw ShapeError("gru: recurrent weight must be square, got " + shape_str(u));
        for (const TensorRef b : {bz, br, bh})
            if (b.rows != 1 || b.cols != H)
                throw ShapeError("gru: bias must be 1x" + std::to_string(H) + ", got " +
                                 shape_str(b));

        Node n;
        n.op = Op::GruSequence;
        n.many = {window.id, wz.id, uz.id, bz.id, wr.id, ur.id, br.id, wh.id, uh.id, bh.id};
        n.saved.resize(4 * M * R * H); // per step: h_prev, z, r, c

        const Tensor2& win = values_[window.id];
        const double* pwz = values_[wz.id].data();
        const double* puz = values_[uz.id].data();
        const double* pbz = values_[bz.id].data();
        const double* pwr = values_[wr.id].data();
        const double* pur = values_[ur.id].data();
        const double* pbr = values_[br.id].data();
        const double* pwh = values_[wh.id].data();
        const double* puh = values_[uh.id].data();
        const double* pbh = values_[bh.id].data();

        Tensor2 h(R, H, 0.0);
        std::vector<double> rh(R * H);
        for (std::size_t t = 0; t < M; ++t) {
            double* hprev = n.saved.data() + (t * 4 + 0) * R * H;
            double* z = n.saved.data() + (t * 4 + 1) * R * H;
            double* r = n.saved.data() + (t * 4 + 2) * R * H;
            double* c = n.saved.data() + (t * 4 + 3) * R * H;
            std::copy(h.data(), h.data() + R * H, hprev);

            for (std::size_t i = 0; i < R; ++i) {
                const double x = win(i, t);
                for (std::size_t j = 0; j < H; ++j) {
                    z[i * H + j] = pbz[j] + x * pwz[j];
                    r[i * H + j] = pbr[j] + x * pwr[j];
                }
            }
            mm_acc(hprev, puz, z, R, H, H);
            mm_acc(hprev, pur, r, R, H, H);
            for (std::size_t i = 0; i < R * H; ++i) {
                z[i] = 1.0 / (1.0 + std::exp(-z[i]));
                r[i] = 1.0 / (1.0 + std::exp(-r[i]));
                rh[i] = r[i] * hprev[i];
            }
            for (std::size_t i = 0; i < R; ++i) {
                const double x = win(i, t);
                for (std::size_t j = 0; j < H; ++j) c[i * H + j] = pbh[j] + x * pwh[j];
            }
            mm_acc(rh.data(), puh, c, R, H, H);
            for (std::size_t i = 0; i < R * H; ++i) {
                c[i] = std::tanh(c[i]);
                h.data()[i] = (1.0 - z[i]) * hprev[i] + z[i] * c[i];
            }
        }
        return push(std::move(n), std::move(h));
    }

    /// Sum of all entries as a 1x1 tensor.
    TensorRef sum_all(TensorRef a) {
        double s = 0.0;
        const Tensor2& av = values_[a.id];
        for (std::size_t i = 0; i < av.size(); ++i) s += av.data()[i];
        Node n;
        n.op = Op::SumAll;
        n.a = a.id;
        return push(std::move(n), Tensor2(1, 1, s));
    }

    /// Reverse sweep from a scalar loss node. Adjoints are recomputed from a
    /// unit seed on every call.
    void backward(TensorRef loss) {
        const Tensor2& lv = values_[loss.id];
        if (lv.rows() != 1 || lv.cols() != 1)
            throw ShapeError("backward: loss node must be 1x1, got " + lv.shape_str());
        adjoints_.clear();
        adjoints_.resize(values_.size());
        for (std::size_t i = 0; i < values_.size(); ++i)
            adjoints_[i] = Tensor2(values_[i].rows(), values_[i].cols(), 0.0);
        adjoints_[loss.id](0, 0) = 1.0;

        for (std::size_t idx = nodes_.size(); idx-- > 0;) {
            const Node& n = nodes_[idx];
            const Tensor2& g = adjoints_[idx];
            switch (n.op) {
            case Op::Leaf:
                break;
            case Op::MatMul: {
                // dA += dC * B^T, dB += A^T * dC
                matmul_nt_acc(g, values_[n.b], adjoints_[n.a]);
                matmul_tn_acc(values_[n.a], g, adjoints_[n.b]);
                break;
            }
            case Op::Add: {
                acc(adjoints_[n.a], g, 1.0);
                acc(adjoints_[n.b], g, 1.0);
                break;
            }
            case Op::Sub: {
                acc(adjoints_[n.a], g, 1.0);
                acc(adjoints_[n.b], g, -1.0);
                break;
            }
            case Op::Hadamard: {
                acc_mul(adjoints_[n.a], g, values_[n.b]);
                acc_mul(adjoints_[n.b], g, values_[n.a]);
                break;
            }
            case Op::AddRowBias: {
                acc(adjoints_[n.a], g, 1.0);
                Tensor2& db = adjoints_[n.b];
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    const double* grow = g.row(i);
                    for (std::size_t j = 0; j < g.cols(); ++j) db(0, j) += grow[j];
                }
                break;
            }
            case Op::Relu: {
                // relu'(0) is defined as 0
                const Tensor2& x = values_[n.a];
                Tensor2& dx = adjoints_[n.a];
                for (std::size_t i = 0; i < x.size(); ++i)
                    if (x.data()[i] > 0.0) dx.data()[i] += g.data()[i];
                break;
            }
            case Op::Sigmoid: {
                const Tensor2& y = values_[idx];
                Tensor2& dx = adjoints_[n.a];
                for (std::size_t i = 0; i < y.size(); ++i)
                    dx.data()[i] += g.data()[i] * y.data()[i] * (1.0 - y.data()[i]);
                break;
            }
            case Op::Tanh: {
                const Tensor2& y = values_[idx];
                Tensor2& dx = adjoints_[n.a];
                for (std::size_t i = 0; i < y.size(); ++i)
                    dx.data()[i] += g.data()[i] * (1.0 - y.data()[i] * y.data()[i]);
                break;
            }
            case Op::ConcatCols: {
                Tensor2& da = adjoints_[n.a];
                Tensor2& db = adjoints_[n.b];
                const std::size_t ca = n.i0;
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    const double* grow = g.row(i);
                    double* darow = da.row(i);
                    double* dbrow = db.row(i);
                    for (std::size_t j = 0; j < ca; ++j) darow[j] += grow[j];
                    for (std::size_t j = ca; j < g.cols(); ++j) dbrow[j - ca] += grow[j];
                }
                break;
            }
            case Op::SliceRows: {
                Tensor2& da = adjoints_[n.a];
                for (std::size_t i = 0; i < n.i1; ++i) {
                    const double* grow = g.row(i);
                    double* darow = da.row(n.i0 + i);
                    for (std::size_t j = 0; j < g.cols(); ++j) darow[j] += grow[j];
                }
                break;
            }
            case Op::SliceCols: {
                Tensor2& da = adjoints_[n.a];
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    const double* grow = g.row(i);
                    double* darow = da.row(i);
                    for (std::size_t j = 0; j < n.i1; ++j) darow[n.i0 + j] += grow[j];
                }
                break;
            }
            case Op::StackRows: {
                std::size_t r = 0;
                for (std::uint32_t id : n.many) {
                    Tensor2& dp = adjoints_[id];
                    for (std::size_t i = 0; i < dp.rows(); ++i) {
                        const double* grow = g.row(r + i);
                        double* drow = dp.row(i);
                        for (std::size_t j = 0; j < g.cols(); ++j) drow[j] += grow[j];
                    }
                    r += dp.rows();
                }
                break;
            }
            case Op::MeanRows: {
                const double inv = 1.0 / static_cast<double>(n.many.size());
                for (std::uint32_t id : n.many) acc(adjoints_[id], g, inv);
                break;
            }
            case Op::GatherRows: {
                Tensor2& da = adjoints_[n.a];
                for (std::size_t r = 0; r < n.many.size(); ++r) {
                    const double* grow = g.row(r);
                    double* darow = da.row(n.many[r]);
                    for (std::size_t j = 0; j < g.cols(); ++j) darow[j] += grow[j];
                }
                break;
            }
            case Op::ScatterMeanRows: {
                Tensor2& da = adjoints_[n.a];
                std::vector<std::uint32_t> count(g.rows(), 0);
                for (std::uint32_t grp : n.many) ++count[grp];
                for (std::size_t r = 0; r < n.many.size(); ++r) {
                    const double inv = 1.0 / static_cast<double>(count[n.many[r]]);
                    const double* grow = g.row(n.many[r]);
                    double* darow = da.row(r);
                    for (std::size_t j = 0; j < g.cols(); ++j) darow[j] += grow[j] * inv;
                }
                break;
            }
            case Op::Transpose: {
                Tensor2& da = adjoints_[n.a];
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) da(j, i) += g(i, j);
                break;
            }
            case Op::SoftmaxRows: {
                const Tensor2& y = values_[idx];
                Tensor2& dx = adjoints_[n.a];
                for (std::size_t i = 0; i < y.rows(); ++i) {
                    const double* yrow = y.row(i);
                    const double* grow = g.row(i);
                    double dot = 0.0;
                    for (std::size_t j = 0; j < y.cols(); ++j) dot += grow[j] * yrow[j];
                    double* dxrow = dx.row(i);
                    for (std::size_t j = 0; j < y.cols(); ++j)
                        dxrow[j] += (grow[j] - dot) * yrow[j];
                }
                break;
            }
            case Op::Scale: {
                acc(adjoints_[n.a], g, n.c);
                break;
            }
            case Op::GruSequence: {
                const std::uint32_t win_id = n.many[0];
                const Tensor2& win = values_[win_id];
                const std::size_t R = win.rows(), M = win.cols();
                const std::size_t H = values_[n.many[2]].rows();
                const double* pwz = values_[n.many[1]].data();
                const double* puz = values_[n.many[2]].data();
                const double* pwr = values_[n.many[4]].data();
                const double* pur = values_[n.many[5]].data();
                const double* pwh = values_[n.many[7]].data();
                const double* puh = values_[n.many[8]].data();
                double* dwz = adjoints_[n.many[1]].data();
                double* duz = adjoints_[n.many[2]].data();
                double* dbz = adjoints_[n.many[3]].data();
                double* dwr = adjoints_[n.many[4]].data();
                double* dur = adjoints_[n.many[5]].data();
                double* dbr = adjoints_[n.many[6]].data();
                double* dwh = adjoints_[n.many[7]].data();
                double* duh = adjoints_[n.many[8]].data();
                double* dbh = adjoints_[n.many[9]].data();
                Tensor2& dwin = adjoints_[win_id];

                // recurrent maps transposed once per sweep
                std::vector<double> uzt(H * H), urt(H * H), uht(H * H);
                for (std::size_t i = 0; i < H; ++i)
                    for (std::size_t j = 0; j < H; ++j) {
                        uzt[j * H + i] = puz[i * H + j];
                        urt[j * H + i] = pur[i * H + j];
                        uht[j * H + i] = puh[i * H + j];
                    }

                std::vector<double> dh(g.data(), g.data() + R * H);
                std::vector<double> dzpre(R * H), drpre(R * H), dcpre(R * H), drh(R * H),
                    rh(R * H);
                for (std::size_t t = M; t-- > 0;) {
                    const double* hprev = n.saved.data() + (t * 4 + 0) * R * H;
                    const double* z = n.saved.data() + (t * 4 + 1) * R * H;
                    const double* r = n.saved.data() + (t * 4 + 2) * R * H;
                    const double* c = n.saved.data() + (t * 4 + 3) * R * H;
                    for (std::size_t i = 0; i < R * H; ++i) {
                        const double dz = dh[i] * (c[i] - hprev[i]);
                        dzpre[i] = dz * z[i] * (1.0 - z[i]);
                        dcpre[i] = dh[i] * z[i] * (1.0 - c[i] * c[i]);
                        dh[i] *= 1.0 - z[i]; // direct carry toward h_{t-1}
                        rh[i] = r[i] * hprev[i];
                        drh[i] = 0.0;
                    }
                    // candidate path: c_pre = x W_h + (r . h_prev) U_h + b_h
                    mm_tn_acc(rh.data(), dcpre.data(), duh, R, H, H);
                    mm_acc(dcpre.data(), uht.data(), drh.data(), R, H, H);
                    for (std::size_t i = 0; i < R * H; ++i) {
                        const double dr = drh[i] * hprev[i];
                        drpre[i] = dr * r[i] * (1.0 - r[i]);
                        dh[i] += drh[i] * r[i];
                    }
                    mm_tn_acc(hprev, dzpre.data(), duz, R, H, H);
                    mm_tn_acc(hprev, drpre.data(), dur, R, H, H);
                    mm_acc(dzpre.data(), uzt.data(), dh.data(), R, H, H);
                    mm_acc(drpre.data(), urt.data(), dh.data(), R, H, H);
                    for (std::size_t i = 0; i < R; ++i) {
                        const double x = win(i, t);
                        const double* zrow = dzpre.data() + i * H;
                        const double* rrow = drpre.data() + i * H;
                        const double* crow = dcpre.data() + i * H;
                        double dx = 0.0;
                        for (std::size_t j = 0; j < H; ++j) {
                            dwz[j] += x * zrow[j];
                            dwr[j] += x * rrow[j];
                            dwh[j] += x * crow[j];
                            dbz[j] += zrow[j];
                            dbr[j] += rrow[j];
                            dbh[j] += crow[j];
                            dx += zrow[j] * pwz[j] + rrow[j] * pwr[j] + crow[j] * pwh[j];
                        }
                        dwin(i, t) += dx;
                    }
                }
                break;
            }
            case Op::SumAll: {
                Tensor2& da = adjoints_[n.a];
                const double gv = g(0, 0);
                for (std::size_t i = 0; i < da.size(); ++i) da.data()[i] += gv;
                break;
            }
            }
        }
    }

private:
    TensorRef push(Node n, Tensor2 v) {
        const auto id = static_cast<std::uint32_t>(nodes_.size());
        TensorRef ref{id, static_cast<std::uint32_t>(v.rows()),
                      static_cast<std::uint32_t>(v.cols())};
        nodes_.push_back(std::move(n));
        values_.push_back(std::move(v));
        return ref;
    }

    TensorRef unary(Op op, TensorRef a) {
        Tensor2 out = values_[a.id];
        switch (op) {
        case Op::Relu:
            for (std::size_t i = 0; i < out.size(); ++i)
                out.data()[i] = out.data()[i] > 0.0 ? out.data()[i] : 0.0;
            break;
        case Op::Sigmoid:
            for (std::size_t i = 0; i < out.size(); ++i)
                out.data()[i] = 1.0 / (1.0 + std::exp(-out.data()[i]));
            break;
        case Op::Tanh:
            for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::tanh(out.data()[i]);
            break;
        default:
            break;
        }
        Node n;
        n.op = op;
        n.a = a.id;
        return push(std::move(n), std::move(out));
    }

    TensorRef binary(Op op, TensorRef a, TensorRef b) {
        const Tensor2& av = values_[a.id];
        const Tensor2& bv = values_[b.id];
        require_same_shape(av, bv, op == Op::Add ? "add" : op == Op::Sub ? "sub" : "hadamard");
        Tensor2 out = av;
        switch (op) {
        case Op::Add:
            for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += bv.data()[i];
            break;
        case Op::Sub:
            for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= bv.data()[i];
            break;
        case Op::Hadamard:
            for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= bv.data()[i];
            break;
        default:
            break;
        }
        Node n;
        n.op = op;
        n.a = a.id;
        n.b = b.id;
        return push(std::move(n), std::move(out));
    }

    static void acc(Tensor2& dst, const Tensor2& src, double w) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += w * src.data()[i];
    }
    static void acc_mul(Tensor2& dst, const Tensor2& a, const Tensor2& b) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += a.data()[i] * b.data()[i];
    }

    static std::string shape_str(TensorRef r) {
        return std::to_string(r.rows) + "x" + std::to_string(r.cols);
    }

    std::vector<Node> nodes_;
    std::vector<Tensor2> values_;
    std::vector<Tensor2> adjoints_;
};

} // namespace localegn
