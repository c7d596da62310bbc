#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "emph/rng.hpp"
#include "emph/tensor.hpp"

namespace emph {

enum class Act { sigmoid, tanh, relu };

// Reverse-mode tape. Operations append nodes in topological order; backward()
// sweeps once in reverse, accumulating gradients additively at fan-out.
// A tape is single-owner: one training run, one tape, never shared.
template <typename T>
class Tape {
public:
    struct Var {
        std::size_t id = static_cast<std::size_t>(-1);
        bool valid() const { return id != static_cast<std::size_t>(-1); }
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void reset() {
        nodes_.clear();
        backward_done_ = false;
    }

    std::size_t node_count() const { return nodes_.size(); }

    std::size_t rows(Var v) const { return nodes_[v.id].rows; }
    std::size_t cols(Var v) const { return nodes_[v.id].cols; }
    const std::vector<T>& value(Var v) const { return nodes_[v.id].val; }
    const std::vector<T>& grad(Var v) const { return nodes_[v.id].grad; }

    // ---- sources -----------------------------------------------------------

    Var leaf(const Tensor<T>& t) {
        Var v = alloc(t.rows, t.cols);
        nodes_[v.id].val = t.values;
        return v;
    }

    Var constant(std::size_t r, std::size_t c, std::vector<T> vals) {
        Var v = alloc(r, c);
        nodes_[v.id].val = std::move(vals);
        nodes_[v.id].no_grad = true;
        return v;
    }

    Var scalar(T x) { return constant(1, 1, {x}); }

    // ---- arithmetic --------------------------------------------------------

    Var matmul(Var a, Var b) {
        if (nodes_[a.id].cols != nodes_[b.id].rows)
            throw std::invalid_argument("matmul: inner dimensions differ, " +
                                        shape_str(a) + " vs " + shape_str(b));
        std::size_t r = nodes_[a.id].rows, k = nodes_[a.id].cols, c = nodes_[b.id].cols;
        Var out = alloc(r, c);
        auto& A = nodes_[a.id];
        auto& B = nodes_[b.id];
        auto& O = nodes_[out.id];
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                T av = A.val[i * k + p];
                if (av == T(0)) continue;
                const T* brow = &B.val[p * c];
                T* orow = &O.val[i * c];
                for (std::size_t j = 0; j < c; ++j) orow[j] += av * brow[j];
            }
        O.back = [this, a, b, out, r, k, c]() {
            auto& A2 = nodes_[a.id];
            auto& B2 = nodes_[b.id];
            auto& O2 = nodes_[out.id];
            // dA = G * B^T
            if (!A2.no_grad)
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) {
                        T g = O2.grad[i * c + j];
                        if (g == T(0)) continue;
                        for (std::size_t p = 0; p < k; ++p)
                            A2.grad[i * k + p] += g * B2.val[p * c + j];
                    }
            // dB = A^T * G
            if (!B2.no_grad)
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        T av = A2.val[i * k + p];
                        if (av == T(0)) continue;
                        for (std::size_t j = 0; j < c; ++j)
                            B2.grad[p * c + j] += av * O2.grad[i * c + j];
                    }
        };
        return out;
    }

    Var add(Var a, Var b) {
        check_same_shape(a, b, "add");
        Var out = alloc_like(a);
        auto& O = nodes_[out.id];
        const auto& A = nodes_[a.id].val;
        const auto& B = nodes_[b.id].val;
        for (std::size_t i = 0; i < A.size(); ++i) O.val[i] = A[i] + B[i];
        O.back = [this, a, b, out]() {
            accumulate(a, nodes_[out.id].grad);
            accumulate(b, nodes_[out.id].grad);
        };
        return out;
    }

    // broadcast a 1 x d row vector over every row of a
    Var add_rowvec(Var a, Var bias) {
        if (nodes_[bias.id].rows != 1 || nodes_[bias.id].cols != nodes_[a.id].cols)
            throw std::invalid_argument("add_rowvec: bias " + shape_str(bias) +
                                        " does not broadcast over " + shape_str(a));
        Var out = alloc_like(a);
        auto& A = nodes_[a.id];
        auto& B = nodes_[bias.id];
        auto& O = nodes_[out.id];
        for (std::size_t i = 0; i < A.rows; ++i)
            for (std::size_t j = 0; j < A.cols; ++j)
                O.val[i * A.cols + j] = A.val[i * A.cols + j] + B.val[j];
        O.back = [this, a, bias, out]() {
            auto& A2 = nodes_[a.id];
            auto& B2 = nodes_[bias.id];
            auto& O2 = nodes_[out.id];
            accumulate(a, O2.grad);
            if (!B2.no_grad)
                for (std::size_t i = 0; i < A2.rows; ++i)
                    for (std::size_t j = 0; j < A2.cols; ++j)
                        B2.grad[j] += O2.grad[i * A2.cols + j];
        };
        return out;
    }

    Var mul(Var a, Var b) {
        check_same_shape(a, b, "mul");
        Var out = alloc_like(a);
        auto& O = nodes_[out.id];
        const auto& A = nodes_[a.id].val;
        const auto& B = nodes_[b.id].val;
        for (std::size_t i = 0; i < A.size(); ++i) O.val[i] = A[i] * B[i];
        O.back = [this, a, b, out]() {
            auto& A2 = nodes_[a.id];
            auto& B2 = nodes_[b.id];
            auto& O2 = nodes_[out.id];
            if (!A2.no_grad)
                for (std::size_t i = 0; i < O2.grad.size(); ++i)
                    A2.grad[i] += O2.grad[i] * B2.val[i];
            if (!B2.no_grad)
                for (std::size_t i = 0; i < O2.grad.size(); ++i)
                    B2.grad[i] += O2.grad[i] * A2.val[i];
        };
        return out;
    }

    Var scale(Var a, T c) {
        Var out = alloc_like(a);
        auto& O = nodes_[out.id];
        const auto& A = nodes_[a.id].val;
        for (std::size_t i = 0; i < A.size(); ++i) O.val[i] = A[i] * c;
        O.back = [this, a, out, c]() {
            auto& A2 = nodes_[a.id];
            auto& O2 = nodes_[out.id];
            if (!A2.no_grad)
                for (std::size_t i = 0; i < O2.grad.size(); ++i)
                    A2.grad[i] += O2.grad[i] * c;
        };
        return out;
    }

    Var sub(Var a, Var b) { return add(a, scale(b, T(-1))); }

    // ---- shaping -----------------------------------------------------------

    Var concat_cols(const std::vector<Var>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_cols: empty list");
        std::size_t r = nodes_[parts[0].id].rows;
        std::size_t total = 0;
        for (Var p : parts) {
            if (nodes_[p.id].rows != r)
                throw std::invalid_argument("concat_cols: row mismatch");
            total += nodes_[p.id].cols;
        }
        Var out = alloc(r, total);
        auto& O = nodes_[out.id];
        std::size_t off = 0;
        for (Var p : parts) {
            auto& P = nodes_[p.id];
            for (std::size_t i = 0; i < r; ++i)
                std::copy(P.val.begin() + i * P.cols, P.val.begin() + (i + 1) * P.cols,
                          O.val.begin() + i * total + off);
            off += P.cols;
        }
        O.back = [this, parts, out, r, total]() {
            auto& O2 = nodes_[out.id];
            std::size_t o = 0;
            for (Var p : parts) {
                auto& P = nodes_[p.id];
                if (!P.no_grad)
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < P.cols; ++j)
                            P.grad[i * P.cols + j] += O2.grad[i * total + o + j];
                o += P.cols;
            }
        };
        return out;
    }

    Var slice_cols(Var a, std::size_t c0, std::size_t len) {
        if (c0 + len > nodes_[a.id].cols)
            throw std::invalid_argument("slice_cols: range out of bounds for " + shape_str(a));
        Var out = alloc(nodes_[a.id].rows, len);
        auto& A = nodes_[a.id];
        auto& O = nodes_[out.id];
        for (std::size_t i = 0; i < A.rows; ++i)
            std::copy(A.val.begin() + i * A.cols + c0, A.val.begin() + i * A.cols + c0 + len,
                      O.val.begin() + i * len);
        O.back = [this, a, out, c0, len]() {
            auto& A2 = nodes_[a.id];
            auto& O2 = nodes_[out.id];
            if (A2.no_grad) return;
            for (std::size_t i = 0; i < A2.rows; ++i)
                for (std::size_t j = 0; j < len; ++j)
                    A2.grad[i * A2.cols + c0 + j] += O2.grad[i * len + j];
        };
        return out;
    }

    Var concat_rows(const std::vector<Var>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_rows: empty list");
        std::size_t c = nodes_[parts[0].id].cols;
        std::size_t total = 0;
        for (Var p : parts) {
            if (nodes_[p.id].cols != c)
                throw std::invalid_argument("concat_rows: column mismatch");
            total += nodes_[p.id].rows;
        }
        Var out = alloc(total, c);
        auto& O = nodes_[out.id];
        std::size_t off = 0;
        for (Var p : parts) {
            auto& P = nodes_[p.id];
            std::copy(P.val.begin(), P.val.end(), O.val.begin() + off * c);
            off += P.rows;
        }
        O.back = [this, parts, out, c]() {
            auto& O2 = nodes_[out.id];
            std::size_t o = 0;
            for (Var p : parts) {
                auto& P = nodes_[p.id];
                if (!P.no_grad)
                    for (std::size_t i = 0; i < P.val.size(); ++i)
                        P.grad[i] += O2.grad[o * c + i];
                o += P.rows;
            }
        };
        return out;
    }

    Var transpose(Var a) {
        Var out = alloc(nodes_[a.id].cols, nodes_[a.id].rows);
        auto& A = nodes_[a.id];
        auto& O = nodes_[out.id];
        for (std::size_t i = 0; i < A.rows; ++i)
            for (std::size_t j = 0; j < A.cols; ++j)
                O.val[j * A.rows + i] = A.val[i * A.cols + j];
        O.back = [this, a, out]() {
            auto& A2 = nodes_[a.id];
            auto& O2 = nodes_[out.id];
            if (A2.no_grad) return;
            for (std::size_t i = 0; i < A2.rows; ++i)
                for (std::size_t j = 0; j < A2.cols; ++j)
                    A2.grad[i * A2.cols + j] += O2.grad[j * A2.rows + i];
        };
        return out;
    }

    // row gather; doubles as embedding lookup and first-subtoken pooling
    Var gather_rows(Var a, std::vector<std::size_t> idx) {
        for (std::size_t i : idx)
            if (i >= nodes_[a.id].rows)
                throw std::out_of_range("gather_rows: index " + std::to_string(i) +
                                        " out of range for " + shape_str(a));
        Var out = alloc(idx.size(), nodes_[a.id].cols);
        auto& A = nodes_[a.id];
        auto& O = nodes_[out.id];
        for (std::size_t i = 0; i < idx.size(); ++i)
            std::copy(A.val.begin() + idx[i] * A.cols, A.val.begin() + (idx[i] + 1) * A.cols,
                      O.val.begin() + i * A.cols);
        O.back = [this, a, out, idx = std::move(idx)]() {
            auto& A2 = nodes_[a.id];
            auto& O2 = nodes_[out.id];
            if (A2.no_grad) return;
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = 0; j < A2.cols; ++j)
                    A2.grad[idx[i] * A2.cols + j] += O2.grad[i * A2.cols + j];
        };
        return out;
    }

    // ---- nonlinearities ----------------------------------------------------

    Var activation(Var a, Act kind) {
        Var out = alloc_like(a);
        auto& O = nodes_[out.id];
        const auto& A = nodes_[a.id].val;
        for (std::size_t i = 0; i < A.size(); ++i) O.val[i] = apply_act(A[i], kind);
        O.back = [this, a, out, kind]() {
            auto& A2 = nodes_[a.id];
            auto& O2 = nodes_[out.id];
            if (A2.no_grad) return;
            for (std::size_t i = 0; i < O2.grad.size(); ++i) {
                T y = O2.val[i];
                T d;
                switch (kind) {
                    case Act::sigmoid: d = y * (T(1) - y); break;
                    case Act::tanh: d = T(1) - y * y; break;
                    case Act::relu: d = A2.val[i] > T(0) ? T(1) : T(0); break;
                    default: d = T(0);
                }
                A2.grad[i] += O2.grad[i] * d;
            }
        };
        return out;
    }

    // Row-wise softmax over unmasked columns; masked columns get exactly 0.
    Var masked_softmax(Var a, const std::vector<char>& mask) {
        if (mask.size() != nodes_[a.id].cols)
            throw std::invalid_argument("masked_softmax: mask length " +
                                        std::to_string(mask.size()) + " vs " + shape_str(a));
        bool any = false;
        for (char m : mask) any = any || m;
        if (!any) throw std::invalid_argument("masked_softmax: degenerate mask, no unmasked column");
        Var out = alloc_like(a);
        auto& A = nodes_[a.id];
        auto& O = nodes_[out.id];
        for (std::size_t i = 0; i < A.rows; ++i) {
            const T* row = &A.val[i * A.cols];
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t j = 0; j < A.cols; ++j)
                if (mask[j] && row[j] > mx) mx = row[j];
            T z = T(0);
            for (std::size_t j = 0; j < A.cols; ++j)
                if (mask[j]) z += std::exp(row[j] - mx);
            for (std::size_t j = 0; j < A.cols; ++j)
                O.val[i * A.cols + j] = mask[j] ? std::exp(row[j] - mx) / z : T(0);
        }
        O.back = [this, a, out, mask]() {
            auto& A2 = nodes_[a.id];
            auto& O2 = nodes_[out.id];
            if (A2.no_grad) return;
            for (std::size_t i = 0; i < A2.rows; ++i) {
                T dot = T(0);
                for (std::size_t j = 0; j < A2.cols; ++j)
                    if (mask[j]) dot += O2.grad[i * A2.cols + j] * O2.val[i * A2.cols + j];
                for (std::size_t j = 0; j < A2.cols; ++j)
                    if (mask[j])
                        A2.grad[i * A2.cols + j] +=
                            O2.val[i * A2.cols + j] * (O2.grad[i * A2.cols + j] - dot);
            }
        };
        return out;
    }

    // Inverted dropout: eval is the identity, train scales survivors by 1/(1-p).
    Var dropout(Var a, double p, bool train, RngStream& rng) {
        if (p < 0.0 || p >= 1.0)
            throw std::invalid_argument("dropout: probability must be in [0,1), got " +
                                        std::to_string(p));
        if (!train || p == 0.0) return a;
        auto& A = nodes_[a.id];
        std::vector<T> m(A.val.size());
        T keep = static_cast<T>(1.0 / (1.0 - p));
        for (auto& v : m) v = rng.bernoulli(p) ? T(0) : keep;
        Var maskv = constant(A.rows, A.cols, std::move(m));
        return mul(a, maskv);
    }

    // Per-row layer norm with learned gain/bias (1 x d each), eps inside sqrt.
    Var layer_norm(Var a, Var gain, Var bias, T eps = T(1e-5)) {
        std::size_t d = nodes_[a.id].cols;
        if (nodes_[gain.id].cols != d || nodes_[bias.id].cols != d)
            throw std::invalid_argument("layer_norm: gain/bias width mismatch");
        Var out = alloc_like(a);
        auto& A = nodes_[a.id];
        auto& O = nodes_[out.id];
        std::vector<T> inv_sigma(A.rows), xhat(A.val.size());
        for (std::size_t i = 0; i < A.rows; ++i) {
            const T* row = &A.val[i * d];
            T mu = T(0);
            for (std::size_t j = 0; j < d; ++j) mu += row[j];
            mu /= static_cast<T>(d);
            T var = T(0);
            for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
            var /= static_cast<T>(d);
            T is = T(1) / std::sqrt(var + eps);
            inv_sigma[i] = is;
            for (std::size_t j = 0; j < d; ++j) {
                xhat[i * d + j] = (row[j] - mu) * is;
                O.val[i * d + j] =
                    nodes_[gain.id].val[j] * xhat[i * d + j] + nodes_[bias.id].val[j];
            }
        }
        O.back = [this, a, gain, bias, out, d, inv_sigma = std::move(inv_sigma),
                  xhat = std::move(xhat)]() {
            auto& A2 = nodes_[a.id];
            auto& G2 = nodes_[gain.id];
            auto& B2 = nodes_[bias.id];
            auto& O2 = nodes_[out.id];
            for (std::size_t i = 0; i < A2.rows; ++i) {
                T sum_g = T(0), sum_gx = T(0);
                for (std::size_t j = 0; j < d; ++j) {
                    T gy = O2.grad[i * d + j] * G2.val[j];
                    sum_g += gy;
                    sum_gx += gy * xhat[i * d + j];
                }
                T nd = static_cast<T>(d);
                for (std::size_t j = 0; j < d; ++j) {
                    T gy = O2.grad[i * d + j] * G2.val[j];
                    if (!A2.no_grad)
                        A2.grad[i * d + j] +=
                            inv_sigma[i] * (gy - sum_g / nd - xhat[i * d + j] * sum_gx / nd);
                    if (!G2.no_grad) G2.grad[j] += O2.grad[i * d + j] * xhat[i * d + j];
                    if (!B2.no_grad) B2.grad[j] += O2.grad[i * d + j];
                }
            }
        };
        return out;
    }

    // ---- losses & reductions ----------------------------------------------

    Var sum_all(Var a) {
        auto& A = nodes_[a.id];
        T s = T(0);
        for (T v : A.val) s += v;
        Var out = alloc(1, 1);
        nodes_[out.id].val[0] = s;
        nodes_[out.id].back = [this, a, out]() {
            auto& A2 = nodes_[a.id];
            if (A2.no_grad) return;
            T g = nodes_[out.id].grad[0];
            for (auto& gv : A2.grad) gv += g;
        };
        return out;
    }

    Var mean_scalars(const std::vector<Var>& xs) {
        if (xs.empty()) throw std::invalid_argument("mean_scalars: empty list");
        Var acc = xs[0];
        for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
        return scale(acc, T(1) / static_cast<T>(xs.size()));
    }

    // Mean over unmasked tokens of -[g ln p + (1-g) ln(1-p)], p clamped to
    // [1e-7, 1-1e-7]. pred is n x 1.
    Var bce_loss(Var pred, const std::vector<T>& gold, const std::vector<char>& mask) {
        auto& P = nodes_[pred.id];
        std::size_t n = P.val.size();
        if (P.cols != 1 || gold.size() != n || mask.size() != n)
            throw std::invalid_argument("bce_loss: pred/gold/mask length mismatch");
        std::size_t cnt = 0;
        for (char m : mask) cnt += m ? 1 : 0;
        if (cnt == 0) throw std::invalid_argument("bce_loss: degenerate mask, all tokens masked");
        const T lo = T(1e-7), hi = T(1) - T(1e-7);
        T total = T(0);
        std::vector<T> clamped(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (!mask[i]) continue;
            // branch form so a non-finite prediction propagates instead of clamping
            T p = P.val[i];
            if (p < lo) p = lo;
            else if (p > hi) p = hi;
            clamped[i] = p;
            total -= gold[i] * std::log(p) + (T(1) - gold[i]) * std::log(T(1) - p);
        }
        Var out = alloc(1, 1);
        nodes_[out.id].val[0] = total / static_cast<T>(cnt);
        nodes_[out.id].back = [this, pred, out, gold, mask, cnt, clamped = std::move(clamped),
                               lo, hi]() {
            auto& P2 = nodes_[pred.id];
            if (P2.no_grad) return;
            T g = nodes_[out.id].grad[0] / static_cast<T>(cnt);
            for (std::size_t i = 0; i < P2.val.size(); ++i) {
                if (!mask[i]) continue;
                // zero slope outside the clamp window
                if (P2.val[i] <= lo || P2.val[i] >= hi) continue;
                T p = clamped[i];
                P2.grad[i] += g * (p - gold[i]) / (p * (T(1) - p));
            }
        };
        return out;
    }

    // ---- backward ----------------------------------------------------------

    void backward(Var loss) {
        if (backward_done_)
            throw std::logic_error("backward: tape already swept; re-record before calling again");
        auto& L = nodes_[loss.id];
        if (L.val.size() != 1)
            throw std::invalid_argument("backward: root must be scalar, got " + shape_str(loss));
        backward_done_ = true;
        L.grad[0] = T(1);
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            if (nodes_[i].back) nodes_[i].back();
        }
    }

    bool backward_done() const { return backward_done_; }

private:
    struct Node {
        std::size_t rows = 0, cols = 0;
        std::vector<T> val, grad;
        std::function<void()> back;
        bool no_grad = false;
    };

    Var alloc(std::size_t r, std::size_t c) {
        nodes_.push_back(Node{r, c, std::vector<T>(r * c, T(0)), std::vector<T>(r * c, T(0)),
                              nullptr, false});
        return Var{nodes_.size() - 1};
    }

    Var alloc_like(Var a) { return alloc(nodes_[a.id].rows, nodes_[a.id].cols); }

    void check_same_shape(Var a, Var b, const char* op) const {
        if (nodes_[a.id].rows != nodes_[b.id].rows || nodes_[a.id].cols != nodes_[b.id].cols)
            throw std::invalid_argument(std::string(op) + ": shape mismatch, " + shape_str(a) +
                                        " vs " + shape_str(b));
    }

    std::string shape_str(Var v) const {
        return std::to_string(nodes_[v.id].rows) + "x" + std::to_string(nodes_[v.id].cols);
    }

    void accumulate(Var a, const std::vector<T>& g) {
        auto& A = nodes_[a.id];
        if (A.no_grad) return;
        for (std::size_t i = 0; i < g.size(); ++i) A.grad[i] += g[i];
    }

    static T apply_act(T x, Act kind) {
        switch (kind) {
            case Act::sigmoid:
                // split form keeps exp() argument non-positive
                if (x >= T(0)) {
                    T e = std::exp(-x);
                    return T(1) / (T(1) + e);
                } else {
                    T e = std::exp(x);
                    return e / (T(1) + e);
                }
            case Act::tanh: return std::tanh(x);
            case Act::relu: return x > T(0) ? x : T(0);
        }
        return T(0);
    }

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

}  // namespace emph
