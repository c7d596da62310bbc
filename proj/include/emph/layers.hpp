#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "emph/tape.hpp"
#include "emph/tensor.hpp"

namespace emph {

template <typename T>
using ParamMap = std::map<std::string, Tensor<T>>;

template <typename T>
using BoundVars = std::map<std::string, typename Tape<T>::Var>;

template <typename T>
typename Tape<T>::Var bound_at(const BoundVars<T>& b, const std::string& name) {
    auto it = b.find(name);
    if (it == b.end()) throw std::logic_error("unbound parameter '" + name + "'");
    return it->second;
}

// y = x*W + b for row-major batches
template <typename T>
typename Tape<T>::Var linear(Tape<T>& tape, typename Tape<T>::Var x,
                             typename Tape<T>::Var W, typename Tape<T>::Var b) {
    return tape.add_rowvec(tape.matmul(x, W), b);
}

// ---- recurrent cells -----------------------------------------------------

// LSTM gate layout in the 4h axis: input, forget, cell, output.
template <typename T>
struct LstmState {
    typename Tape<T>::Var h, c;
};

template <typename T>
LstmState<T> lstm_step(Tape<T>& tape, typename Tape<T>::Var x, LstmState<T> prev,
                       typename Tape<T>::Var Wx, typename Tape<T>::Var Wh,
                       typename Tape<T>::Var b, std::size_t hidden) {
    auto gates = tape.add(linear(tape, x, Wx, b), tape.matmul(prev.h, Wh));
    auto i = tape.activation(tape.slice_cols(gates, 0, hidden), Act::sigmoid);
    auto f = tape.activation(tape.slice_cols(gates, hidden, hidden), Act::sigmoid);
    auto g = tape.activation(tape.slice_cols(gates, 2 * hidden, hidden), Act::tanh);
    auto o = tape.activation(tape.slice_cols(gates, 3 * hidden, hidden), Act::sigmoid);
    auto c = tape.add(tape.mul(f, prev.c), tape.mul(i, g));
    auto h = tape.mul(o, tape.activation(c, Act::tanh));
    return {h, c};
}

// GRU gate layout in the 3h axis: reset, update, candidate.
template <typename T>
typename Tape<T>::Var gru_step(Tape<T>& tape, typename Tape<T>::Var x,
                               typename Tape<T>::Var prev_h, typename Tape<T>::Var Wx,
                               typename Tape<T>::Var Wh, typename Tape<T>::Var b,
                               std::size_t hidden) {
    auto xs = linear(tape, x, Wx, b);
    auto hs = tape.matmul(prev_h, Wh);
    auto r = tape.activation(
        tape.add(tape.slice_cols(xs, 0, hidden), tape.slice_cols(hs, 0, hidden)), Act::sigmoid);
    auto z = tape.activation(
        tape.add(tape.slice_cols(xs, hidden, hidden), tape.slice_cols(hs, hidden, hidden)),
        Act::sigmoid);
    auto n = tape.activation(
        tape.add(tape.slice_cols(xs, 2 * hidden, hidden),
                 tape.mul(r, tape.slice_cols(hs, 2 * hidden, hidden))),
        Act::tanh);
    // h' = (1-z) (.) n + z (.) h
    auto one = tape.constant(1, hidden, std::vector<T>(hidden, T(1)));
    auto inv_z = tape.add_rowvec(tape.scale(z, T(-1)), one);
    return tape.add(tape.mul(inv_z, n), tape.mul(z, prev_h));
}

enum class RnnKind { lstm, gru };

// Runs one direction over per-position inputs (each 1 x d). Padded positions
// (mask false) leave the state untouched and emit zeros; padding only trails,
// so real-token outputs are unaffected by it.
template <typename T>
std::vector<typename Tape<T>::Var> run_rnn_direction(
    Tape<T>& tape, const std::vector<typename Tape<T>::Var>& inputs,
    const std::vector<char>& mask, bool backward_dir, RnnKind kind,
    typename Tape<T>::Var Wx, typename Tape<T>::Var Wh, typename Tape<T>::Var b,
    std::size_t hidden) {
    std::size_t n = inputs.size();
    std::vector<typename Tape<T>::Var> out(n);
    auto zero = tape.constant(1, hidden, std::vector<T>(hidden, T(0)));
    LstmState<T> st{zero, zero};
    typename Tape<T>::Var gru_h = zero;
    for (std::size_t step = 0; step < n; ++step) {
        std::size_t t = backward_dir ? n - 1 - step : step;
        if (!mask[t]) {
            out[t] = zero;
            continue;
        }
        if (kind == RnnKind::lstm) {
            st = lstm_step(tape, inputs[t], st, Wx, Wh, b, hidden);
            out[t] = st.h;
        } else {
            gru_h = gru_step(tape, inputs[t], gru_h, Wx, Wh, b, hidden);
            out[t] = gru_h;
        }
    }
    return out;
}

// ---- highway -------------------------------------------------------------

// y = T (.) relu(W_H x + b_H) + (1 - T) (.) x, T = sigmoid(W_T x + b_T)
template <typename T>
typename Tape<T>::Var highway(Tape<T>& tape, typename Tape<T>::Var x,
                              typename Tape<T>::Var W_T, typename Tape<T>::Var b_T,
                              typename Tape<T>::Var W_H, typename Tape<T>::Var b_H) {
    auto gate = tape.activation(linear(tape, x, W_T, b_T), Act::sigmoid);
    auto transformed = tape.activation(linear(tape, x, W_H, b_H), Act::relu);
    std::size_t d = tape.cols(x);
    auto one = tape.constant(1, d, std::vector<T>(d, T(1)));
    auto carry = tape.add_rowvec(tape.scale(gate, T(-1)), one);
    return tape.add(tape.mul(gate, transformed), tape.mul(carry, x));
}

// ---- attention -----------------------------------------------------------

// Single-head scaled dot-product with residual: h + (A V) W_O.
template <typename T>
typename Tape<T>::Var self_attention(Tape<T>& tape, typename Tape<T>::Var h,
                                     const std::vector<char>& mask,
                                     typename Tape<T>::Var W_Q, typename Tape<T>::Var W_K,
                                     typename Tape<T>::Var W_V, typename Tape<T>::Var W_O) {
    std::size_t p = tape.cols(W_Q);
    auto Q = tape.matmul(h, W_Q);
    auto K = tape.matmul(h, W_K);
    auto V = tape.matmul(h, W_V);
    auto scores = tape.scale(tape.matmul(Q, tape.transpose(K)),
                             static_cast<T>(1.0 / std::sqrt(static_cast<double>(p))));
    auto A = tape.masked_softmax(scores, mask);
    return tape.add(h, tape.matmul(tape.matmul(A, V), W_O));
}

// Multi-head variant without residual; caller adds residual + layer norm.
template <typename T>
typename Tape<T>::Var multi_head_attention(Tape<T>& tape, typename Tape<T>::Var h,
                                           const std::vector<char>& mask, std::size_t heads,
                                           typename Tape<T>::Var W_Q, typename Tape<T>::Var W_K,
                                           typename Tape<T>::Var W_V, typename Tape<T>::Var W_O) {
    std::size_t d = tape.cols(h);
    if (d % heads != 0)
        throw std::invalid_argument("multi_head_attention: width not divisible by head count");
    std::size_t dk = d / heads;
    auto Q = tape.matmul(h, W_Q);
    auto K = tape.matmul(h, W_K);
    auto V = tape.matmul(h, W_V);
    std::vector<typename Tape<T>::Var> ctx;
    ctx.reserve(heads);
    T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
    for (std::size_t hd = 0; hd < heads; ++hd) {
        auto q = tape.slice_cols(Q, hd * dk, dk);
        auto k = tape.slice_cols(K, hd * dk, dk);
        auto v = tape.slice_cols(V, hd * dk, dk);
        auto A = tape.masked_softmax(tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt),
                                     mask);
        ctx.push_back(tape.matmul(A, v));
    }
    return tape.matmul(tape.concat_cols(ctx), W_O);
}

// ---- positional encoding -------------------------------------------------

template <typename T>
Tensor<T> sinusoidal_positions(std::size_t n, std::size_t d) {
    Tensor<T> pe(n, d);
    for (std::size_t pos = 0; pos < n; ++pos)
        for (std::size_t i = 0; i < d; ++i) {
            double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d);
            double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
            pe.at(pos, i) = static_cast<T>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
        }
    return pe;
}

}  // namespace emph
