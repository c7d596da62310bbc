#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "emph/data.hpp"
#include "emph/layers.hpp"
#include "emph/rng.hpp"
#include "emph/tape.hpp"
#include "emph/tensor.hpp"

namespace emph {

// ---- subword vocabulary --------------------------------------------------

struct SubwordVocab {
    static constexpr std::size_t pad_id = 0;
    static constexpr std::size_t unk_id = 1;
    static constexpr std::size_t bos_id = 2;
    static constexpr std::size_t eos_id = 3;

    std::vector<std::string> tokens;  // index -> token, first four are specials
    std::unordered_map<std::string, std::size_t> to_id;
    std::size_t max_token_chars = 1;  // longest entry, in codepoints

    std::size_t size() const { return tokens.size(); }

    void add(const std::string& t) {
        if (to_id.count(t)) return;
        to_id[t] = tokens.size();
        tokens.push_back(t);
        max_token_chars = std::max(max_token_chars, utf8_split(t).size());
    }

    static SubwordVocab from_token_list(const std::vector<std::string>& list) {
        SubwordVocab v;
        if (list.size() < 4 || list[0] != "<pad>" || list[1] != "<unk>" || list[2] != "<bos>" ||
            list[3] != "<eos>")
            throw std::runtime_error("subword vocab: bad specials block");
        for (const auto& t : list) v.add(t);
        return v;
    }
};

// 4 specials + every observed character + most frequent whole words until the
// vocab holds max_vocab entries.
inline SubwordVocab build_subword_vocab(const std::vector<Instance>& instances,
                                        std::size_t max_vocab) {
    if (instances.empty()) throw std::invalid_argument("build_subword_vocab: empty corpus");
    SubwordVocab v;
    for (const char* s : {"<pad>", "<unk>", "<bos>", "<eos>"}) v.add(s);

    std::unordered_map<std::string, std::size_t> freq, first_seen;
    std::vector<std::string> order;
    std::size_t pos = 0;
    for (const auto& inst : instances)
        for (const auto& tok : inst.tokens) {
            for (const auto& c : utf8_split(tok.surface)) v.add(c);
            if (++freq[tok.surface] == 1) {
                first_seen[tok.surface] = pos;
                order.push_back(tok.surface);
            }
            ++pos;
        }
    std::stable_sort(order.begin(), order.end(),
                     [&](const std::string& a, const std::string& b) {
                         if (freq[a] != freq[b]) return freq[a] > freq[b];
                         return first_seen[a] < first_seen[b];
                     });
    for (const auto& w : order) {
        if (v.size() >= max_vocab) break;
        v.add(w);
    }
    return v;
}

// ---- tokenization --------------------------------------------------------

struct SubwordTokenization {
    std::vector<std::vector<std::size_t>> word_ids;   // per word, subtoken ids
    std::vector<std::size_t> first_index;             // flat position of first subtoken
    std::vector<std::vector<std::size_t>> word_spans; // all flat positions of the word
    std::vector<std::size_t> flat;                    // <bos> + subtokens + <eos>
};

// Greedy longest-match left-to-right inside each word, single-character
// fallback, <unk> for characters outside the vocab. Total by construction.
inline SubwordTokenization tokenize_words(const Instance& inst, const SubwordVocab& vocab) {
    SubwordTokenization out;
    out.flat.push_back(SubwordVocab::bos_id);
    for (const auto& tok : inst.tokens) {
        auto chars = utf8_split(tok.surface);
        std::vector<std::size_t> ids;
        std::size_t i = 0;
        while (i < chars.size()) {
            std::size_t best_len = 0, best_id = SubwordVocab::unk_id;
            std::size_t cap = std::min(vocab.max_token_chars, chars.size() - i);
            std::string piece;
            for (std::size_t len = 1; len <= cap; ++len) {
                piece += chars[i + len - 1];
                auto it = vocab.to_id.find(piece);
                if (it != vocab.to_id.end() && it->second >= 4) {
                    best_len = len;
                    best_id = it->second;
                }
            }
            if (best_len == 0) {
                ids.push_back(SubwordVocab::unk_id);
                i += 1;
            } else {
                ids.push_back(best_id);
                i += best_len;
            }
        }
        out.first_index.push_back(out.flat.size());
        std::vector<std::size_t> span;
        for (std::size_t id : ids) {
            span.push_back(out.flat.size());
            out.flat.push_back(id);
        }
        out.word_spans.push_back(std::move(span));
        out.word_ids.push_back(std::move(ids));
    }
    out.flat.push_back(SubwordVocab::eos_id);
    return out;
}

// ---- model ---------------------------------------------------------------

enum class PoolMode { first, mean };
enum class HeadKind { mlp, bilstm_attn };

struct TransformerConfig {
    std::size_t layers = 4;
    std::size_t heads = 4;
    std::size_t d_model = 128;
    std::size_t d_ff = 512;
    std::size_t max_len = 64;
    double dropout_p = 0.3;
    std::size_t head_h1 = 300;  // (900, 40) for the large profile
    std::size_t head_h2 = 20;
    std::size_t freeze_first_k = 0;
    bool include_embedding_layer = true;
    PoolMode pool = PoolMode::first;
    HeadKind head_kind = HeadKind::mlp;
    std::size_t head_rnn_hidden = 64;
    std::size_t head_attn_dim = 32;

    std::size_t concat_width() const {
        return (layers + (include_embedding_layer ? 1 : 0)) * d_model;
    }

    void validate() const {
        if (d_model % heads != 0)
            throw std::invalid_argument("transformer config: d_model not divisible by heads");
    }
};

// Approach-2 model: randomly initialized transformer encoder, all-layer
// concatenation, first-subtoken (or mean) pooling, three-FC sigmoid head.
template <typename T>
class TransformerLabeler {
public:
    using Var = typename Tape<T>::Var;

    TransformerConfig cfg;
    SubwordVocab vocab;
    ParamMap<T> params;

    void init(std::uint64_t seed) {
        cfg.validate();
        params.clear();
        auto put = [&](const std::string& name, std::size_t r, std::size_t c) {
            RngStream rng(seed, "init:" + name);
            params[name] = xavier_uniform<T>(r, c, rng);
        };
        auto fill = [&](const std::string& name, std::size_t r, std::size_t c, T x) {
            params[name] = Tensor<T>(r, c, x);
        };
        std::size_t d = cfg.d_model;
        put("tok_emb", vocab.size(), d);
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            std::string b = "blk" + std::to_string(l) + "_";
            put(b + "attn_WQ", d, d);
            put(b + "attn_WK", d, d);
            put(b + "attn_WV", d, d);
            put(b + "attn_WO", d, d);
            fill(b + "ln1_g", 1, d, T(1));
            fill(b + "ln1_b", 1, d, T(0));
            put(b + "ff_W1", d, cfg.d_ff);
            fill(b + "ff_b1", 1, cfg.d_ff, T(0));
            put(b + "ff_W2", cfg.d_ff, d);
            fill(b + "ff_b2", 1, d, T(0));
            fill(b + "ln2_g", 1, d, T(1));
            fill(b + "ln2_b", 1, d, T(0));
        }
        std::size_t w = cfg.concat_width();
        if (cfg.head_kind == HeadKind::mlp) {
            put("head_W1", w, cfg.head_h1);
            fill("head_b1", 1, cfg.head_h1, T(0));
            put("head_W2", cfg.head_h1, cfg.head_h2);
            fill("head_b2", 1, cfg.head_h2, T(0));
            put("head_W3", cfg.head_h2, 1);
            fill("head_b3", 1, 1, T(0));
        } else {
            for (const char* dir : {"fwd", "bwd"}) {
                std::string b = std::string("head_rnn_") + dir + "_";
                put(b + "Wx", w, 4 * cfg.head_rnn_hidden);
                put(b + "Wh", cfg.head_rnn_hidden, 4 * cfg.head_rnn_hidden);
                fill(b + "b", 1, 4 * cfg.head_rnn_hidden, T(0));
            }
            std::size_t hd = 2 * cfg.head_rnn_hidden;
            put("head_attn_WQ", hd, cfg.head_attn_dim);
            put("head_attn_WK", hd, cfg.head_attn_dim);
            put("head_attn_WV", hd, cfg.head_attn_dim);
            put("head_attn_WO", cfg.head_attn_dim, hd);
            put("head_W2", hd, cfg.head_h2);
            fill("head_b2", 1, cfg.head_h2, T(0));
            put("head_W3", cfg.head_h2, 1);
            fill("head_b3", 1, 1, T(0));
        }
    }

    // Parameter names withheld from the optimizer under freeze_first_k:
    // the embedding plus the first min(k, L) encoder blocks.
    bool frozen(const std::string& name) const {
        if (cfg.freeze_first_k == 0) return false;
        if (name == "tok_emb") return true;
        if (name.rfind("blk", 0) == 0) {
            std::size_t l = static_cast<std::size_t>(std::stoul(name.substr(3)));
            return l < std::min(cfg.freeze_first_k, cfg.layers);
        }
        return false;
    }

    BoundVars<T> bind(Tape<T>& tape) const {
        BoundVars<T> b;
        for (const auto& [name, t] : params) b[name] = tape.leaf(t);
        return b;
    }

    // Returns seq_len x (L+1)*d_model (or L*d_model when the embedding layer is
    // excluded from the concat).
    Var encoder_forward(Tape<T>& tape, const BoundVars<T>& bound,
                        const std::vector<std::size_t>& ids, const std::vector<char>& mask,
                        bool train, RngSet& rng) const {
        if (ids.size() > cfg.max_len)
            throw std::invalid_argument("encoder_forward: input length " +
                                        std::to_string(ids.size()) + " exceeds max_len " +
                                        std::to_string(cfg.max_len));
        if (mask.size() != ids.size())
            throw std::invalid_argument("encoder_forward: mask length mismatch");
        std::size_t n = ids.size(), d = cfg.d_model;
        auto x = tape.gather_rows(bound_at<T>(bound, "tok_emb"), ids);
        auto pe = sinusoidal_positions<T>(n, d);
        x = tape.add(x, tape.constant(n, d, std::move(pe.values)));
        x = tape.dropout(x, cfg.dropout_p, train, rng.at("xf_drop_emb"));

        std::vector<Var> collected;
        if (cfg.include_embedding_layer) collected.push_back(x);
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            std::string b = "blk" + std::to_string(l) + "_";
            auto att = multi_head_attention(tape, x, mask, cfg.heads,
                                            bound_at<T>(bound, b + "attn_WQ"),
                                            bound_at<T>(bound, b + "attn_WK"),
                                            bound_at<T>(bound, b + "attn_WV"),
                                            bound_at<T>(bound, b + "attn_WO"));
            att = tape.dropout(att, cfg.dropout_p, train,
                               rng.at("xf_drop_attn" + std::to_string(l)));
            x = tape.layer_norm(tape.add(x, att), bound_at<T>(bound, b + "ln1_g"),
                                bound_at<T>(bound, b + "ln1_b"));
            auto ff = linear(tape,
                             tape.activation(linear(tape, x, bound_at<T>(bound, b + "ff_W1"),
                                                    bound_at<T>(bound, b + "ff_b1")),
                                             Act::relu),
                             bound_at<T>(bound, b + "ff_W2"), bound_at<T>(bound, b + "ff_b2"));
            ff = tape.dropout(ff, cfg.dropout_p, train,
                              rng.at("xf_drop_ff" + std::to_string(l)));
            x = tape.layer_norm(tape.add(x, ff), bound_at<T>(bound, b + "ln2_g"),
                                bound_at<T>(bound, b + "ln2_b"));
            collected.push_back(x);
        }
        return tape.concat_cols(collected);
    }

    Var pool_words(Tape<T>& tape, Var enc_out, const SubwordTokenization& tk) const {
        if (cfg.pool == PoolMode::first) return tape.gather_rows(enc_out, tk.first_index);
        std::vector<Var> rows;
        rows.reserve(tk.word_spans.size());
        for (const auto& span : tk.word_spans) {
            auto g = tape.gather_rows(enc_out, span);
            // mean over the word's subtoken rows via a constant weight row
            std::vector<T> w(span.size(), T(1) / static_cast<T>(span.size()));
            rows.push_back(tape.matmul(tape.constant(1, span.size(), std::move(w)), g));
        }
        return tape.concat_rows(rows);
    }

    Var classify(Tape<T>& tape, const BoundVars<T>& bound, Var pooled,
                 const std::vector<char>& word_mask, bool train, RngSet& rng) const {
        Var h = pooled;
        if (cfg.head_kind == HeadKind::mlp) {
            h = tape.activation(linear(tape, h, bound_at<T>(bound, "head_W1"),
                                       bound_at<T>(bound, "head_b1")),
                                Act::relu);
            h = tape.dropout(h, cfg.dropout_p, train, rng.at("head_drop1"));
        } else {
            std::size_t n = tape.rows(h);
            std::vector<Var> steps(n);
            for (std::size_t i = 0; i < n; ++i) steps[i] = tape.gather_rows(h, {i});
            auto fwd = run_rnn_direction(tape, steps, word_mask, false, RnnKind::lstm,
                                         bound_at<T>(bound, "head_rnn_fwd_Wx"),
                                         bound_at<T>(bound, "head_rnn_fwd_Wh"),
                                         bound_at<T>(bound, "head_rnn_fwd_b"),
                                         cfg.head_rnn_hidden);
            auto bwd = run_rnn_direction(tape, steps, word_mask, true, RnnKind::lstm,
                                         bound_at<T>(bound, "head_rnn_bwd_Wx"),
                                         bound_at<T>(bound, "head_rnn_bwd_Wh"),
                                         bound_at<T>(bound, "head_rnn_bwd_b"),
                                         cfg.head_rnn_hidden);
            std::vector<Var> rows(n);
            for (std::size_t i = 0; i < n; ++i) rows[i] = tape.concat_cols({fwd[i], bwd[i]});
            h = tape.concat_rows(rows);
            h = self_attention(tape, h, word_mask, bound_at<T>(bound, "head_attn_WQ"),
                               bound_at<T>(bound, "head_attn_WK"),
                               bound_at<T>(bound, "head_attn_WV"),
                               bound_at<T>(bound, "head_attn_WO"));
            h = tape.dropout(h, cfg.dropout_p, train, rng.at("head_drop1"));
        }
        h = tape.activation(linear(tape, h, bound_at<T>(bound, "head_W2"),
                                   bound_at<T>(bound, "head_b2")),
                            Act::relu);
        h = tape.dropout(h, cfg.dropout_p, train, rng.at("head_drop2"));
        return tape.activation(linear(tape, h, bound_at<T>(bound, "head_W3"),
                                      bound_at<T>(bound, "head_b3")),
                               Act::sigmoid);
    }

    // Full pipeline; returns pad_len x 1 (padded word rows are zeros).
    Var scores(Tape<T>& tape, const BoundVars<T>& bound, const Instance& inst,
               std::size_t pad_len, bool train, RngSet& rng) const {
        if (inst.tokens.empty()) throw std::invalid_argument("scores: empty instance");
        if (pad_len < inst.tokens.size())
            throw std::invalid_argument("scores: pad_len shorter than instance");
        auto tk = tokenize_words(inst, vocab);
        std::vector<char> mask(tk.flat.size(), 1);
        auto enc = encoder_forward(tape, bound, tk.flat, mask, train, rng);
        auto pooled = pool_words(tape, enc, tk);
        std::vector<char> word_mask(inst.tokens.size(), 1);
        auto s = classify(tape, bound, pooled, word_mask, train, rng);
        if (pad_len == inst.tokens.size()) return s;
        auto zero = tape.constant(pad_len - inst.tokens.size(), 1,
                                  std::vector<T>(pad_len - inst.tokens.size(), T(0)));
        return tape.concat_rows({s, zero});
    }

    std::vector<T> predict(const Instance& inst, std::size_t pad_len = 0) const {
        if (pad_len == 0) pad_len = inst.tokens.size();
        Tape<T> tape;
        auto bound = bind(tape);
        RngSet rng(0);
        auto s = scores(tape, bound, inst, pad_len, false, rng);
        const auto& v = tape.value(s);
        return std::vector<T>(v.begin(), v.begin() + static_cast<long>(inst.tokens.size()));
    }
};

}  // namespace emph
