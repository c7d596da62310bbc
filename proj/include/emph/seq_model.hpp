#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "emph/data.hpp"
#include "emph/layers.hpp"
#include "emph/rng.hpp"
#include "emph/tape.hpp"
#include "emph/tensor.hpp"

namespace emph {

struct SeqLabelerConfig {
    std::size_t char_emb_dim = 32;
    std::size_t char_hidden = 300;    // per direction
    RnnKind encoder_kind = RnnKind::lstm;
    std::size_t encoder_hidden = 512;  // per direction
    std::size_t encoder_layers = 2;
    std::size_t attn_proj_dim = 256;
    std::size_t fc_hidden = 20;
    double dropout_p = 0.3;
    std::size_t pos_onehot_dim = 18;
    std::size_t word_dim = 50;

    std::size_t char_out_dim() const { return 2 * char_hidden; }
    std::size_t encoder_out_dim() const { return 2 * encoder_hidden; }
    std::size_t head_in_dim() const { return encoder_out_dim() + pos_onehot_dim; }
};

// Approach-1 labeler: sentence-level character BiLSTM embeddings through a
// highway layer, word-embedding concat, stacked bidirectional encoder,
// single-head self-attention with residual, POS one-hot concat, sigmoid head.
template <typename T>
class SeqLabeler {
public:
    using Var = typename Tape<T>::Var;

    SeqLabelerConfig cfg;
    Vocab vocab;
    ParamMap<T> params;

    void init(std::uint64_t seed, const EmbeddingTable* pretrained = nullptr) {
        params.clear();
        auto put = [&](const std::string& name, std::size_t r, std::size_t c) {
            RngStream rng(seed, "init:" + name);
            params[name] = xavier_uniform<T>(r, c, rng);
        };
        auto zeros = [&](const std::string& name, std::size_t r, std::size_t c) {
            params[name] = Tensor<T>(r, c, T(0));
        };

        put("char_emb", vocab.char_count(), cfg.char_emb_dim);
        for (const char* dir : {"fwd", "bwd"}) {
            put(std::string("char_lstm_") + dir + "_Wx", cfg.char_emb_dim, 4 * cfg.char_hidden);
            put(std::string("char_lstm_") + dir + "_Wh", cfg.char_hidden, 4 * cfg.char_hidden);
            zeros(std::string("char_lstm_") + dir + "_b", 1, 4 * cfg.char_hidden);
        }
        std::size_t cd = cfg.char_out_dim();
        put("highway_WT", cd, cd);
        params["highway_bT"] = Tensor<T>(1, cd, T(-1));  // carry-biased start
        put("highway_WH", cd, cd);
        zeros("highway_bH", 1, cd);

        put("word_emb", vocab.word_count(), cfg.word_dim);
        if (pretrained) {
            if (pretrained->dim != cfg.word_dim)
                throw std::invalid_argument("pretrained embedding dim " +
                                            std::to_string(pretrained->dim) +
                                            " != configured word_dim " +
                                            std::to_string(cfg.word_dim));
            auto& emb = params["word_emb"];
            for (std::size_t i = 2; i < vocab.word_count(); ++i) {
                auto v = pretrained->lookup(vocab.index_to_word[i]);
                for (std::size_t j = 0; j < cfg.word_dim; ++j)
                    emb.at(i, j) = static_cast<T>(v[j]);
            }
        }

        std::size_t gate_mult = cfg.encoder_kind == RnnKind::lstm ? 4 : 3;
        std::size_t in_dim = cd + cfg.word_dim;
        for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
            for (const char* dir : {"fwd", "bwd"}) {
                std::string base = "enc" + std::to_string(l) + "_" + dir + "_";
                put(base + "Wx", in_dim, gate_mult * cfg.encoder_hidden);
                put(base + "Wh", cfg.encoder_hidden, gate_mult * cfg.encoder_hidden);
                zeros(base + "b", 1, gate_mult * cfg.encoder_hidden);
            }
            in_dim = cfg.encoder_out_dim();
        }

        std::size_t ed = cfg.encoder_out_dim();
        put("attn_WQ", ed, cfg.attn_proj_dim);
        put("attn_WK", ed, cfg.attn_proj_dim);
        put("attn_WV", ed, cfg.attn_proj_dim);
        put("attn_WO", cfg.attn_proj_dim, ed);

        put("fc1_W", cfg.head_in_dim(), cfg.fc_hidden);
        zeros("fc1_b", 1, cfg.fc_hidden);
        put("fc2_W", cfg.fc_hidden, 1);
        zeros("fc2_b", 1, 1);
    }

    BoundVars<T> bind(Tape<T>& tape) const {
        BoundVars<T> b;
        for (const auto& [name, t] : params) b[name] = tape.leaf(t);
        return b;
    }

    // Character-level embeddings: both LSTMs run over the whole sentence's
    // character stream (spaces included); each word takes the outputs at its
    // last character. Only real tokens contribute; padded rows come out zero.
    Var char_word_embed(Tape<T>& tape, const BoundVars<T>& bound, const Instance& inst,
                        std::size_t pad_len) const {
        std::vector<std::size_t> char_ids;
        std::vector<std::size_t> last_pos(inst.tokens.size());
        for (std::size_t w = 0; w < inst.tokens.size(); ++w) {
            if (w > 0) char_ids.push_back(vocab.chr(" "));
            for (const auto& c : utf8_split(inst.tokens[w].surface))
                char_ids.push_back(vocab.chr(c));
            if (inst.tokens[w].surface.empty())
                throw std::invalid_argument("char_word_embed: empty token surface");
            last_pos[w] = char_ids.size() - 1;
        }
        auto emb = tape.gather_rows(bound_at<T>(bound, "char_emb"), char_ids);
        std::vector<Var> steps(char_ids.size());
        for (std::size_t i = 0; i < char_ids.size(); ++i)
            steps[i] = tape.gather_rows(emb, {i});
        std::vector<char> all_real(char_ids.size(), 1);
        auto fwd = run_rnn_direction(tape, steps, all_real, false, RnnKind::lstm,
                                     bound_at<T>(bound, "char_lstm_fwd_Wx"),
                                     bound_at<T>(bound, "char_lstm_fwd_Wh"),
                                     bound_at<T>(bound, "char_lstm_fwd_b"), cfg.char_hidden);
        auto bwd = run_rnn_direction(tape, steps, all_real, true, RnnKind::lstm,
                                     bound_at<T>(bound, "char_lstm_bwd_Wx"),
                                     bound_at<T>(bound, "char_lstm_bwd_Wh"),
                                     bound_at<T>(bound, "char_lstm_bwd_b"), cfg.char_hidden);
        std::vector<Var> rows;
        rows.reserve(pad_len);
        for (std::size_t w = 0; w < inst.tokens.size(); ++w)
            rows.push_back(tape.concat_cols({fwd[last_pos[w]], bwd[last_pos[w]]}));
        for (std::size_t w = inst.tokens.size(); w < pad_len; ++w)
            rows.push_back(tape.constant(1, cfg.char_out_dim(),
                                         std::vector<T>(cfg.char_out_dim(), T(0))));
        return tape.concat_rows(rows);
    }

    Var apply_highway(Tape<T>& tape, const BoundVars<T>& bound, Var x) const {
        return highway(tape, x, bound_at<T>(bound, "highway_WT"),
                       bound_at<T>(bound, "highway_bT"), bound_at<T>(bound, "highway_WH"),
                       bound_at<T>(bound, "highway_bH"));
    }

    Var recurrent_encode(Tape<T>& tape, const BoundVars<T>& bound, Var x,
                         const std::vector<char>& mask) const {
        std::size_t n = tape.rows(x);
        Var cur = x;
        for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
            std::vector<Var> steps(n);
            for (std::size_t i = 0; i < n; ++i) steps[i] = tape.gather_rows(cur, {i});
            std::string base = "enc" + std::to_string(l) + "_";
            auto fwd = run_rnn_direction(tape, steps, mask, false, cfg.encoder_kind,
                                         bound_at<T>(bound, base + "fwd_Wx"),
                                         bound_at<T>(bound, base + "fwd_Wh"),
                                         bound_at<T>(bound, base + "fwd_b"),
                                         cfg.encoder_hidden);
            auto bwd = run_rnn_direction(tape, steps, mask, true, cfg.encoder_kind,
                                         bound_at<T>(bound, base + "bwd_Wx"),
                                         bound_at<T>(bound, base + "bwd_Wh"),
                                         bound_at<T>(bound, base + "bwd_b"),
                                         cfg.encoder_hidden);
            std::vector<Var> rows(n);
            for (std::size_t i = 0; i < n; ++i)
                rows[i] = tape.concat_cols({fwd[i], bwd[i]});
            cur = tape.concat_rows(rows);
        }
        return cur;
    }

    Var classify_head(Tape<T>& tape, const BoundVars<T>& bound, Var feats, bool train,
                      RngSet& rng) const {
        auto h = tape.activation(linear(tape, feats, bound_at<T>(bound, "fc1_W"),
                                        bound_at<T>(bound, "fc1_b")),
                                 Act::relu);
        h = tape.dropout(h, cfg.dropout_p, train, rng.at("drop_head"));
        return tape.activation(linear(tape, h, bound_at<T>(bound, "fc2_W"),
                                      bound_at<T>(bound, "fc2_b")),
                               Act::sigmoid);
    }

    // Full pipeline; returns pad_len x 1 scores (padded rows meaningless).
    Var scores(Tape<T>& tape, const BoundVars<T>& bound, const Instance& inst,
               std::size_t pad_len, bool train, RngSet& rng) const {
        if (inst.tokens.empty()) throw std::invalid_argument("scores: empty instance");
        if (pad_len < inst.tokens.size())
            throw std::invalid_argument("scores: pad_len shorter than instance");
        std::vector<char> mask(pad_len, 0);
        for (std::size_t i = 0; i < inst.tokens.size(); ++i) mask[i] = 1;

        auto ch = char_word_embed(tape, bound, inst, pad_len);
        ch = apply_highway(tape, bound, ch);

        std::vector<std::size_t> word_ids(pad_len, Vocab::pad_index);
        for (std::size_t i = 0; i < inst.tokens.size(); ++i)
            word_ids[i] = vocab.word(inst.tokens[i].surface);
        auto wemb = tape.gather_rows(bound_at<T>(bound, "word_emb"), word_ids);

        auto x = tape.concat_cols({ch, wemb});
        x = tape.dropout(x, cfg.dropout_p, train, rng.at("drop_embed"));
        auto enc = recurrent_encode(tape, bound, x, mask);
        enc = tape.dropout(enc, cfg.dropout_p, train, rng.at("drop_enc"));
        auto att = self_attention(tape, enc, mask, bound_at<T>(bound, "attn_WQ"),
                                  bound_at<T>(bound, "attn_WK"), bound_at<T>(bound, "attn_WV"),
                                  bound_at<T>(bound, "attn_WO"));

        std::vector<T> pos_oh(pad_len * cfg.pos_onehot_dim, T(0));
        for (std::size_t i = 0; i < inst.tokens.size(); ++i)
            pos_oh[i * cfg.pos_onehot_dim + pos_index(inst.tokens[i].pos)] = T(1);
        auto posv = tape.constant(pad_len, cfg.pos_onehot_dim, std::move(pos_oh));

        return classify_head(tape, bound, tape.concat_cols({att, posv}), train, rng);
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
