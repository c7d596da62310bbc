#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "emph/seq_model.hpp"
#include "emph/tensor.hpp"
#include "emph/transformer.hpp"

namespace emph {

// Model file: "EMPH1", length-prefixed architecture tag, length-prefixed JSON
// config header, parameter count, then per parameter: name, rank, dims,
// little-endian 32-bit floats.

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("model file: truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_str(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_str(std::istream& in) {
    std::uint32_t n = read_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw std::runtime_error("model file: truncated string");
    return s;
}

inline void write_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(out, bits);
}

inline float read_f32(std::istream& in) {
    std::uint32_t bits = read_u32(in);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace detail

template <typename T>
void write_model_file(const std::string& path, const std::string& tag,
                      const nlohmann::json& config, const ParamMap<T>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_model_file: cannot open " + path);
    out.write("EMPH1", 5);
    detail::write_str(out, tag);
    detail::write_str(out, config.dump());
    detail::write_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        detail::write_str(out, name);
        detail::write_u32(out, 2);
        detail::write_u32(out, static_cast<std::uint32_t>(t.rows));
        detail::write_u32(out, static_cast<std::uint32_t>(t.cols));
        for (T v : t.values) detail::write_f32(out, static_cast<float>(v));
    }
}

struct RawModelFile {
    std::string tag;
    nlohmann::json config;
    ParamMap<float> params;
};

inline RawModelFile read_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_model_file: cannot open " + path);
    char magic[5];
    in.read(magic, 5);
    if (!in || std::string(magic, 5) != "EMPH1")
        throw std::runtime_error(path + ": not a model file (bad magic)");
    RawModelFile f;
    f.tag = detail::read_str(in);
    f.config = nlohmann::json::parse(detail::read_str(in));
    std::uint32_t count = detail::read_u32(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = detail::read_str(in);
        std::uint32_t rank = detail::read_u32(in);
        if (rank != 2) throw std::runtime_error(path + ": unsupported rank for '" + name + "'");
        std::uint32_t r = detail::read_u32(in), c = detail::read_u32(in);
        Tensor<float> t(r, c);
        for (auto& v : t.values) v = detail::read_f32(in);
        f.params[name] = std::move(t);
    }
    return f;
}

// Loaded parameter shapes must match what the config implies.
template <typename T>
void adopt_params(ParamMap<T>& expected, const ParamMap<float>& loaded,
                  const std::string& path) {
    if (expected.size() != loaded.size())
        throw std::runtime_error(path + ": parameter count mismatch");
    for (auto& [name, t] : expected) {
        auto it = loaded.find(name);
        if (it == loaded.end())
            throw std::runtime_error(path + ": missing parameter '" + name + "'");
        if (it->second.rows != t.rows || it->second.cols != t.cols)
            throw std::runtime_error(path + ": shape mismatch for '" + name + "': file " +
                                     it->second.shape_str() + ", config implies " +
                                     t.shape_str());
        t = it->second.template cast<T>();
    }
}

// ---- seq_v1 --------------------------------------------------------------

inline nlohmann::json seq_config_json(const SeqLabelerConfig& c, const Vocab& v) {
    return nlohmann::json{{"char_emb_dim", c.char_emb_dim},
                          {"char_hidden", c.char_hidden},
                          {"encoder_kind", c.encoder_kind == RnnKind::lstm ? "bilstm" : "gru"},
                          {"encoder_hidden", c.encoder_hidden},
                          {"encoder_layers", c.encoder_layers},
                          {"attn_proj_dim", c.attn_proj_dim},
                          {"fc_hidden", c.fc_hidden},
                          {"dropout_p", c.dropout_p},
                          {"pos_onehot_dim", c.pos_onehot_dim},
                          {"word_dim", c.word_dim},
                          {"min_word_freq", v.min_word_freq},
                          {"words", v.index_to_word},
                          {"chars", v.index_to_char}};
}

template <typename T>
void save_model(const std::string& path, const SeqLabeler<T>& m) {
    write_model_file(path, "seq_v1", seq_config_json(m.cfg, m.vocab), m.params);
}

template <typename T>
SeqLabeler<T> load_seq_model(const std::string& path, const RawModelFile& f) {
    SeqLabeler<T> m;
    const auto& j = f.config;
    m.cfg.char_emb_dim = j.at("char_emb_dim");
    m.cfg.char_hidden = j.at("char_hidden");
    m.cfg.encoder_kind = j.at("encoder_kind") == "gru" ? RnnKind::gru : RnnKind::lstm;
    m.cfg.encoder_hidden = j.at("encoder_hidden");
    m.cfg.encoder_layers = j.at("encoder_layers");
    m.cfg.attn_proj_dim = j.at("attn_proj_dim");
    m.cfg.fc_hidden = j.at("fc_hidden");
    m.cfg.dropout_p = j.at("dropout_p");
    m.cfg.pos_onehot_dim = j.at("pos_onehot_dim");
    m.cfg.word_dim = j.at("word_dim");
    m.vocab.min_word_freq = j.at("min_word_freq");
    m.vocab.index_to_word = j.at("words").get<std::vector<std::string>>();
    m.vocab.index_to_char = j.at("chars").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < m.vocab.index_to_word.size(); ++i)
        m.vocab.word_to_index[m.vocab.index_to_word[i]] = i;
    for (std::size_t i = 0; i < m.vocab.index_to_char.size(); ++i)
        m.vocab.char_to_index[m.vocab.index_to_char[i]] = i;
    m.init(0);
    adopt_params(m.params, f.params, path);
    return m;
}

// ---- xfmr_v1 -------------------------------------------------------------

inline nlohmann::json xfmr_config_json(const TransformerConfig& c) {
    return nlohmann::json{{"layers", c.layers},
                          {"heads", c.heads},
                          {"d_model", c.d_model},
                          {"d_ff", c.d_ff},
                          {"max_len", c.max_len},
                          {"dropout_p", c.dropout_p},
                          {"head_h1", c.head_h1},
                          {"head_h2", c.head_h2},
                          {"freeze_first_k", c.freeze_first_k},
                          {"include_embedding_layer", c.include_embedding_layer},
                          {"pool", c.pool == PoolMode::first ? "first" : "mean"},
                          {"head_kind", c.head_kind == HeadKind::mlp ? "mlp" : "bilstm_attn"},
                          {"head_rnn_hidden", c.head_rnn_hidden},
                          {"head_attn_dim", c.head_attn_dim}};
}

// The subword vocab travels as an ordered UTF-8 token list next to the model.
template <typename T>
void save_model(const std::string& path, const TransformerLabeler<T>& m) {
    write_model_file(path, "xfmr_v1", xfmr_config_json(m.cfg), m.params);
    std::ofstream vout(path + ".vocab");
    if (!vout) throw std::runtime_error("save_model: cannot open " + path + ".vocab");
    for (const auto& t : m.vocab.tokens) vout << t << "\n";
}

template <typename T>
TransformerLabeler<T> load_transformer_model(const std::string& path, const RawModelFile& f) {
    TransformerLabeler<T> m;
    const auto& j = f.config;
    m.cfg.layers = j.at("layers");
    m.cfg.heads = j.at("heads");
    m.cfg.d_model = j.at("d_model");
    m.cfg.d_ff = j.at("d_ff");
    m.cfg.max_len = j.at("max_len");
    m.cfg.dropout_p = j.at("dropout_p");
    m.cfg.head_h1 = j.at("head_h1");
    m.cfg.head_h2 = j.at("head_h2");
    m.cfg.freeze_first_k = j.at("freeze_first_k");
    m.cfg.include_embedding_layer = j.at("include_embedding_layer");
    m.cfg.pool = j.at("pool") == "mean" ? PoolMode::mean : PoolMode::first;
    m.cfg.head_kind = j.at("head_kind") == "bilstm_attn" ? HeadKind::bilstm_attn : HeadKind::mlp;
    m.cfg.head_rnn_hidden = j.at("head_rnn_hidden");
    m.cfg.head_attn_dim = j.at("head_attn_dim");

    std::ifstream vin(path + ".vocab");
    if (!vin) throw std::runtime_error("load: cannot open " + path + ".vocab");
    std::vector<std::string> toks;
    std::string line;
    while (std::getline(vin, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) toks.push_back(line);
    }
    m.vocab = SubwordVocab::from_token_list(toks);
    m.init(0);
    adopt_params(m.params, f.params, path);
    return m;
}

}  // namespace emph
