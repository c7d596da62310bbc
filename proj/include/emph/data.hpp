#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "emph/rng.hpp"

namespace emph {

// 17 universal tags plus the fallback "X" (18 one-hot dims downstream).
inline const std::vector<std::string>& pos_tagset() {
    static const std::vector<std::string> tags = {
        "ADJ", "ADP", "ADV",  "AUX",   "CCONJ", "CONJ", "DET",   "INTJ", "NOUN",
        "NUM", "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X"};
    return tags;
}

inline std::size_t pos_index(const std::string& tag) {
    const auto& tags = pos_tagset();
    auto it = std::find(tags.begin(), tags.end(), tag);
    if (it == tags.end()) return tags.size() - 1;  // "X"
    return static_cast<std::size_t>(it - tags.begin());
}

struct Token {
    std::string surface;
    std::string pos = "X";
    std::optional<std::array<int, 9>> annotations;
    double gold_prob = 0.0;
};

struct Instance {
    std::string id;
    std::vector<Token> tokens;
};

// instance id -> per-token scores in [0,1]
using PredictionSet = std::map<std::string, std::vector<double>>;

// ---- UTF-8 ---------------------------------------------------------------

// Splits a UTF-8 string into codepoint substrings. Malformed bytes pass
// through as single-byte units.
inline std::vector<std::string> utf8_split(const std::string& s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        if ((c & 0x80) == 0x00) len = 1;
        else if ((c & 0xE0) == 0xC0) len = 2;
        else if ((c & 0xF0) == 0xE0) len = 3;
        else if ((c & 0xF8) == 0xF0) len = 4;
        if (i + len > s.size()) len = 1;
        out.push_back(s.substr(i, len));
        i += len;
    }
    return out;
}

// ---- vocab ---------------------------------------------------------------

struct Vocab {
    static constexpr std::size_t pad_index = 0;
    static constexpr std::size_t unk_index = 1;

    std::unordered_map<std::string, std::size_t> word_to_index;
    std::vector<std::string> index_to_word;  // includes <pad>, <unk>
    std::unordered_map<std::string, std::size_t> char_to_index;
    std::vector<std::string> index_to_char;
    std::size_t min_word_freq = 1;

    std::size_t word(const std::string& w) const {
        auto it = word_to_index.find(w);
        return it == word_to_index.end() ? unk_index : it->second;
    }
    std::size_t chr(const std::string& c) const {
        auto it = char_to_index.find(c);
        return it == char_to_index.end() ? unk_index : it->second;
    }
    std::size_t word_count() const { return index_to_word.size(); }
    std::size_t char_count() const { return index_to_char.size(); }
};

inline Vocab build_vocab(const std::vector<Instance>& instances, std::size_t min_word_freq) {
    if (instances.empty()) throw std::invalid_argument("build_vocab: empty corpus");
    Vocab v;
    v.min_word_freq = min_word_freq;
    v.index_to_word = {"<pad>", "<unk>"};
    v.index_to_char = {"<pad>", "<unk>"};
    v.word_to_index = {{"<pad>", 0}, {"<unk>", 1}};
    v.char_to_index = {{"<pad>", 0}, {"<unk>", 1}};

    std::unordered_map<std::string, std::size_t> freq, first_seen;
    std::size_t pos = 0;
    std::vector<std::string> order;
    for (const auto& inst : instances)
        for (const auto& tok : inst.tokens) {
            if (++freq[tok.surface] == 1) {
                first_seen[tok.surface] = pos;
                order.push_back(tok.surface);
            }
            ++pos;
            for (const auto& c : utf8_split(tok.surface))
                if (!v.char_to_index.count(c)) {
                    v.char_to_index[c] = v.index_to_char.size();
                    v.index_to_char.push_back(c);
                }
        }
    // the space character appears in the sentence character stream
    if (!v.char_to_index.count(" ")) {
        v.char_to_index[" "] = v.index_to_char.size();
        v.index_to_char.push_back(" ");
    }

    std::stable_sort(order.begin(), order.end(),
                     [&](const std::string& a, const std::string& b) {
                         if (freq[a] != freq[b]) return freq[a] > freq[b];
                         return first_seen[a] < first_seen[b];
                     });
    for (const auto& w : order)
        if (freq[w] >= min_word_freq) {
            v.word_to_index[w] = v.index_to_word.size();
            v.index_to_word.push_back(w);
        }
    return v;
}

// ---- dataset format ------------------------------------------------------

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t p = s.find(sep, start);
        if (p == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, p - start));
        start = p + 1;
    }
    return out;
}

[[noreturn]] inline void parse_fail(const std::string& path, std::size_t line_no,
                                    const std::string& msg) {
    throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + msg);
}

}  // namespace detail

// Each instance: "# id=<id>" then one "<idx>\t<surface>\t<pos>\t<ann>" line per
// token, instances separated by one blank line. <ann> is nine |-separated 0/1
// flags or a single decimal (pre-aggregated mode).
inline std::vector<Instance> parse_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("parse_dataset: cannot open " + path);
    std::vector<Instance> out;
    std::unordered_map<std::string, bool> seen_ids;
    std::optional<Instance> cur;
    std::string line;
    std::size_t line_no = 0;

    auto flush = [&](std::size_t at_line) {
        if (!cur) return;
        if (cur->tokens.empty())
            detail::parse_fail(path, at_line, "instance '" + cur->id + "' has no tokens");
        out.push_back(std::move(*cur));
        cur.reset();
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            flush(line_no);
            continue;
        }
        if (line.rfind("# id=", 0) == 0) {
            flush(line_no);
            std::string id = line.substr(5);
            if (id.empty()) detail::parse_fail(path, line_no, "empty instance id");
            if (seen_ids[id]) detail::parse_fail(path, line_no, "duplicate instance id '" + id + "'");
            seen_ids[id] = true;
            cur = Instance{id, {}};
            continue;
        }
        if (!cur) detail::parse_fail(path, line_no, "token line outside an instance");
        auto fields = detail::split(line, '\t');
        if (fields.size() != 4)
            detail::parse_fail(path, line_no, "expected 4 tab-separated fields, got " +
                                                  std::to_string(fields.size()));
        std::size_t idx;
        try {
            idx = static_cast<std::size_t>(std::stoul(fields[0]));
        } catch (...) {
            detail::parse_fail(path, line_no, "bad token index '" + fields[0] + "'");
        }
        if (idx != cur->tokens.size())
            detail::parse_fail(path, line_no, "token index " + std::to_string(idx) +
                                                  " not contiguous (expected " +
                                                  std::to_string(cur->tokens.size()) + ")");
        Token tok;
        tok.surface = fields[1];
        if (tok.surface.empty()) detail::parse_fail(path, line_no, "empty token surface");
        tok.pos = (fields[2] == "-" || fields[2].empty()) ? "X" : fields[2];

        const std::string& ann = fields[3];
        if (ann.find('|') != std::string::npos) {
            auto flags = detail::split(ann, '|');
            if (flags.size() != 9)
                detail::parse_fail(path, line_no, "expected 9 annotation flags, got " +
                                                      std::to_string(flags.size()));
            std::array<int, 9> a{};
            int ones = 0;
            for (std::size_t i = 0; i < 9; ++i) {
                if (flags[i] != "0" && flags[i] != "1")
                    detail::parse_fail(path, line_no, "annotation flag must be 0 or 1, got '" +
                                                          flags[i] + "'");
                a[i] = flags[i] == "1" ? 1 : 0;
                ones += a[i];
            }
            tok.annotations = a;
            tok.gold_prob = static_cast<double>(ones) / 9.0;
        } else {
            try {
                tok.gold_prob = std::stod(ann);
            } catch (...) {
                detail::parse_fail(path, line_no, "bad gold probability '" + ann + "'");
            }
            if (tok.gold_prob < 0.0 || tok.gold_prob > 1.0)
                detail::parse_fail(path, line_no, "gold probability out of [0,1]: " + ann);
        }
        cur->tokens.push_back(std::move(tok));
    }
    flush(line_no + 1);
    return out;
}

inline void write_dataset(const std::vector<Instance>& instances, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_dataset: cannot open " + path);
    bool first = true;
    for (const auto& inst : instances) {
        if (!first) out << "\n";
        first = false;
        out << "# id=" << inst.id << "\n";
        for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
            const auto& t = inst.tokens[i];
            out << i << "\t" << t.surface << "\t" << t.pos << "\t";
            if (t.annotations) {
                for (std::size_t j = 0; j < 9; ++j) out << (j ? "|" : "") << (*t.annotations)[j];
            } else {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.6f", t.gold_prob);
                out << buf;
            }
            out << "\n";
        }
    }
}

inline PredictionSet gold_as_predictions(const std::vector<Instance>& instances) {
    PredictionSet p;
    for (const auto& inst : instances) {
        auto& v = p[inst.id];
        for (const auto& t : inst.tokens) v.push_back(t.gold_prob);
    }
    return p;
}

// ---- prediction format ---------------------------------------------------

inline void write_predictions(const PredictionSet& preds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_predictions: cannot open " + path);
    out << "id\ttoken\tscore\n";
    for (const auto& [id, scores] : preds)
        for (std::size_t i = 0; i < scores.size(); ++i) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6f", scores[i]);
            out << id << "\t" << i << "\t" << buf << "\n";
        }
}

inline PredictionSet read_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_predictions: cannot open " + path);
    PredictionSet out;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty prediction file");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "id\ttoken\tscore")
        detail::parse_fail(path, line_no, "bad header '" + line + "'");
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = detail::split(line, '\t');
        if (f.size() != 3) detail::parse_fail(path, line_no, "expected 3 fields");
        std::size_t idx;
        double score;
        try {
            idx = static_cast<std::size_t>(std::stoul(f[1]));
            score = std::stod(f[2]);
        } catch (...) {
            detail::parse_fail(path, line_no, "bad index or score");
        }
        if (score < 0.0 || score > 1.0)
            detail::parse_fail(path, line_no, "score out of [0,1]: " + f[2]);
        auto& v = out[f[0]];
        if (idx != v.size())
            detail::parse_fail(path, line_no, "token index " + std::to_string(idx) +
                                                  " not contiguous for id '" + f[0] + "'");
        v.push_back(score);
    }
    return out;
}

// ---- embeddings ----------------------------------------------------------

struct EmbeddingTable {
    std::size_t dim = 0;
    std::unordered_map<std::string, std::vector<double>> vectors;
    std::uint64_t oov_seed = 0;

    // OOV words get a reproducible uniform[-0.05, 0.05] vector keyed by the word
    std::vector<double> lookup(const std::string& word) const {
        auto it = vectors.find(word);
        if (it != vectors.end()) return it->second;
        RngStream rng(oov_seed, "oov:" + word);
        std::vector<double> v(dim);
        for (auto& x : v) x = rng.uniform(-0.05, 0.05);
        return v;
    }
};

// GloVe text format: "word v1 ... vd"; an optional "count dim" header line is
// auto-detected.
inline EmbeddingTable load_embeddings(const std::string& path, std::uint64_t oov_seed = 0) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_embeddings: cannot open " + path);
    EmbeddingTable table;
    table.oov_seed = oov_seed;
    std::string line;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = detail::split(line, ' ');
        if (first && f.size() == 2) {
            // header "count dim"
            try {
                (void)std::stoul(f[0]);
                (void)std::stoul(f[1]);
                first = false;
                continue;
            } catch (...) {
                // fall through, treat as a vector line
            }
        }
        first = false;
        if (f.size() < 2) detail::parse_fail(path, line_no, "too few fields");
        std::vector<double> v;
        v.reserve(f.size() - 1);
        for (std::size_t i = 1; i < f.size(); ++i) {
            try {
                v.push_back(std::stod(f[i]));
            } catch (...) {
                detail::parse_fail(path, line_no, "bad vector component '" + f[i] + "'");
            }
        }
        if (table.dim == 0) table.dim = v.size();
        if (v.size() != table.dim)
            detail::parse_fail(path, line_no, "dimension " + std::to_string(v.size()) +
                                                  " differs from established " +
                                                  std::to_string(table.dim));
        table.vectors[f[0]] = std::move(v);
    }
    if (table.dim == 0) throw std::runtime_error(path + ": no vectors found");
    return table;
}

}  // namespace emph
