#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "emph/data.hpp"

namespace emph {

enum class HeatmapFormat { ansi, html };

namespace detail {

inline std::string html_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&#39;"; break;
            default: out += c;
        }
    }
    return out;
}

// 8-step ANSI ramp, level 0 unstyled, levels 1..7 on a dark-to-bright red
// background (256-color codes 52, 88, 124, 160, 196, 203, 210).
inline int ansi_level(double score) {
    int lvl = static_cast<int>(std::floor(score * 8.0));
    return std::clamp(lvl, 0, 7);
}

inline std::string ansi_token(const std::string& tok, double score) {
    static const int ramp[8] = {0, 52, 88, 124, 160, 196, 203, 210};
    int lvl = ansi_level(score);
    if (lvl == 0) return tok;
    return "\033[48;5;" + std::to_string(ramp[lvl]) + "m" + tok + "\033[0m";
}

inline std::string html_token(const std::string& tok, double score) {
    std::ostringstream os;
    if (score <= 0.0) {
        os << "<span>" << html_escape(tok) << "</span>";
    } else {
        os << "<span style=\"background-color: rgba(255,64,0," << score << ")\">"
           << html_escape(tok) << "</span>";
    }
    return os.str();
}

}  // namespace detail

// Background intensity is linear in score (0 none, 1 full). With gold rows,
// each sentence renders prediction and ground truth side by side.
inline std::string heatmap_render(const std::vector<Instance>& instances,
                                  const PredictionSet& preds, HeatmapFormat format,
                                  bool with_gold = false) {
    std::ostringstream out;
    bool html = format == HeatmapFormat::html;
    if (html)
        out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>emphasis "
               "heatmap</title></head><body>\n";
    for (const auto& inst : instances) {
        auto it = preds.find(inst.id);
        if (it == preds.end())
            throw std::runtime_error("heatmap: no predictions for instance '" + inst.id + "'");
        if (it->second.size() != inst.tokens.size())
            throw std::runtime_error("heatmap: token count mismatch for instance '" + inst.id +
                                     "'");
        auto row = [&](const char* label, auto score_of) {
            if (html) {
                out << "<div><b>" << label << "</b> ";
                for (std::size_t i = 0; i < inst.tokens.size(); ++i)
                    out << detail::html_token(inst.tokens[i].surface, score_of(i)) << " ";
                out << "</div>\n";
            } else {
                out << label << " ";
                for (std::size_t i = 0; i < inst.tokens.size(); ++i)
                    out << detail::ansi_token(inst.tokens[i].surface, score_of(i)) << " ";
                out << "\n";
            }
        };
        if (html) out << "<div style=\"margin-bottom:8px\"><i>" << detail::html_escape(inst.id)
                      << "</i>\n";
        else out << "== " << inst.id << "\n";
        row("pred", [&](std::size_t i) { return it->second[i]; });
        if (with_gold) row("gold", [&](std::size_t i) { return inst.tokens[i].gold_prob; });
        if (html) out << "</div>\n";
    }
    if (html) out << "</body></html>\n";
    return out.str();
}

}  // namespace emph
