#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "emph/data.hpp"

namespace emph {

struct MatchReport {
    std::map<int, double> match;  // m in 1..4
    double mean = 0.0;
    std::size_t dataset_size = 0;
};

// Indices of the min(m, n) highest scores; exact ties broken by lower index.
inline std::set<std::size_t> top_m_set(const std::vector<double>& scores, std::size_t m) {
    if (scores.empty()) throw std::invalid_argument("top_m_set: empty score list");
    if (m == 0) throw std::invalid_argument("top_m_set: m must be >= 1");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    std::size_t k = std::min(m, scores.size());
    return std::set<std::size_t>(idx.begin(), idx.begin() + static_cast<long>(k));
}

inline double match_m(const PredictionSet& gold, const PredictionSet& pred, std::size_t m) {
    if (gold.size() != pred.size())
        throw std::invalid_argument("match_m: instance count differs, " +
                                    std::to_string(gold.size()) + " vs " +
                                    std::to_string(pred.size()));
    if (gold.empty()) throw std::invalid_argument("match_m: empty dataset");
    double total = 0.0;
    for (const auto& [id, gscores] : gold) {
        auto it = pred.find(id);
        if (it == pred.end())
            throw std::invalid_argument("match_m: instance '" + id + "' missing from predictions");
        const auto& pscores = it->second;
        if (pscores.size() != gscores.size())
            throw std::invalid_argument("match_m: token count differs for instance '" + id + "'");
        auto gs = top_m_set(gscores, m);
        auto ps = top_m_set(pscores, m);
        std::size_t inter = 0;
        for (std::size_t i : gs) inter += ps.count(i);
        total += static_cast<double>(inter) /
                 static_cast<double>(std::min(m, gscores.size()));
    }
    return total / static_cast<double>(gold.size());
}

inline MatchReport evaluate(const PredictionSet& gold, const PredictionSet& pred) {
    MatchReport r;
    r.dataset_size = gold.size();
    double sum = 0.0;
    for (int m = 1; m <= 4; ++m) {
        r.match[m] = match_m(gold, pred, static_cast<std::size_t>(m));
        sum += r.match[m];
    }
    r.mean = sum / 4.0;
    return r;
}

}  // namespace emph
