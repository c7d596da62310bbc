#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <type_traits>
#include <stdexcept>
#include <string>
#include <vector>

#include "emph/adam.hpp"
#include "emph/data.hpp"
#include "emph/eval.hpp"
#include "emph/layers.hpp"
#include "emph/rng.hpp"
#include "emph/tape.hpp"

namespace emph {

struct TrainConfig {
    int epochs = 100;       // 30 for the transformer arch
    double lr = 0.001;      // 2e-5 for the transformer arch
    int batch_size = 16;
    std::uint64_t seed = 0;
    bool shuffle = true;
    // optional early exit once the dev selection metric reaches this value
    double stop_at_dev_mean = 2.0;
};

struct EpochStat {
    double train_bce = 0.0;
    MatchReport dev;
};

struct TrainLog {
    std::vector<EpochStat> epochs;
    int best_epoch = 0;  // 1-based, earliest epoch attaining best_dev_mean
    double best_dev_mean = 0.0;
};

namespace detail {

template <typename M, typename = void>
struct has_frozen : std::false_type {};
template <typename M>
struct has_frozen<M, std::void_t<decltype(std::declval<const M&>().frozen(std::string()))>>
    : std::true_type {};

template <typename M>
bool param_frozen(const M& model, const std::string& name) {
    if constexpr (has_frozen<M>::value)
        return model.frozen(name);
    else
        return false;
}

}  // namespace detail

// Scores every instance; batches are padded to the batch maximum, and masking
// keeps real-token scores independent of the batch split.
template <typename Model>
PredictionSet predict_set(const Model& model, const std::vector<Instance>& instances,
                          std::size_t batch_size = 16) {
    PredictionSet out;
    for (std::size_t b = 0; b < instances.size(); b += batch_size) {
        std::size_t end = std::min(instances.size(), b + batch_size);
        std::size_t pad_len = 0;
        for (std::size_t i = b; i < end; ++i)
            pad_len = std::max(pad_len, instances[i].tokens.size());
        for (std::size_t i = b; i < end; ++i) {
            auto s = model.predict(instances[i], pad_len);
            out[instances[i].id] = std::vector<double>(s.begin(), s.end());
        }
    }
    return out;
}

// BCE training with per-epoch dev Match evaluation; returns the parameters of
// the earliest epoch with the best dev mean.
template <typename Model>
TrainLog train_model(Model& model, const std::vector<Instance>& train_set,
                     const std::vector<Instance>& dev_set, const TrainConfig& cfg) {
    using T = typename std::decay_t<decltype(model.params.begin()->second.values[0])>;
    if (train_set.empty() || dev_set.empty())
        throw std::invalid_argument("train_model: empty train or dev split");
    if (cfg.epochs < 1) throw std::invalid_argument("train_model: epochs must be >= 1");
    if (cfg.lr <= 0) throw std::invalid_argument("train_model: lr must be positive");

    AdamState<T> adam(cfg.lr);
    RngSet drop_rng(cfg.seed);
    PredictionSet dev_gold = gold_as_predictions(dev_set);

    TrainLog log;
    ParamMap<T> best_params = model.params;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (cfg.shuffle) {
            RngStream shuf(cfg.seed, "shuffle:" + std::to_string(epoch));
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[shuf.uniform_index(i)]);
        }
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            std::size_t pad_len = 0;
            for (std::size_t i = b; i < end; ++i)
                pad_len = std::max(pad_len, train_set[order[i]].tokens.size());

            Tape<T> tape;
            auto bound = model.bind(tape);
            std::vector<typename Tape<T>::Var> losses;
            for (std::size_t i = b; i < end; ++i) {
                const Instance& inst = train_set[order[i]];
                auto s = model.scores(tape, bound, inst, pad_len, true, drop_rng);
                std::vector<T> gold(pad_len, T(0));
                std::vector<char> mask(pad_len, 0);
                for (std::size_t t = 0; t < inst.tokens.size(); ++t) {
                    gold[t] = static_cast<T>(inst.tokens[t].gold_prob);
                    mask[t] = 1;
                }
                losses.push_back(tape.bce_loss(s, gold, mask));
            }
            auto loss = tape.mean_scalars(losses);
            double lv = static_cast<double>(tape.value(loss)[0]);
            if (!std::isfinite(lv))
                throw std::runtime_error("train_model: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(b / cfg.batch_size));
            epoch_loss += lv * static_cast<double>(end - b);
            seen += end - b;

            tape.backward(loss);
            adam.begin_step();
            for (auto& [name, param] : model.params) {
                if (detail::param_frozen(model, name)) continue;
                adam.update(name, param, tape.grad(bound.at(name)));
            }
        }

        EpochStat stat;
        stat.train_bce = epoch_loss / static_cast<double>(seen);
        stat.dev = evaluate(dev_gold,
                            predict_set(model, dev_set, static_cast<std::size_t>(cfg.batch_size)));
        log.epochs.push_back(stat);
        if (log.epochs.size() == 1 || stat.dev.mean > log.best_dev_mean) {
            log.best_dev_mean = stat.dev.mean;
            log.best_epoch = epoch;
            best_params = model.params;
        }
        if (log.best_dev_mean >= cfg.stop_at_dev_mean) break;
    }
    model.params = best_params;
    return log;
}

inline void write_train_log(const TrainLog& log, std::ostream& out) {
    out << "epoch\ttrain_bce\tmatch_1\tmatch_2\tmatch_3\tmatch_4\tdev_mean\n";
    char buf[160];
    for (std::size_t i = 0; i < log.epochs.size(); ++i) {
        const auto& e = log.epochs[i];
        std::snprintf(buf, sizeof(buf), "%zu\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n", i + 1,
                      e.train_bce, e.dev.match.at(1), e.dev.match.at(2), e.dev.match.at(3),
                      e.dev.match.at(4), e.dev.mean);
        out << buf;
    }
    out << "# best_epoch=" << log.best_epoch << " best_dev_mean=" << log.best_dev_mean << "\n";
}

// Per-token arithmetic mean of aligned prediction sets.
inline PredictionSet ensemble_average(const std::vector<PredictionSet>& sets) {
    if (sets.empty()) throw std::invalid_argument("ensemble_average: no prediction sets");
    PredictionSet out = sets[0];
    for (std::size_t k = 1; k < sets.size(); ++k) {
        if (sets[k].size() != out.size())
            throw std::invalid_argument("ensemble_average: instance count mismatch in set " +
                                        std::to_string(k));
        for (auto& [id, acc] : out) {
            auto it = sets[k].find(id);
            if (it == sets[k].end())
                throw std::invalid_argument("ensemble_average: instance '" + id +
                                            "' missing from set " + std::to_string(k));
            if (it->second.size() != acc.size())
                throw std::invalid_argument("ensemble_average: token count mismatch for '" + id +
                                            "'");
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += it->second[i];
        }
    }
    for (auto& [id, v] : out)
        for (auto& x : v) x /= static_cast<double>(sets.size());
    return out;
}

struct EnsembleResult {
    std::vector<PredictionSet> member_preds;
    std::vector<MatchReport> member_reports;
    PredictionSet averaged;
    MatchReport ensemble_report;
};

// Trains one member per seed (fully independent runs), then evaluates each
// member and the score average on the same dev set.
template <typename ModelFactory>
EnsembleResult run_ensemble(ModelFactory make_model, const std::vector<std::uint64_t>& seeds,
                            const std::vector<Instance>& train_set,
                            const std::vector<Instance>& dev_set, TrainConfig cfg) {
    if (seeds.empty()) throw std::invalid_argument("run_ensemble: no seeds");
    EnsembleResult res;
    PredictionSet dev_gold = gold_as_predictions(dev_set);
    for (std::uint64_t seed : seeds) {
        cfg.seed = seed;
        auto model = make_model(seed);
        train_model(model, train_set, dev_set, cfg);
        auto preds = predict_set(model, dev_set, static_cast<std::size_t>(cfg.batch_size));
        res.member_reports.push_back(evaluate(dev_gold, preds));
        res.member_preds.push_back(std::move(preds));
    }
    res.averaged = ensemble_average(res.member_preds);
    res.ensemble_report = evaluate(dev_gold, res.averaged);
    return res;
}

}  // namespace emph
