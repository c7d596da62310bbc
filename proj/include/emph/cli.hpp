#pragma once

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "emph/data.hpp"
#include "emph/eval.hpp"
#include "emph/heatmap.hpp"
#include "emph/seq_model.hpp"
#include "emph/serialize.hpp"
#include "emph/train.hpp"
#include "emph/transformer.hpp"

namespace emph::cli {

// exit codes: 0 success, 1 usage error, 2 data/contract error

struct TrainArgs {
    std::string arch;
    std::string train_path, dev_path, out_path;
    std::string embeddings_path;
    std::string profile = "paper";
    int epochs = -1;
    double lr = -1.0;
    int batch = 16;
    std::uint64_t seed = 0;
};

namespace detail {

inline PredictionSet load_gold_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string first;
    std::getline(in, first);
    in.close();
    if (first.rfind("# id=", 0) == 0) return gold_as_predictions(parse_dataset(path));
    return read_predictions(path);
}

template <typename T>
int run_train(const TrainArgs& a) {
    auto train_set = parse_dataset(a.train_path);
    auto dev_set = parse_dataset(a.dev_path);

    TrainConfig tc;
    tc.batch_size = a.batch;
    tc.seed = a.seed;

    TrainLog log;
    if (a.arch == "bilstm") {
        SeqLabeler<T> model;
        if (a.profile == "toy") {
            model.cfg.char_emb_dim = 16;
            model.cfg.char_hidden = 24;
            model.cfg.encoder_hidden = 32;
            model.cfg.encoder_layers = 1;
            model.cfg.attn_proj_dim = 16;
            model.cfg.word_dim = 16;
        }
        model.vocab = build_vocab(train_set, 1);
        std::optional<EmbeddingTable> emb;
        if (!a.embeddings_path.empty()) {
            emb = load_embeddings(a.embeddings_path, a.seed);
            model.cfg.word_dim = emb->dim;
        }
        model.init(a.seed, emb ? &*emb : nullptr);
        tc.epochs = a.epochs > 0 ? a.epochs : 100;
        tc.lr = a.lr > 0 ? a.lr : 0.001;
        log = train_model(model, train_set, dev_set, tc);
        save_model(a.out_path, model);
    } else {
        TransformerLabeler<T> model;
        if (a.profile == "toy") {
            model.cfg.layers = 2;
            model.cfg.heads = 2;
            model.cfg.d_model = 32;
            model.cfg.d_ff = 64;
            model.cfg.head_h1 = 64;
            model.cfg.head_h2 = 16;
        }
        model.vocab = build_subword_vocab(train_set, 5000);
        std::size_t longest = 0;
        for (const auto& inst : train_set)
            longest = std::max(longest, tokenize_words(inst, model.vocab).flat.size());
        model.cfg.max_len = std::max(model.cfg.max_len, 2 * longest);
        model.init(a.seed);
        tc.epochs = a.epochs > 0 ? a.epochs : 30;
        tc.lr = a.lr > 0 ? a.lr : 2e-5;
        log = train_model(model, train_set, dev_set, tc);
        save_model(a.out_path, model);
    }

    std::ofstream lout(a.out_path + ".log");
    write_train_log(log, lout);
    std::cout << "best_epoch=" << log.best_epoch << " best_dev_mean=" << log.best_dev_mean
              << "\n";
    return 0;
}

template <typename T>
int run_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out_path) {
    auto data = parse_dataset(data_path);
    auto raw = read_model_file(model_path);
    PredictionSet preds;
    if (raw.tag == "seq_v1") {
        auto model = load_seq_model<T>(model_path, raw);
        preds = predict_set(model, data);
    } else if (raw.tag == "xfmr_v1") {
        auto model = load_transformer_model<T>(model_path, raw);
        preds = predict_set(model, data);
    } else {
        throw std::runtime_error(model_path + ": unknown architecture tag '" + raw.tag + "'");
    }
    write_predictions(preds, out_path);
    return 0;
}

}  // namespace detail

inline int dispatch(std::vector<std::string> args) {
    CLI::App app{"emphasis selection toolkit"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "train a model");
    train->add_option("--arch", ta.arch, "model architecture")
        ->required()
        ->check(CLI::IsMember({"bilstm", "transformer"}));
    train->add_option("--train", ta.train_path, "training dataset file")->required();
    train->add_option("--dev", ta.dev_path, "development dataset file")->required();
    train->add_option("--embeddings", ta.embeddings_path, "GloVe-format word vectors");
    train->add_option("--epochs", ta.epochs, "training epochs");
    train->add_option("--lr", ta.lr, "Adam learning rate");
    train->add_option("--batch", ta.batch, "mini-batch size");
    train->add_option("--seed", ta.seed, "RNG seed")->required();
    train->add_option("--out", ta.out_path, "output model file")->required();
    train->add_option("--profile", ta.profile, "dimension profile")
        ->check(CLI::IsMember({"paper", "toy"}));

    std::string model_path, data_path, pred_path, gold_path, out_path, format = "ansi";
    bool per_m = false, with_gold = false;

    auto* predict = app.add_subcommand("predict", "score a dataset with a trained model");
    predict->add_option("--model", model_path, "model file")->required();
    predict->add_option("--data", data_path, "dataset file")->required();
    predict->add_option("--out", out_path, "output prediction file")->required();

    auto* eval = app.add_subcommand("eval", "compute Match_m against gold");
    eval->add_option("--gold", gold_path, "gold dataset or prediction file")->required();
    eval->add_option("--pred", pred_path, "prediction file")->required();
    eval->add_flag("--per-m", per_m, "machine-readable key=value output");

    std::vector<std::string> ens_inputs;
    auto* ensemble = app.add_subcommand("ensemble", "average prediction files");
    ensemble->add_option("--out", out_path, "output prediction file")->required();
    ensemble->add_option("inputs", ens_inputs, "input prediction files")->required();

    auto* heatmap = app.add_subcommand("heatmap", "render per-token scores");
    heatmap->add_option("--data", data_path, "dataset file")->required();
    heatmap->add_option("--pred", pred_path, "prediction file")->required();
    heatmap->add_flag("--gold", with_gold, "also render ground truth rows");
    heatmap->add_option("--format", format, "output format")
        ->check(CLI::IsMember({"ansi", "html"}));
    heatmap->add_option("--out", out_path, "output file")->required();

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 1;
    }

    const char* prec = std::getenv("EMPH_PRECISION");
    bool use64 = prec && std::string(prec) == "64";

    try {
        if (*train) {
            return use64 ? detail::run_train<double>(ta) : detail::run_train<float>(ta);
        }
        if (*predict) {
            return use64 ? detail::run_predict<double>(model_path, data_path, out_path)
                         : detail::run_predict<float>(model_path, data_path, out_path);
        }
        if (*eval) {
            auto gold = detail::load_gold_file(gold_path);
            auto pred = read_predictions(pred_path);
            auto rep = evaluate(gold, pred);
            char buf[160];
            if (per_m) {
                for (int m = 1; m <= 4; ++m)
                    std::cout << "match_" << m << "=" << rep.match.at(m) << "\n";
                std::cout << "mean=" << rep.mean << "\n";
            } else {
                std::snprintf(buf, sizeof(buf),
                              "Match_1\tMatch_2\tMatch_3\tMatch_4\tMean\n"
                              "%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n",
                              rep.match.at(1), rep.match.at(2), rep.match.at(3), rep.match.at(4),
                              rep.mean);
                std::cout << buf;
            }
            return 0;
        }
        if (*ensemble) {
            std::vector<PredictionSet> sets;
            for (const auto& p : ens_inputs) sets.push_back(read_predictions(p));
            write_predictions(ensemble_average(sets), out_path);
            return 0;
        }
        if (*heatmap) {
            auto data = parse_dataset(data_path);
            auto preds = read_predictions(pred_path);
            auto doc = heatmap_render(data, preds,
                                      format == "html" ? HeatmapFormat::html : HeatmapFormat::ansi,
                                      with_gold);
            std::ofstream out(out_path);
            if (!out) throw std::runtime_error("cannot open " + out_path);
            out << doc;
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

inline int dispatch(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(std::move(args));
}

}  // namespace emph::cli
