#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include "emph/serialize.hpp"
#include "emph/train.hpp"

using namespace emph;
using Catch::Approx;

namespace {

SeqLabelerConfig toy_config() {
    SeqLabelerConfig cfg;
    cfg.char_emb_dim = 4;
    cfg.char_hidden = 4;
    cfg.encoder_hidden = 6;
    cfg.encoder_layers = 1;
    cfg.attn_proj_dim = 4;
    cfg.fc_hidden = 4;
    cfg.word_dim = 4;
    cfg.dropout_p = 0.1;
    return cfg;
}

// eight two-token sentences, the first token always emphasized
std::vector<Instance> toy_train_set() {
    std::vector<std::pair<const char*, const char*>> words = {
        {"win", "today"}, {"love", "more"},  {"dream", "again"}, {"rise", "up"},
        {"act", "now"},   {"stay", "kind"},  {"give", "back"},   {"move", "on"},
    };
    std::vector<Instance> out;
    int k = 0;
    for (auto [a, b] : words)
        out.push_back({"s" + std::to_string(k++),
                       {{a, "VERB", {}, 1.0}, {b, "ADV", {}, 0.0}}});
    return out;
}

SeqLabeler<float> toy_model(const std::vector<Instance>& corpus, std::uint64_t seed) {
    SeqLabeler<float> m;
    m.cfg = toy_config();
    m.vocab = build_vocab(corpus, 1);
    m.init(seed);
    return m;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("single epoch bookkeeping") {
    auto data = toy_train_set();
    auto m = toy_model(data, 1);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 1;
    auto log = train_model(m, data, data, cfg);
    REQUIRE(log.epochs.size() == 1);
    CHECK(log.best_epoch == 1);
    CHECK(log.best_dev_mean == Approx(log.epochs[0].dev.mean));
    CHECK(std::isfinite(log.epochs[0].train_bce));
}

TEST_CASE("toy corpus is overfit within a few hundred epochs") {
    auto data = toy_train_set();
    auto m = toy_model(data, 3);
    TrainConfig cfg;
    cfg.epochs = 500;
    cfg.lr = 0.01;
    cfg.seed = 3;
    cfg.stop_at_dev_mean = 1.0;
    auto log = train_model(m, data, data, cfg);
    CHECK(log.best_dev_mean == Approx(1.0));
    CHECK(log.epochs.size() < 500);

    SECTION("restored checkpoint reproduces the best dev score") {
        auto report = evaluate(gold_as_predictions(data), predict_set(m, data));
        CHECK(report.mean == Approx(log.best_dev_mean).margin(1e-6));
    }
}

TEST_CASE("training is deterministic for a fixed seed") {
    auto data = toy_train_set();
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 42;
    auto m1 = toy_model(data, 9);
    auto m2 = toy_model(data, 9);
    auto l1 = train_model(m1, data, data, cfg);
    auto l2 = train_model(m2, data, data, cfg);
    REQUIRE(l1.epochs.size() == l2.epochs.size());
    for (std::size_t i = 0; i < l1.epochs.size(); ++i) {
        CHECK(l1.epochs[i].train_bce == l2.epochs[i].train_bce);
        CHECK(l1.epochs[i].dev.mean == l2.epochs[i].dev.mean);
    }
    save_model("/tmp/emph_det_a.bin", m1);
    save_model("/tmp/emph_det_b.bin", m2);
    CHECK(slurp("/tmp/emph_det_a.bin") == slurp("/tmp/emph_det_b.bin"));
}

TEST_CASE("non-finite loss aborts with context") {
    auto data = toy_train_set();
    auto m = toy_model(data, 1);
    m.params["fc2_W"].values[0] = std::nanf("");
    TrainConfig cfg;
    cfg.epochs = 1;
    CHECK_THROWS_WITH(train_model(m, data, data, cfg),
                      Catch::Matchers::ContainsSubstring("epoch 1"));
}

TEST_CASE("invalid training configs are rejected") {
    auto data = toy_train_set();
    auto m = toy_model(data, 1);
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(train_model(m, data, data, cfg), std::invalid_argument);
    cfg.epochs = 1;
    cfg.lr = 0.0;
    CHECK_THROWS_AS(train_model(m, data, data, cfg), std::invalid_argument);
    cfg.lr = 0.001;
    CHECK_THROWS_AS(train_model(m, {}, data, cfg), std::invalid_argument);
}

TEST_CASE("predict_set is invariant to batch size") {
    auto data = toy_train_set();
    // mixed lengths exercise the padding path
    data.push_back({"long",
                    {{"keep", "VERB", {}, 0.0},
                     {"calm", "ADJ", {}, 0.0},
                     {"and", "CCONJ", {}, 0.0},
                     {"carry", "VERB", {}, 1.0},
                     {"on", "ADP", {}, 0.0}}});
    auto m = toy_model(data, 5);
    auto p1 = predict_set(m, data, 1);
    auto p16 = predict_set(m, data, 16);
    REQUIRE(p1.size() == p16.size());
    for (const auto& [id, v] : p1) {
        const auto& w = p16.at(id);
        REQUIRE(v.size() == w.size());
        for (std::size_t i = 0; i < v.size(); ++i)
            CHECK(v[i] == Approx(w[i]).margin(1e-6));
    }
}

TEST_CASE("write_train_log format") {
    TrainLog log;
    EpochStat e;
    e.train_bce = 0.5;
    for (int m = 1; m <= 4; ++m) e.dev.match[m] = 0.25 * m;
    e.dev.mean = 0.625;
    log.epochs.push_back(e);
    log.best_epoch = 1;
    log.best_dev_mean = 0.625;
    std::ostringstream os;
    write_train_log(log, os);
    auto s = os.str();
    CHECK(s.find("epoch\ttrain_bce") == 0);
    CHECK(s.find("1\t0.500000\t0.250000\t0.500000\t0.750000\t1.000000\t0.625000") !=
          std::string::npos);
    CHECK(s.find("best_epoch=1") != std::string::npos);
}

TEST_CASE("ensemble_average") {
    PredictionSet a{{"x", {0.2, 0.6}}, {"y", {1.0}}};
    PredictionSet b{{"x", {0.4, 0.2}}, {"y", {0.0}}};
    SECTION("averaging a set with itself is the identity") {
        auto out = ensemble_average({a, a, a});
        for (const auto& [id, v] : a)
            for (std::size_t i = 0; i < v.size(); ++i)
                CHECK(out.at(id)[i] == Approx(v[i]).margin(1e-15));
    }
    SECTION("plain arithmetic mean per token") {
        auto out = ensemble_average({a, b});
        CHECK(out["x"][0] == Approx(0.3));
        CHECK(out["x"][1] == Approx(0.4));
        CHECK(out["y"][0] == Approx(0.5));
    }
    SECTION("member order does not matter") {
        auto ab = ensemble_average({a, b});
        auto ba = ensemble_average({b, a});
        for (const auto& [id, v] : ab)
            for (std::size_t i = 0; i < v.size(); ++i)
                CHECK(v[i] == Approx(ba.at(id)[i]).margin(1e-15));
    }
    SECTION("misalignment errors name the culprit") {
        CHECK_THROWS_AS(ensemble_average({}), std::invalid_argument);
        PredictionSet c{{"z", {0.5}}};
        CHECK_THROWS_WITH(ensemble_average({a, c}),
                          Catch::Matchers::ContainsSubstring("mismatch"));
        PredictionSet d{{"x", {0.5}}, {"y", {0.5}}};
        CHECK_THROWS_WITH(ensemble_average({a, d}),
                          Catch::Matchers::ContainsSubstring("x"));
    }
}

TEST_CASE("seq model serialization round trip") {
    auto data = toy_train_set();
    auto m = toy_model(data, 21);
    Instance probe{"p", {{"win", "VERB", {}, 0.0}, {"novel", "ADJ", {}, 0.0}}};
    auto before = m.predict(probe);
    save_model("/tmp/emph_rt_seq.bin", m);
    auto raw = read_model_file("/tmp/emph_rt_seq.bin");
    CHECK(raw.tag == "seq_v1");
    auto loaded = load_seq_model<float>("/tmp/emph_rt_seq.bin", raw);
    CHECK(loaded.predict(probe) == before);
    CHECK(loaded.vocab.word("win") == m.vocab.word("win"));
}

TEST_CASE("transformer serialization round trip with vocab sidecar") {
    TransformerLabeler<float> m;
    m.cfg.layers = 2;
    m.cfg.heads = 2;
    m.cfg.d_model = 8;
    m.cfg.d_ff = 12;
    m.cfg.head_h1 = 6;
    m.cfg.head_h2 = 4;
    std::vector<Instance> corpus{{"c", {{"go", "X", {}, 1.0}, {"now", "X", {}, 0.0}}}};
    m.vocab = build_subword_vocab(corpus, 50);
    m.init(4);
    Instance probe{"p", {{"go", "X", {}, 0.0}, {"gone", "X", {}, 0.0}}};
    auto before = m.predict(probe);
    save_model("/tmp/emph_rt_x.bin", m);
    auto raw = read_model_file("/tmp/emph_rt_x.bin");
    CHECK(raw.tag == "xfmr_v1");
    auto loaded = load_transformer_model<float>("/tmp/emph_rt_x.bin", raw);
    CHECK(loaded.predict(probe) == before);
}

TEST_CASE("model file error handling") {
    SECTION("bad magic") {
        std::ofstream("/tmp/emph_bad.bin") << "NOPE!whatever";
        CHECK_THROWS_WITH(read_model_file("/tmp/emph_bad.bin"),
                          Catch::Matchers::ContainsSubstring("magic"));
    }
    SECTION("shape mismatch against config") {
        auto data = toy_train_set();
        auto m = toy_model(data, 21);
        save_model("/tmp/emph_shape.bin", m);
        auto raw = read_model_file("/tmp/emph_shape.bin");
        raw.params["fc2_W"] = Tensor<float>(7, 7);
        CHECK_THROWS_WITH(load_seq_model<float>("/tmp/emph_shape.bin", raw),
                          Catch::Matchers::ContainsSubstring("fc2_W"));
    }
}

TEST_CASE("run_ensemble trains one member per seed and averages") {
    auto data = toy_train_set();
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.lr = 0.01;
    auto factory = [&](std::uint64_t seed) { return toy_model(data, seed); };
    auto res = run_ensemble(factory, {1, 2, 3}, data, data, cfg);
    REQUIRE(res.member_preds.size() == 3);
    REQUIRE(res.member_reports.size() == 3);
    auto manual = ensemble_average(res.member_preds);
    CHECK(res.averaged == manual);
    CHECK(res.ensemble_report.mean >= 0.0);
    CHECK(res.ensemble_report.mean <= 1.0);
}
