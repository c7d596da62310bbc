#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "emph/cli.hpp"

using namespace emph;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream(path) << content;
}

struct CaptureStreams {
    std::ostringstream out, err;
    std::streambuf *old_out, *old_err;
    CaptureStreams() : old_out(std::cout.rdbuf(out.rdbuf())), old_err(std::cerr.rdbuf(err.rdbuf())) {}
    ~CaptureStreams() {
        std::cout.rdbuf(old_out);
        std::cerr.rdbuf(old_err);
    }
};

const char* kDataset =
    "# id=a\n"
    "0\tSeize\tVERB\t1|1|1|1|1|1|1|1|1\n"
    "1\tthe\tDET\t0|0|0|0|0|0|0|0|0\n"
    "2\tday\tNOUN\t0|1|0|0|1|0|0|0|0\n"
    "\n"
    "# id=b\n"
    "0\tNever\tADV\t1|0|1|1|0|1|1|0|1\n"
    "1\tsettle\tVERB\t0|0|1|0|0|0|0|0|0\n";

std::string dataset_path() {
    std::string p = "/tmp/emph_cli_data.tsv";
    write_file(p, kDataset);
    return p;
}

}  // namespace

TEST_CASE("eval subcommand self-evaluates gold at exactly 1") {
    auto data = dataset_path();
    write_predictions(gold_as_predictions(parse_dataset(data)), "/tmp/emph_cli_gold.tsv");
    CaptureStreams cap;
    int rc = cli::dispatch({"eval", "--gold", data, "--pred", "/tmp/emph_cli_gold.tsv"});
    REQUIRE(rc == 0);
    auto s = cap.out.str();
    CHECK(s.find("Match_1\tMatch_2\tMatch_3\tMatch_4\tMean") != std::string::npos);
    CHECK(s.find("1.000000\t1.000000\t1.000000\t1.000000\t1.000000") != std::string::npos);
}

TEST_CASE("eval accepts a prediction file as gold and --per-m output") {
    auto data = dataset_path();
    write_predictions(gold_as_predictions(parse_dataset(data)), "/tmp/emph_cli_gold.tsv");
    CaptureStreams cap;
    int rc = cli::dispatch({"eval", "--gold", "/tmp/emph_cli_gold.tsv", "--pred",
                            "/tmp/emph_cli_gold.tsv", "--per-m"});
    REQUIRE(rc == 0);
    CHECK(cap.out.str().find("match_1=1") != std::string::npos);
    CHECK(cap.out.str().find("mean=1") != std::string::npos);
}

TEST_CASE("usage errors exit 1") {
    CaptureStreams cap;
    CHECK(cli::dispatch({"train", "--arch", "bilstm"}) == 1);
    CHECK(cli::dispatch({"nonsense"}) == 1);
    CHECK(cli::dispatch({}) == 1);
    CHECK(cli::dispatch({"train", "--arch", "cnn", "--train", "x", "--dev", "y", "--seed", "1",
                         "--out", "z"}) == 1);
}

TEST_CASE("data errors exit 2 with a message") {
    CaptureStreams cap;
    int rc = cli::dispatch({"eval", "--gold", "/tmp/emph_no_such_file.tsv", "--pred",
                            "/tmp/emph_no_such_file.tsv"});
    CHECK(rc == 2);
    CHECK(cap.err.str().rfind("error:", 0) == 0);
}

TEST_CASE("ensemble subcommand") {
    write_file("/tmp/emph_ens_a.tsv", "id\ttoken\tscore\nx\t0\t0.200000\nx\t1\t0.800000\n");
    write_file("/tmp/emph_ens_b.tsv", "id\ttoken\tscore\nx\t0\t0.400000\nx\t1\t0.800000\n");
    SECTION("averaging a file with itself reproduces it") {
        CaptureStreams cap;
        int rc = cli::dispatch({"ensemble", "--out", "/tmp/emph_ens_out.tsv",
                                "/tmp/emph_ens_a.tsv", "/tmp/emph_ens_a.tsv"});
        REQUIRE(rc == 0);
        CHECK(slurp("/tmp/emph_ens_out.tsv") == slurp("/tmp/emph_ens_a.tsv"));
    }
    SECTION("two files average per token") {
        CaptureStreams cap;
        int rc = cli::dispatch({"ensemble", "--out", "/tmp/emph_ens_out.tsv",
                                "/tmp/emph_ens_a.tsv", "/tmp/emph_ens_b.tsv"});
        REQUIRE(rc == 0);
        auto s = slurp("/tmp/emph_ens_out.tsv");
        CHECK(s.find("x\t0\t0.300000") != std::string::npos);
        CHECK(s.find("x\t1\t0.800000") != std::string::npos);
    }
    SECTION("misaligned inputs exit 2") {
        write_file("/tmp/emph_ens_c.tsv", "id\ttoken\tscore\ny\t0\t0.500000\n");
        CaptureStreams cap;
        CHECK(cli::dispatch({"ensemble", "--out", "/tmp/emph_ens_out.tsv", "/tmp/emph_ens_a.tsv",
                             "/tmp/emph_ens_c.tsv"}) == 2);
    }
}

TEST_CASE("heatmap rendering") {
    auto data = dataset_path();
    write_file("/tmp/emph_hm_pred.tsv",
               "id\ttoken\tscore\n"
               "a\t0\t0.950000\na\t1\t0.000000\na\t2\t0.300000\n"
               "b\t0\t0.700000\nb\t1\t0.100000\n");
    SECTION("ansi: zero scores stay unstyled, high scores get a background") {
        CaptureStreams cap;
        int rc = cli::dispatch({"heatmap", "--data", data, "--pred", "/tmp/emph_hm_pred.tsv",
                                "--format", "ansi", "--out", "/tmp/emph_hm.ansi"});
        REQUIRE(rc == 0);
        auto s = slurp("/tmp/emph_hm.ansi");
        CHECK(s.find("\033[48;5;210mSeize\033[0m") != std::string::npos);
        CHECK(s.find("\033[48;5;88mday") != std::string::npos);  // 0.3 -> level 2
        CHECK(s.find("the") != std::string::npos);
        CHECK(s.find("m" "the" "\033") == std::string::npos);  // no styling around "the"
    }
    SECTION("html is escaped and well formed") {
        std::string tricky =
            "# id=h\n"
            "0\t<b>\tX\t1|1|1|1|1|1|1|1|1\n"
            "1\tA&B\tX\t0|0|0|0|0|0|0|0|0\n";
        write_file("/tmp/emph_hm_data2.tsv", tricky);
        write_file("/tmp/emph_hm_pred2.tsv", "id\ttoken\tscore\nh\t0\t0.900000\nh\t1\t0.000000\n");
        CaptureStreams cap;
        int rc = cli::dispatch({"heatmap", "--data", "/tmp/emph_hm_data2.tsv", "--pred",
                                "/tmp/emph_hm_pred2.tsv", "--format", "html", "--gold", "--out",
                                "/tmp/emph_hm.html"});
        REQUIRE(rc == 0);
        auto s = slurp("/tmp/emph_hm.html");
        CHECK(s.rfind("<!DOCTYPE html>", 0) == 0);
        CHECK(s.find("&lt;b&gt;") != std::string::npos);
        CHECK(s.find("A&amp;B") != std::string::npos);
        CHECK(s.find("<b>pred</b>") != std::string::npos);
        CHECK(s.find("<b>gold</b>") != std::string::npos);
        CHECK(s.find("</body></html>") != std::string::npos);
        // raw surface must never appear unescaped inside a span
        CHECK(s.find("<span style=\"background-color: rgba(255,64,0,0.9)\"><b></span>") ==
              std::string::npos);
    }
    SECTION("prediction/dataset mismatch exits 2") {
        write_file("/tmp/emph_hm_bad.tsv", "id\ttoken\tscore\na\t0\t0.500000\n");
        CaptureStreams cap;
        CHECK(cli::dispatch({"heatmap", "--data", data, "--pred", "/tmp/emph_hm_bad.tsv",
                             "--out", "/tmp/emph_hm2.ansi"}) == 2);
    }
}

TEST_CASE("train, predict, eval round trip through the CLI") {
    auto data = dataset_path();
    auto run_train = [&](const std::string& arch, const std::string& out) {
        CaptureStreams cap;
        int rc = cli::dispatch({"train", "--arch", arch, "--train", data, "--dev", data,
                                "--seed", "7", "--epochs", "2", "--batch", "4", "--profile",
                                "toy", "--out", out});
        REQUIRE(rc == 0);
        CHECK(cap.out.str().find("best_epoch=") != std::string::npos);
    };

    SECTION("bilstm") {
        run_train("bilstm", "/tmp/emph_cli_seq.bin");
        CHECK(slurp("/tmp/emph_cli_seq.bin.log").find("epoch\ttrain_bce") == 0);
        CaptureStreams cap;
        REQUIRE(cli::dispatch({"predict", "--model", "/tmp/emph_cli_seq.bin", "--data", data,
                               "--out", "/tmp/emph_cli_seq_pred.tsv"}) == 0);
        REQUIRE(cli::dispatch({"eval", "--gold", data, "--pred",
                               "/tmp/emph_cli_seq_pred.tsv"}) == 0);
        CHECK(cap.out.str().find("Mean") != std::string::npos);

        SECTION("the same seed reproduces model and prediction files byte for byte") {
            auto model1 = slurp("/tmp/emph_cli_seq.bin");
            auto pred1 = slurp("/tmp/emph_cli_seq_pred.tsv");
            run_train("bilstm", "/tmp/emph_cli_seq2.bin");
            CaptureStreams cap2;
            REQUIRE(cli::dispatch({"predict", "--model", "/tmp/emph_cli_seq2.bin", "--data",
                                   data, "--out", "/tmp/emph_cli_seq_pred2.tsv"}) == 0);
            CHECK(slurp("/tmp/emph_cli_seq2.bin") == model1);
            CHECK(slurp("/tmp/emph_cli_seq_pred2.tsv") == pred1);
        }
    }
    SECTION("transformer") {
        run_train("transformer", "/tmp/emph_cli_x.bin");
        CaptureStreams cap;
        REQUIRE(cli::dispatch({"predict", "--model", "/tmp/emph_cli_x.bin", "--data", data,
                               "--out", "/tmp/emph_cli_x_pred.tsv"}) == 0);
        auto preds = read_predictions("/tmp/emph_cli_x_pred.tsv");
        REQUIRE(preds.count("a"));
        CHECK(preds["a"].size() == 3);
    }
}

TEST_CASE("EMPH_PRECISION=64 switches to double precision") {
    auto data = dataset_path();
    {
        CaptureStreams cap;
        REQUIRE(cli::dispatch({"train", "--arch", "bilstm", "--train", data, "--dev", data,
                               "--seed", "3", "--epochs", "1", "--profile", "toy", "--out",
                               "/tmp/emph_cli_p32.bin"}) == 0);
    }
    setenv("EMPH_PRECISION", "64", 1);
    CaptureStreams cap;
    int rc = cli::dispatch({"predict", "--model", "/tmp/emph_cli_p32.bin", "--data", data,
                            "--out", "/tmp/emph_cli_p64_pred.tsv"});
    unsetenv("EMPH_PRECISION");
    REQUIRE(rc == 0);
    auto preds = read_predictions("/tmp/emph_cli_p64_pred.tsv");
    CHECK(preds.count("a"));
}
