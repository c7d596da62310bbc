#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "emph/data.hpp"

using namespace emph;
using Catch::Approx;

namespace {

std::string write_tmp(const std::string& name, const std::string& content) {
    std::string path = "/tmp/emph_test_" + name;
    std::ofstream out(path);
    out << content;
    return path;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

const char* kSample =
    "# id=a1\n"
    "0\tMake\tVERB\t0|1|1|0|1|0|0|1|0\n"
    "1\tit\tPRON\t0|0|0|0|0|0|0|0|0\n"
    "2\tcount\tNOUN\t1|1|1|1|1|1|1|1|1\n"
    "\n"
    "# id=a2\n"
    "0\tDream\tNOUN\t0.500000\n"
    "1\tbig\tADJ\t0.000000\n";

}  // namespace

TEST_CASE("parse_dataset aggregates annotator flags") {
    auto path = write_tmp("ds1.tsv",
                          "# id=x\n"
                          "0\thello\tINTJ\t0|1|1|0|1|0|0|1|0\n"
                          "1\tworld\tNOUN\t0|0|0|0|0|0|0|0|0\n");
    auto insts = parse_dataset(path);
    REQUIRE(insts.size() == 1);
    REQUIRE(insts[0].tokens.size() == 2);
    CHECK(insts[0].tokens[0].gold_prob == Approx(4.0 / 9.0));
    CHECK(insts[0].tokens[1].gold_prob == 0.0);
    CHECK(insts[0].tokens[0].annotations.has_value());
}

TEST_CASE("parse_dataset pre-aggregated mode and pos fallback") {
    auto path = write_tmp("ds2.tsv",
                          "# id=x\n"
                          "0\tDream\t-\t0.75\n");
    auto insts = parse_dataset(path);
    CHECK(insts[0].tokens[0].gold_prob == Approx(0.75));
    CHECK(insts[0].tokens[0].pos == "X");
}

TEST_CASE("parse_dataset error paths name the line") {
    SECTION("wrong flag count") {
        auto path = write_tmp("ds3.tsv", "# id=x\n0\tw\tNOUN\t0|1|1|0|1|0|0|1\n");
        CHECK_THROWS_WITH(parse_dataset(path), Catch::Matchers::ContainsSubstring(":2"));
    }
    SECTION("duplicate id") {
        auto path = write_tmp("ds4.tsv",
                              "# id=x\n0\tw\tNOUN\t0.5\n\n# id=x\n0\tv\tNOUN\t0.5\n");
        CHECK_THROWS_WITH(parse_dataset(path), Catch::Matchers::ContainsSubstring("duplicate"));
    }
    SECTION("non-contiguous token index") {
        auto path = write_tmp("ds5.tsv", "# id=x\n0\tw\tNOUN\t0.5\n2\tv\tNOUN\t0.5\n");
        CHECK_THROWS_WITH(parse_dataset(path),
                          Catch::Matchers::ContainsSubstring("not contiguous"));
    }
    SECTION("bad flag value") {
        auto path = write_tmp("ds6.tsv", "# id=x\n0\tw\tNOUN\t0|1|2|0|1|0|0|1|0\n");
        CHECK_THROWS_AS(parse_dataset(path), std::runtime_error);
    }
}

TEST_CASE("dataset canonicalization is idempotent") {
    auto path = write_tmp("ds7.tsv", kSample);
    auto a = parse_dataset(path);
    auto out1 = "/tmp/emph_test_ds7_w1.tsv";
    write_dataset(a, out1);
    auto b = parse_dataset(out1);
    auto out2 = "/tmp/emph_test_ds7_w2.tsv";
    write_dataset(b, out2);
    CHECK(slurp(out1) == slurp(out2));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        REQUIRE(a[i].tokens.size() == b[i].tokens.size());
        for (std::size_t j = 0; j < a[i].tokens.size(); ++j) {
            CHECK(a[i].tokens[j].surface == b[i].tokens[j].surface);
            CHECK(a[i].tokens[j].gold_prob == Approx(b[i].tokens[j].gold_prob).margin(1e-9));
        }
    }
}

TEST_CASE("flipping k annotation flags moves the gold mass by k/9") {
    Instance inst{"x", {Token{"w", "NOUN", std::array<int, 9>{0, 0, 1, 0, 0, 0, 0, 0, 0}, 1.0 / 9}}};
    auto total = [](const Instance& i) {
        double s = 0;
        for (const auto& t : i.tokens) s += t.gold_prob;
        return s;
    };
    double before = total(inst);
    auto& a = *inst.tokens[0].annotations;
    int flipped = 0;
    for (int i = 0; i < 9 && flipped < 3; ++i)
        if (a[i] == 0) {
            a[i] = 1;
            ++flipped;
        }
    int ones = 0;
    for (int v : a) ones += v;
    inst.tokens[0].gold_prob = ones / 9.0;
    CHECK(total(inst) - before == Approx(3.0 / 9.0));
}

TEST_CASE("build_vocab thresholds and ordering") {
    auto path = write_tmp("v1.tsv",
                          "# id=x\n"
                          "0\ta\tX\t0.0\n"
                          "1\ta\tX\t0.0\n"
                          "2\tb\tX\t0.0\n");
    auto insts = parse_dataset(path);
    SECTION("threshold 2 drops singletons") {
        auto v = build_vocab(insts, 2);
        CHECK(v.word_count() == 3);  // <pad>, <unk>, "a"
        CHECK(v.word("a") == 2);
        CHECK(v.word("b") == Vocab::unk_index);
    }
    SECTION("threshold 1 keeps everything") {
        auto v = build_vocab(insts, 1);
        CHECK(v.word("a") == 2);
        CHECK(v.word("b") == 3);
        CHECK(v.word("zzz") == Vocab::unk_index);
    }
    SECTION("reproducible and dense") {
        auto v1 = build_vocab(insts, 1);
        auto v2 = build_vocab(insts, 1);
        CHECK(v1.index_to_word == v2.index_to_word);
        for (std::size_t i = 0; i < v1.word_count(); ++i)
            CHECK(v1.word(v1.index_to_word[i]) == i);
    }
    SECTION("empty corpus is an error") {
        CHECK_THROWS_AS(build_vocab({}, 1), std::invalid_argument);
    }
}

TEST_CASE("load_embeddings") {
    SECTION("basic read infers dimension") {
        auto path = write_tmp("e1.txt", "the 0.1 0.2\ncat 0.3 0.4\n");
        auto t = load_embeddings(path);
        CHECK(t.dim == 2);
        CHECK(t.vectors.size() == 2);
        CHECK(t.lookup("the")[1] == Approx(0.2));
    }
    SECTION("header line auto-detected") {
        auto path = write_tmp("e2.txt", "2 3\nthe 0.1 0.2 0.3\ncat 0.4 0.5 0.6\n");
        auto t = load_embeddings(path);
        CHECK(t.dim == 3);
        CHECK(t.vectors.size() == 2);
    }
    SECTION("oov vectors are deterministic and bounded") {
        auto path = write_tmp("e3.txt", "the 0.1 0.2\n");
        auto t = load_embeddings(path, 5);
        auto a = t.lookup("zebra");
        auto b = t.lookup("zebra");
        CHECK(a == b);
        for (double v : a) CHECK(std::fabs(v) <= 0.05);
    }
    SECTION("inconsistent dimension names the line") {
        auto path = write_tmp("e4.txt", "the 0.1 0.2\ncat 0.3 0.4 0.5\n");
        CHECK_THROWS_WITH(load_embeddings(path), Catch::Matchers::ContainsSubstring(":2"));
    }
}

TEST_CASE("prediction round trip at 6 decimals") {
    PredictionSet p{{"a1", {0.8104999, 0.25}}, {"a2", {1.0}}};
    auto path = "/tmp/emph_test_pred1.tsv";
    write_predictions(p, path);
    auto content = slurp(path);
    CHECK(content.find("0.810500") != std::string::npos);
    auto q = read_predictions(path);
    REQUIRE(q.size() == 2);
    CHECK(q["a1"][0] == Approx(0.810500).margin(5e-7));
    CHECK(q["a1"][1] == Approx(0.25).margin(5e-7));
    // second round trip is exact
    auto path2 = "/tmp/emph_test_pred2.tsv";
    write_predictions(q, path2);
    CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("read_predictions error paths") {
    SECTION("score out of range") {
        auto path = write_tmp("p1.tsv", "id\ttoken\tscore\na\t0\t1.5\n");
        CHECK_THROWS_AS(read_predictions(path), std::runtime_error);
    }
    SECTION("gap in token indices") {
        auto path = write_tmp("p2.tsv", "id\ttoken\tscore\na\t0\t0.5\na\t2\t0.5\n");
        CHECK_THROWS_WITH(read_predictions(path),
                          Catch::Matchers::ContainsSubstring("not contiguous"));
    }
}

TEST_CASE("utf8 split handles multibyte codepoints") {
    auto parts = utf8_split("héllo✨");
    REQUIRE(parts.size() == 6);
    CHECK(parts[1] == "é");
    CHECK(parts[5] == "✨");
}

TEST_CASE("pos tagset has 18 entries with X fallback") {
    CHECK(pos_tagset().size() == 18);
    CHECK(pos_index("NOUN") < 18);
    CHECK(pos_index("???") == pos_tagset().size() - 1);
}
