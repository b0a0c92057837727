#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>

#include "btf/dataset.hpp"

using namespace btf;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& contents) {
        path = std::string("btf_test_") + std::to_string(std::rand()) + ".txt";
        std::ofstream out(path);
        out << contents;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

Sentence sentence_of(std::initializer_list<const char*> words) {
    Sentence s;
    for (const char* w : words) s.tokens.emplace_back(w);
    return s;
}

}  // namespace

TEST_CASE("parse_line: single-token spans") {
    auto ex = parse_line("The food is great####[([1], [3], 'POS')]");
    CHECK(ex.sentence.tokens == std::vector<std::string>{"The", "food", "is", "great"});
    REQUIRE(ex.triplets.size() == 1);
    CHECK(ex.triplets[0].aspect == Span{1, 1});
    CHECK(ex.triplets[0].opinion == Span{3, 3});
    CHECK(ex.triplets[0].sentiment == Polarity::Positive);
}

TEST_CASE("parse_line: multi-token spans") {
    auto ex = parse_line("hot dogs are top notch####[([0,1], [3,4], 'POS')]");
    REQUIRE(ex.triplets.size() == 1);
    CHECK(ex.triplets[0].aspect == Span{0, 1});
    CHECK(ex.triplets[0].opinion == Span{3, 4});
}

TEST_CASE("parse_line: error cases carry the line number") {
    CHECK_THROWS_AS(parse_line("a b####[([0], [1], 'BAD')]", 7), DataError);
    try {
        parse_line("a b####[([0], [1], 'BAD')]", 7);
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("line 7") != std::string::npos);
        CHECK(msg.find("BAD") != std::string::npos);
    }

    // malformed separator
    CHECK_THROWS_AS(parse_line("no separator here"), DataError);
    // non-contiguous index list
    CHECK_THROWS_AS(parse_line("a b c####[([0,2], [1], 'POS')]"), DataError);
    // descending list
    CHECK_THROWS_AS(parse_line("a b c####[([1,0], [2], 'POS')]"), DataError);
    // out-of-range index
    CHECK_THROWS_AS(parse_line("a b####[([0], [5], 'POS')]"), DataError);
    // empty token side
    CHECK_THROWS_AS(parse_line("####[([0], [1], 'POS')]"), DataError);
    // trailing junk
    CHECK_THROWS_AS(parse_line("a b####[([0], [1], 'POS')] x"), DataError);
}

TEST_CASE("parse_line: multiple triplets and empty list") {
    auto ex = parse_line("x y z####[([0], [1], 'NEG'), ([2], [1], 'NEU')]");
    CHECK(ex.triplets.size() == 2);
    CHECK(ex.triplets[1].sentiment == Polarity::Neutral);

    auto empty = parse_line("x y####[]");
    CHECK(empty.triplets.empty());
}

TEST_CASE("build_vocab: frequency then lexicographic, reserved ids") {
    std::vector<Sentence> corpus{sentence_of({"a", "a", "b"})};
    auto vocab = build_vocab(corpus, 1);
    CHECK(vocab.size() == 5);  // pad, unk, cls, a, b
    CHECK(vocab.encode("a") == 3);
    CHECK(vocab.encode("b") == 4);
    CHECK(vocab.encode("A") == 3);  // lowercased
    CHECK(vocab.encode("zed") == Vocab::kUnk);

    auto strict = build_vocab(corpus, 2);
    CHECK(strict.encode("a") == 3);
    CHECK(strict.encode("b") == Vocab::kUnk);
}

TEST_CASE("build_vocab: order independent of corpus shuffling") {
    std::vector<Sentence> corpus;
    corpus.push_back(sentence_of({"the", "food", "was", "great"}));
    corpus.push_back(sentence_of({"great", "food", "indeed"}));
    corpus.push_back(sentence_of({"the", "the", "service"}));

    auto base = build_vocab(corpus, 1);
    std::mt19937 rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        std::shuffle(corpus.begin(), corpus.end(), rng);
        auto again = build_vocab(corpus, 1);
        REQUIRE(again.size() == base.size());
        for (int id = 0; id < base.size(); ++id) CHECK(again.token(id) == base.token(id));
    }
}

TEST_CASE("load_split: examples, ids, and recounted stats") {
    TempFile file(
        "The food is great####[([1], [3], 'POS')]\n"
        "service was bad####[([0], [2], 'NEG')]\n"
        "okay okay decor####[([2], [0], 'NEU'), ([2], [1], 'NEU')]\n");
    std::vector<Sentence> for_vocab;
    {
        auto [raw, _] = parse_file(file.path);
        for (auto& ex : raw) for_vocab.push_back(ex.sentence);
    }
    auto vocab = build_vocab(for_vocab, 1);
    auto [examples, stats] = load_split(file.path, vocab);

    CHECK(stats.sentence_count == 3);
    CHECK(stats.pos_count == 1);
    CHECK(stats.neg_count == 1);
    CHECK(stats.neu_count == 2);

    // stats equal a recount over parsed triplets
    CorpusStats recount;
    for (const auto& ex : examples) {
        ++recount.sentence_count;
        for (const auto& t : ex.triplets) {
            if (t.sentiment == Polarity::Positive) ++recount.pos_count;
            if (t.sentiment == Polarity::Neutral) ++recount.neu_count;
            if (t.sentiment == Polarity::Negative) ++recount.neg_count;
        }
    }
    CHECK(stats == recount);

    for (const auto& ex : examples) {
        REQUIRE(ex.sentence.ids.size() == ex.sentence.tokens.size());
        for (int id : ex.sentence.ids) {
            CHECK(id >= 0);
            CHECK(id < vocab.size());
        }
    }
}

TEST_CASE("load_split: empty file gives zero stats, missing file throws") {
    TempFile file("");
    auto [examples, stats] = load_split(file.path, Vocab{});
    CHECK(examples.empty());
    CHECK(stats == CorpusStats{});

    CHECK_THROWS_AS(load_split("definitely_not_here.txt", Vocab{}), DataError);
}

TEST_CASE("load_split: parse errors carry file and line context") {
    TempFile file(
        "a b####[([0], [1], 'POS')]\n"
        "broken line without separator\n");
    try {
        load_split(file.path, Vocab{});
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find(file.path) != std::string::npos);
        CHECK(msg.find("line 2") != std::string::npos);
    }
}

TEST_CASE("load_split: over-long sentences rejected") {
    std::string line;
    for (int i = 0; i < 101; ++i) line += "w ";
    line += "####[]";
    TempFile file(line + "\n");
    CHECK_THROWS_AS(load_split(file.path, Vocab{}, 100), DataError);
}

TEST_CASE("serialize_example round-trips through parse_line") {
    std::mt19937 rng(13);
    std::uniform_int_distribution<int> len_dist(2, 9);
    std::uniform_int_distribution<int> pol_dist(0, 2);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = len_dist(rng);
        std::vector<std::string> tokens;
        for (int i = 0; i < n; ++i) tokens.push_back("w" + std::to_string(i));
        std::uniform_int_distribution<int> pos(0, n - 1);
        std::vector<Triplet> triplets;
        const int n_trip = trial % 3;
        for (int k = 0; k < n_trip; ++k) {
            Triplet t;
            int a = pos(rng), a2 = pos(rng);
            int o = pos(rng), o2 = pos(rng);
            t.aspect = Span{std::min(a, a2), std::max(a, a2)};
            t.opinion = Span{std::min(o, o2), std::max(o, o2)};
            t.sentiment = static_cast<Polarity>(pol_dist(rng));
            triplets.push_back(t);
        }
        const std::string line = serialize_example(tokens, triplets);
        auto back = parse_line(line);
        CHECK(back.sentence.tokens == tokens);
        CHECK(back.triplets == triplets);
    }
}

TEST_CASE("format_stats_table is aligned and complete") {
    auto text = format_stats_table({{"train", {1266, 1692, 166, 480}}});
    CHECK(text.find("1266") != std::string::npos);
    CHECK(text.find("1692") != std::string::npos);
    CHECK(text.find("sentences") != std::string::npos);
}
