#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "gfus/corpus.hpp"
#include "gfus/rng.hpp"

using namespace gfus;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& contents) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path, std::ios::binary);
    out << contents;
    return path;
}

std::vector<int> ids(std::initializer_list<int> list) {
    return std::vector<int>(list);
}

} // namespace

TEST_CASE("normalize lowercases, strips specials, collapses whitespace") {
    CHECK(normalize("Hello, World!") == "hello world");
    CHECK(normalize("  A  B ") == "a b");
    CHECK(normalize("") == "");
    CHECK(normalize("Don't stop") == "don t stop");
    CHECK(normalize("x") == "x");
}

TEST_CASE("normalize is idempotent") {
    Rng rng(7);
    const std::string charset = "aA zZ09!?.,\t<>#-'";
    for (int trial = 0; trial < 50; ++trial) {
        std::string s;
        const std::size_t len = rng.below(40);
        for (std::size_t i = 0; i < len; ++i) {
            s.push_back(charset[rng.below(charset.size())]);
        }
        CHECK(normalize(normalize(s)) == normalize(s));
    }
}

TEST_CASE("tokenize splits normalized text on spaces") {
    CHECK(tokenize("the cat sat") == std::vector<std::string>{"the", "cat", "sat"});
    CHECK(tokenize("Don't stop") == std::vector<std::string>{"don", "t", "stop"});
    CHECK(tokenize("x") == std::vector<std::string>{"x"});
    CHECK(tokenize("").empty());
}

TEST_CASE("build_vocab ranks by frequency then token") {
    const Vocabulary v = build_vocab({"a a b"}, 1, 100);
    CHECK(v.size() == 6);
    CHECK(v.token_of(0) == "<pad>");
    CHECK(v.token_of(1) == "<bos>");
    CHECK(v.token_of(2) == "<eos>");
    CHECK(v.token_of(3) == "<unk>");
    CHECK(v.id_of("a") == 4);
    CHECK(v.id_of("b") == 5);

    const Vocabulary min2 = build_vocab({"a a b"}, 2, 100);
    CHECK(min2.size() == 5);
    CHECK(min2.id_of("a") == 4);
    CHECK(min2.id_of("b") == kUnkId);

    // Equal counts break ties lexicographically.
    const Vocabulary ties = build_vocab({"b a", "a b"}, 1, 100);
    CHECK(ties.id_of("a") == 4);
    CHECK(ties.id_of("b") == 5);

    CHECK_THROWS_AS(build_vocab({"a"}, 1, 4), ConfigError);
}

TEST_CASE("build_vocab truncates to max_size and is deterministic") {
    const std::vector<std::string> texts{"e e e d d c c b a", "a b c"};
    const Vocabulary v = build_vocab(texts, 1, 7);
    CHECK(v.size() == 7);
    CHECK(v.contains("e"));
    CHECK(v.contains("c"));

    const Vocabulary again = build_vocab(texts, 1, 7);
    CHECK(v.tokens() == again.tokens());
}

TEST_CASE("encode and decode") {
    const Vocabulary v = build_vocab({"a a b"}, 1, 100);
    CHECK(encode({"a", "b"}, v) == ids({4, 5}));
    CHECK(encode({"zzz"}, v) == ids({3}));
    CHECK(decode(ids({1, 4, 2}), v) == std::vector<std::string>{"a"});
    CHECK(decode(encode({"a", "b"}, v), v) == std::vector<std::string>{"a", "b"});
}

TEST_CASE("split_corpus follows the 8:1:1 rule exactly") {
    auto pairs_of = [](std::size_t n) {
        std::vector<ExamplePair> ps(n);
        for (std::size_t i = 0; i < n; ++i) {
            ps[i].source = {static_cast<int>(4 + i)};
            ps[i].target = {kBosId, static_cast<int>(4 + i), kEosId};
        }
        return ps;
    };

    const CorpusSplit big = split_corpus(pairs_of(1000), 42);
    CHECK(big.train.size() == 800);
    CHECK(big.validation.size() == 100);
    CHECK(big.test.size() == 100);

    const CorpusSplit small = split_corpus(pairs_of(10), 42);
    CHECK(small.train.size() == 8);
    CHECK(small.validation.size() == 1);
    CHECK(small.test.size() == 1);

    CHECK_THROWS_WITH_AS(split_corpus(pairs_of(9), 42), doctest::Contains("n >= 10"),
                         ConfigError);

    // Same seed, same assignment.
    const CorpusSplit again = split_corpus(pairs_of(1000), 42);
    for (std::size_t i = 0; i < big.train.size(); ++i) {
        CHECK(big.train[i].source == again.train[i].source);
    }
}

TEST_CASE("splits are disjoint and exhaustive for random n") {
    Rng rng(123);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 10 + rng.below(400);
        std::vector<ExamplePair> ps(n);
        for (std::size_t i = 0; i < n; ++i) {
            ps[i].source = {static_cast<int>(i + 4)};
            ps[i].target = {kBosId, kEosId};
        }
        const CorpusSplit split = split_corpus(ps, rng.next_u64());
        CHECK(split.train.size() == n * 8 / 10);
        CHECK(split.validation.size() == n / 10);
        CHECK(split.train.size() + split.validation.size() + split.test.size() == n);
        std::multiset<int> seen;
        for (const auto* part : {&split.train, &split.validation, &split.test}) {
            for (const ExamplePair& p : *part) {
                seen.insert(p.source[0]);
            }
        }
        CHECK(seen.size() == n);
        CHECK(*seen.rbegin() == static_cast<int>(n + 3)); // no duplicates, all present
    }
}

TEST_CASE("load_pairs paired-tsv") {
    const Vocabulary v = build_vocab({"a b c d"}, 1, 100);
    const auto path = temp_file("gfus_pairs.tsv", "a b\tc d\n");
    const LoadedPairs loaded = load_pairs(path.string(), PairMode::paired_tsv, 0.5, v);
    REQUIRE(loaded.pairs.size() == 1);
    CHECK(loaded.pairs[0].source == ids({4, 5}));
    CHECK(loaded.pairs[0].target == ids({kBosId, 6, 7, kEosId}));

    const auto bad = temp_file("gfus_bad.tsv", "a b c\n");
    CHECK_THROWS_WITH_AS(load_pairs(bad.string(), PairMode::paired_tsv, 0.5, v),
                         doctest::Contains("line 1"), DataError);

    CHECK_THROWS_AS(load_pairs("/nonexistent/gfus.tsv", PairMode::paired_tsv, 0.5, v),
                    DataError);
}

TEST_CASE("load_pairs auto-split") {
    const Vocabulary v = build_vocab({"w x y z"}, 1, 100);
    const auto path = temp_file("gfus_docs.txt", "w x y z\nq\n");
    const LoadedPairs loaded = load_pairs(path.string(), PairMode::auto_split, 0.5, v);
    REQUIRE(loaded.pairs.size() == 1);
    CHECK(loaded.skipped == 1); // "q" has fewer than 2 tokens
    CHECK(loaded.pairs[0].source == encode({"w", "x"}, v));
    CHECK(loaded.pairs[0].target[0] == kBosId);
    CHECK(loaded.pairs[0].target.back() == kEosId);
    CHECK(std::vector<int>(loaded.pairs[0].target.begin() + 1,
                           loaded.pairs[0].target.end() - 1) == encode({"y", "z"}, v));

    CHECK_THROWS_AS(load_pairs(path.string(), PairMode::auto_split, 0.0, v), ConfigError);
}

TEST_CASE("synth_reversal builds reversed targets deterministically") {
    const SynthData a = synth_reversal(20, 3, 8, 99);
    const SynthData b = synth_reversal(20, 3, 8, 99);
    REQUIRE(a.pairs.size() == 20);
    CHECK(a.vocab.size() == 12);
    CHECK(a.vocab.token_of(4) == "t0");
    CHECK(a.vocab.token_of(11) == "t7");
    for (std::size_t i = 0; i < a.pairs.size(); ++i) {
        const ExamplePair& p = a.pairs[i];
        REQUIRE(p.source.size() == 3);
        REQUIRE(p.target.size() == 5);
        CHECK(p.target.front() == kBosId);
        CHECK(p.target.back() == kEosId);
        for (std::size_t j = 0; j < p.source.size(); ++j) {
            CHECK(p.target[1 + j] == p.source[p.source.size() - 1 - j]);
        }
        CHECK(p.source == b.pairs[i].source);
    }

    const SynthData degenerate = synth_reversal(5, 4, 1, 1);
    for (const ExamplePair& p : degenerate.pairs) {
        for (int id : p.source) {
            CHECK(id == 4);
        }
    }
    CHECK_THROWS_AS(synth_reversal(5, 4, 0, 1), ConfigError);
}

TEST_CASE("vocabulary file round trip") {
    const Vocabulary v = build_vocab({"gamma beta alpha alpha"}, 1, 100);
    const auto path = std::filesystem::temp_directory_path() / "gfus_vocab.txt";
    save_vocab(v, path.string());
    const Vocabulary loaded = load_vocab(path.string());
    CHECK(loaded.tokens() == v.tokens());

    const auto bad = temp_file("gfus_vocab_bad.txt", "<pad>\n<bos>\nwrong\n<unk>\nx\n");
    CHECK_THROWS_AS(load_vocab(bad.string()), FormatError);
}
