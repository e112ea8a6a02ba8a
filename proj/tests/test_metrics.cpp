#include <cmath>
#include <map>
#include <sstream>

#include "bleu_oracle.hpp"
#include "doctest.h"
#include "gfus/metrics.hpp"
#include "gfus/rng.hpp"
#include "gfus/trainer.hpp"

using namespace gfus;
using gfus_test::bleu_oracle;

namespace {

ModelConfig metrics_config() {
    ModelConfig c;
    c.vocab_size = 10;
    c.d_model = 16;
    c.n_heads = 2;
    c.n_encoder_layers = 1;
    c.n_decoder_layers = 1;
    c.d_ff = 32;
    c.max_len = 8;
    c.dropout_rate = 0.0;
    c.fusion_mode = FusionMode::both;
    c.seed = 12;
    return c;
}

std::vector<ExamplePair> small_dataset(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<ExamplePair> pairs(static_cast<std::size_t>(n));
    for (auto& p : pairs) {
        const int len = 2 + static_cast<int>(rng.below(3));
        p.source.resize(static_cast<std::size_t>(len));
        for (int& id : p.source) {
            id = 4 + static_cast<int>(rng.below(6));
        }
        p.target.push_back(kBosId);
        for (int i = 0; i < len; ++i) {
            p.target.push_back(4 + static_cast<int>(rng.below(6)));
        }
        p.target.push_back(kEosId);
    }
    return pairs;
}

} // namespace

TEST_CASE("ngram_counts windows") {
    const auto uni = ngram_counts({4, 5, 4}, 1);
    CHECK(uni.at({4}) == 2);
    CHECK(uni.at({5}) == 1);
    CHECK(ngram_counts({4, 5}, 3).empty());
    const auto bi = ngram_counts({4, 4, 4}, 2);
    CHECK(bi.at({4, 4}) == 2);
}

TEST_CASE("bleu identity scores 1") {
    const std::vector<std::vector<int>> xs{{4, 5, 6, 7}, {8, 9}};
    const BleuBreakdown b = bleu_corpus(xs, xs);
    CHECK(b.score == 1.0);
    CHECK(b.brevity_penalty == 1.0);
}

TEST_CASE("bleu worked example: short candidate against longer reference") {
    // candidate "the cat sat" vs reference "the cat sat on the mat"
    const std::vector<std::vector<int>> cand{{10, 11, 12}};
    const std::vector<std::vector<int>> ref{{10, 11, 12, 13, 10, 14}};
    const BleuBreakdown b = bleu_corpus(cand, ref);
    CHECK(b.orders[0].matches == 3);
    CHECK(b.orders[0].total == 3);
    CHECK(b.orders[1].matches == 2);
    CHECK(b.orders[1].total == 2);
    CHECK(b.orders[2].matches == 1);
    CHECK(b.orders[2].total == 1);
    CHECK(b.orders[3].total == 0); // no candidate 4-grams; order excluded
    CHECK(b.brevity_penalty == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(b.score == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(std::fabs(b.score - 0.36788) < 5e-6);
}

TEST_CASE("bleu disjoint vocabularies score 0") {
    const BleuBreakdown b = bleu_corpus({{4, 5}}, {{6, 7}});
    CHECK(b.score == 0.0);
}

TEST_CASE("bleu degenerate and error cases") {
    CHECK_THROWS_AS(bleu_corpus({{4}}, {{4}, {5}}), InternalError);
    const BleuBreakdown empty = bleu_corpus({{}, {}}, {{4}, {5}});
    CHECK(empty.score == 0.0);
    CHECK(empty.brevity_penalty == 0.0);
}

TEST_CASE("bleu is invariant under permuting candidate/reference pairs") {
    Rng rng(7);
    std::vector<std::vector<int>> cands;
    std::vector<std::vector<int>> refs;
    for (int i = 0; i < 8; ++i) {
        std::vector<int> c(3 + rng.below(5));
        std::vector<int> r(3 + rng.below(5));
        for (int& v : c) {
            v = 4 + static_cast<int>(rng.below(5));
        }
        for (int& v : r) {
            v = 4 + static_cast<int>(rng.below(5));
        }
        cands.push_back(std::move(c));
        refs.push_back(std::move(r));
    }
    const double base = bleu_corpus(cands, refs).score;
    std::vector<std::size_t> order{7, 2, 5, 0, 3, 6, 1, 4};
    std::vector<std::vector<int>> cands_p;
    std::vector<std::vector<int>> refs_p;
    for (std::size_t i : order) {
        cands_p.push_back(cands[i]);
        refs_p.push_back(refs[i]);
    }
    CHECK(bleu_corpus(cands_p, refs_p).score == doctest::Approx(base).epsilon(1e-15));
}

TEST_CASE("bleu agrees with the brute-force oracle on 100 random corpora") {
    Rng rng(2024);
    for (int corpus = 0; corpus < 100; ++corpus) {
        const int pairs = 1 + static_cast<int>(rng.below(6));
        std::vector<std::vector<int>> cands;
        std::vector<std::vector<int>> refs;
        for (int i = 0; i < pairs; ++i) {
            std::vector<int> c(rng.below(13));
            std::vector<int> r(rng.below(13));
            for (int& v : c) {
                v = static_cast<int>(rng.below(5));
            }
            for (int& v : r) {
                v = static_cast<int>(rng.below(5));
            }
            cands.push_back(std::move(c));
            refs.push_back(std::move(r));
        }
        const double lib = bleu_corpus(cands, refs).score;
        const double oracle = bleu_oracle(cands, refs, 4);
        CHECK(std::fabs(lib - oracle) < 1e-12);
    }
}

TEST_CASE("uniform-logit perplexity equals the vocabulary size") {
    Checkpoint ckpt = init_parameters(metrics_config());
    for (double& v : ckpt.params.at("tok_emb").data) {
        v = 0.0;
    }
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const auto pairs = small_dataset(6, seed);
        CHECK(std::fabs(perplexity(ckpt, pairs) - 10.0) < 1e-9);
    }
}

TEST_CASE("perplexity is exp of the mean eval loss") {
    const Checkpoint ckpt = init_parameters(metrics_config());
    const auto pairs = small_dataset(8, 5);
    const double ppl = perplexity(ckpt, pairs);
    const double loss = eval_loss(ckpt, pairs);
    CHECK(std::fabs(ppl - std::exp(loss)) <= 1e-12 * ppl);
}

TEST_CASE("appending a pair with the same per-token NLL keeps perplexity") {
    const Checkpoint ckpt = init_parameters(metrics_config());
    auto pairs = small_dataset(1, 9);
    const double before = perplexity(ckpt, pairs);
    pairs.push_back(pairs[0]);
    const double after = perplexity(ckpt, pairs);
    CHECK(std::fabs(before - after) <= 1e-12 * before);
}

TEST_CASE("pinned confident logits drive perplexity to 1") {
    Tensor logits({3, 10});
    const std::vector<int> targets{4, 7, 2};
    for (int r = 0; r < 3; ++r) {
        logits.at(r, targets[static_cast<std::size_t>(r)]) = 1e4;
    }
    Graph g;
    const double loss = g.cross_entropy_mean(g.leaf(logits), targets, kPadId)->value.data[0];
    CHECK(std::exp(loss) <= 1.0 + 1e-6);
}

TEST_CASE("evaluate_variant runs teacher forcing plus decoding") {
    Checkpoint uniform = init_parameters(metrics_config());
    for (double& v : uniform.params.at("tok_emb").data) {
        v = 0.0;
    }
    const auto pairs = small_dataset(5, 21);
    DecodeConfig dc;
    dc.strategy = DecodeStrategy::greedy;
    dc.max_len = 8;
    const VariantEval a = evaluate_variant(uniform, pairs, dc);
    const VariantEval b = evaluate_variant(uniform, pairs, dc);
    CHECK(std::fabs(a.ppl - 10.0) < 1e-9);
    CHECK(a.bleu == 0.0); // zeroed model emits <eos> immediately, no overlap
    CHECK(a.ppl == b.ppl);
    CHECK(a.bleu == b.bleu);
}

TEST_CASE("report sorts by perplexity and renders Table-1 style output") {
    std::vector<EvalRow> rows;
    rows.push_back({"fused", 15.8, 29.612, "greedy", "dev", 42});
    rows.push_back({"decoder-only", 24.3, 18.249, "greedy", "dev", 42});
    rows.push_back({"ungated", 17.6, 27.3, "greedy", "dev", 42});
    const EvalReport report = make_report(rows);
    REQUIRE(report.rows.size() == 3);
    CHECK(report.rows[0].model == "fused");
    CHECK(report.rows[1].model == "ungated");
    CHECK(report.rows[2].model == "decoder-only");

    const std::string table = render_table(report);
    CHECK(table.find("Model") != std::string::npos);
    CHECK(table.find("Perplexity") != std::string::npos);
    CHECK(table.find("BLEU") != std::string::npos);
    CHECK(table.find("29.6") != std::string::npos);
    CHECK(table.find("15.8") != std::string::npos);
    // Lower perplexity listed first.
    CHECK(table.find("fused") < table.find("ungated"));

    std::ostringstream csv;
    write_report_csv(report, csv);
    const std::string text = csv.str();
    CHECK(text.rfind("model,perplexity,bleu,decode,dataset,seed\n", 0) == 0);
    // Perplexity keeps full precision in the CSV; BLEU is x100 at one decimal.
    CHECK(text.find("fused,15.8") != std::string::npos);
    CHECK(text.find(",29.6,greedy,dev,42") != std::string::npos);
}

TEST_CASE("single variant gives a single-row table") {
    const EvalReport report = make_report({{"only", 3.5, 50.0, "greedy", "dev", 1}});
    const std::string table = render_table(report);
    int lines = 0;
    for (char c : table) {
        lines += c == '\n' ? 1 : 0;
    }
    CHECK(lines == 2); // header + one row
}
