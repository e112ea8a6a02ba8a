#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "gfus/generator.hpp"
#include "gfus/model.hpp"

namespace gfus {

struct BleuBreakdown {
    struct OrderStats {
        long matches = 0;
        long total = 0;
    };
    std::vector<OrderStats> orders; // index 0 = unigrams
    double brevity_penalty = 0.0;
    long candidate_length = 0;
    long reference_length = 0;
    double score = 0.0; // in [0, 1]
};

std::map<std::vector<int>, long> ngram_counts(const std::vector<int>& tokens, int n);

/// Corpus BLEU with clipped modified precisions. Orders with zero candidate
/// n-grams are excluded from the geometric mean; a zero precision among the
/// included orders makes the score 0.
BleuBreakdown bleu_corpus(const std::vector<std::vector<int>>& candidates,
                          const std::vector<std::vector<int>>& references, int max_n = 4);

/// exp of the token-weighted mean NLL over pairs, eval mode.
double perplexity(const Checkpoint& ckpt, const std::vector<ExamplePair>& pairs);

struct VariantEval {
    double ppl = 0.0;
    double bleu = 0.0; // in [0, 1]
};

/// Teacher-forced perplexity on gold targets plus BLEU of decoded outputs
/// against gold (reserved tokens stripped from both sides).
VariantEval evaluate_variant(const Checkpoint& ckpt, const std::vector<ExamplePair>& test_pairs,
                             const DecodeConfig& decode_cfg);

struct EvalRow {
    std::string model;
    double perplexity = 0.0;
    double bleu_x100 = 0.0;
    std::string decode;
    std::string dataset;
    std::uint64_t seed = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows; // sorted by perplexity ascending
};

EvalReport make_report(std::vector<EvalRow> rows);
std::string render_table(const EvalReport& report);
void write_report_csv(const EvalReport& report, std::ostream& out);

} // namespace gfus
