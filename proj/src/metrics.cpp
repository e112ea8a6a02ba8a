#include "gfus/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "gfus/trainer.hpp"

namespace gfus {

std::map<std::vector<int>, long> ngram_counts(const std::vector<int>& tokens, int n) {
    if (n < 1) {
        throw InternalError("ngram_counts: order must be at least 1");
    }
    std::map<std::vector<int>, long> counts;
    if (static_cast<int>(tokens.size()) < n) {
        return counts;
    }
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
        std::vector<int> gram(tokens.begin() + static_cast<long>(i),
                              tokens.begin() + static_cast<long>(i) + n);
        ++counts[gram];
    }
    return counts;
}

BleuBreakdown bleu_corpus(const std::vector<std::vector<int>>& candidates,
                          const std::vector<std::vector<int>>& references, int max_n) {
    if (candidates.size() != references.size()) {
        throw InternalError("bleu_corpus: " + std::to_string(candidates.size()) +
                            " candidates vs " + std::to_string(references.size()) +
                            " references");
    }
    if (max_n < 1) {
        throw InternalError("bleu_corpus: max_n must be at least 1");
    }
    BleuBreakdown b;
    b.orders.resize(static_cast<std::size_t>(max_n));
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        b.candidate_length += static_cast<long>(candidates[i].size());
        b.reference_length += static_cast<long>(references[i].size());
        for (int n = 1; n <= max_n; ++n) {
            const auto cand = ngram_counts(candidates[i], n);
            const auto ref = ngram_counts(references[i], n);
            auto& stats = b.orders[static_cast<std::size_t>(n - 1)];
            for (const auto& [gram, count] : cand) {
                auto it = ref.find(gram);
                const long clipped = it == ref.end() ? 0 : std::min(count, it->second);
                stats.matches += clipped;
                stats.total += count;
            }
        }
    }
    if (b.candidate_length == 0) {
        b.brevity_penalty = 0.0;
        b.score = 0.0;
        return b;
    }
    b.brevity_penalty =
        b.candidate_length > b.reference_length
            ? 1.0
            : std::exp(1.0 - static_cast<double>(b.reference_length) /
                                 static_cast<double>(b.candidate_length));
    double log_sum = 0.0;
    int included = 0;
    bool zero_precision = false;
    for (const auto& stats : b.orders) {
        if (stats.total == 0) {
            continue;
        }
        ++included;
        if (stats.matches == 0) {
            zero_precision = true;
        } else {
            log_sum += std::log(static_cast<double>(stats.matches) /
                                static_cast<double>(stats.total));
        }
    }
    b.score = (zero_precision || included == 0)
                  ? 0.0
                  : b.brevity_penalty * std::exp(log_sum / included);
    return b;
}

double perplexity(const Checkpoint& ckpt, const std::vector<ExamplePair>& pairs) {
    if (pairs.empty()) {
        throw InternalError("perplexity: empty pair list");
    }
    return std::exp(eval_loss(ckpt, pairs));
}

VariantEval evaluate_variant(const Checkpoint& ckpt, const std::vector<ExamplePair>& test_pairs,
                             const DecodeConfig& decode_cfg) {
    if (test_pairs.empty()) {
        throw InternalError("evaluate_variant: empty pair list");
    }
    VariantEval result;
    result.ppl = perplexity(ckpt, test_pairs);
    std::vector<std::vector<int>> candidates;
    std::vector<std::vector<int>> references;
    candidates.reserve(test_pairs.size());
    references.reserve(test_pairs.size());
    for (const ExamplePair& pair : test_pairs) {
        candidates.push_back(strip_special_ids(decode(pair.source, ckpt, decode_cfg)));
        references.push_back(strip_special_ids(pair.target));
    }
    result.bleu = bleu_corpus(candidates, references).score;
    return result;
}

EvalReport make_report(std::vector<EvalRow> rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const EvalRow& a, const EvalRow& b) {
        return a.perplexity < b.perplexity;
    });
    return EvalReport{std::move(rows)};
}

std::string render_table(const EvalReport& report) {
    std::size_t name_width = std::string("Model").size();
    for (const EvalRow& row : report.rows) {
        name_width = std::max(name_width, row.model.size());
    }
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %10s  %6s\n", static_cast<int>(name_width), "Model",
                  "Perplexity", "BLEU");
    os << buf;
    for (const EvalRow& row : report.rows) {
        std::snprintf(buf, sizeof buf, "%-*s  %10.1f  %6.1f\n", static_cast<int>(name_width),
                      row.model.c_str(), row.perplexity, row.bleu_x100);
        os << buf;
    }
    return os.str();
}

void write_report_csv(const EvalReport& report, std::ostream& out) {
    out << "model,perplexity,bleu,decode,dataset,seed\n";
    char buf[384];
    for (const EvalRow& row : report.rows) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.1f,%s,%s,%llu\n", row.model.c_str(),
                      row.perplexity, row.bleu_x100, row.decode.c_str(), row.dataset.c_str(),
                      static_cast<unsigned long long>(row.seed));
        out << buf;
    }
}

} // namespace gfus
