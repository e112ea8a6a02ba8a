#include "gfus/generator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gfus/rng.hpp"

namespace gfus {

std::string to_string(DecodeStrategy s) {
    return s == DecodeStrategy::greedy ? "greedy" : "sample";
}

DecodeStrategy decode_strategy_from_string(const std::string& s) {
    if (s == "greedy") return DecodeStrategy::greedy;
    if (s == "sample") return DecodeStrategy::sample;
    throw ConfigError("unknown decode strategy: " + s + " (expected greedy|sample)");
}

void DecodeConfig::validate() const {
    if (strategy == DecodeStrategy::sample && temperature <= 0.0) {
        throw ConfigError("temperature must be positive, got " + std::to_string(temperature));
    }
    if (top_k < 0) {
        throw ConfigError("top_k must be non-negative");
    }
    if (max_len < 1) {
        throw ConfigError("decode max_len must be at least 1");
    }
}

namespace {

// Last-row logits for the current prefix. <pad> and <bos> are never emitted.
std::vector<double> next_logits(const std::vector<int>& prefix, const EncoderOutput& enc,
                                const Checkpoint& ckpt) {
    const DecodeResult r = decode_forward(prefix, enc, ckpt, false);
    const int vocab = r.logits.cols();
    const int last = r.logits.rows() - 1;
    std::vector<double> logits(static_cast<std::size_t>(vocab));
    for (int j = 0; j < vocab; ++j) {
        logits[static_cast<std::size_t>(j)] = r.logits.at(last, j);
    }
    logits[kPadId] = -std::numeric_limits<double>::infinity();
    logits[kBosId] = -std::numeric_limits<double>::infinity();
    return logits;
}

int argmax_lowest_tie(const std::vector<double>& logits) {
    int best = 0;
    for (int j = 1; j < static_cast<int>(logits.size()); ++j) {
        if (logits[static_cast<std::size_t>(j)] > logits[static_cast<std::size_t>(best)]) {
            best = j;
        }
    }
    return best;
}

int sample_token(const std::vector<double>& logits, const DecodeConfig& cfg, Rng& rng) {
    std::vector<int> candidates;
    candidates.reserve(logits.size());
    for (int j = 0; j < static_cast<int>(logits.size()); ++j) {
        if (std::isfinite(logits[static_cast<std::size_t>(j)])) {
            candidates.push_back(j);
        }
    }
    if (cfg.top_k > 0 && cfg.top_k < static_cast<int>(candidates.size())) {
        std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
            const double la = logits[static_cast<std::size_t>(a)];
            const double lb = logits[static_cast<std::size_t>(b)];
            if (la != lb) {
                return la > lb;
            }
            return a < b;
        });
        candidates.resize(static_cast<std::size_t>(cfg.top_k));
        std::sort(candidates.begin(), candidates.end());
    }
    double mx = logits[static_cast<std::size_t>(candidates[0])];
    for (int id : candidates) {
        mx = std::max(mx, logits[static_cast<std::size_t>(id)]);
    }
    std::vector<double> weights(candidates.size());
    double total = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        weights[i] = std::exp((logits[static_cast<std::size_t>(candidates[i])] - mx) /
                              cfg.temperature);
        total += weights[i];
    }
    const double draw = rng.uniform01() * total;
    double cum = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        cum += weights[i];
        if (draw < cum) {
            return candidates[i];
        }
    }
    return candidates.back();
}

std::vector<int> run_decode(const std::vector<int>& source_ids, const Checkpoint& ckpt,
                            const DecodeConfig& cfg, Rng* rng) {
    if (source_ids.empty()) {
        throw InternalError("decode: source must be non-empty");
    }
    const EncoderOutput enc = ckpt.config.uses_encoder()
                                  ? encode(source_ids, ckpt, false)
                                  : EncoderOutput{};
    std::vector<int> prefix{kBosId};
    std::vector<int> out;
    while (static_cast<int>(out.size()) < cfg.max_len &&
           static_cast<int>(prefix.size()) < ckpt.config.max_len) {
        const std::vector<double> logits = next_logits(prefix, enc, ckpt);
        const int token = cfg.strategy == DecodeStrategy::greedy || rng == nullptr
                              ? argmax_lowest_tie(logits)
                              : sample_token(logits, cfg, *rng);
        out.push_back(token);
        if (token == kEosId) {
            break;
        }
        prefix.push_back(token);
    }
    return out;
}

} // namespace

std::vector<int> greedy_decode(const std::vector<int>& source_ids, const Checkpoint& ckpt,
                               int max_len) {
    DecodeConfig cfg;
    cfg.strategy = DecodeStrategy::greedy;
    cfg.max_len = max_len;
    cfg.validate();
    return run_decode(source_ids, ckpt, cfg, nullptr);
}

std::vector<int> sample_decode(const std::vector<int>& source_ids, const Checkpoint& ckpt,
                               const DecodeConfig& config) {
    config.validate();
    Rng rng(config.seed);
    return run_decode(source_ids, ckpt, config, &rng);
}

std::vector<int> decode(const std::vector<int>& source_ids, const Checkpoint& ckpt,
                        const DecodeConfig& config) {
    config.validate();
    if (config.strategy == DecodeStrategy::greedy) {
        return run_decode(source_ids, ckpt, config, nullptr);
    }
    Rng rng(config.seed);
    return run_decode(source_ids, ckpt, config, &rng);
}

std::vector<int> strip_special_ids(const std::vector<int>& ids) {
    std::vector<int> out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id != kPadId && id != kBosId && id != kEosId) {
            out.push_back(id);
        }
    }
    return out;
}

} // namespace gfus
