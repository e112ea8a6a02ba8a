#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gfus/model.hpp"

namespace gfus {

enum class DecodeStrategy { greedy, sample };

std::string to_string(DecodeStrategy s);
DecodeStrategy decode_strategy_from_string(const std::string& s);

struct DecodeConfig {
    DecodeStrategy strategy = DecodeStrategy::greedy;
    double temperature = 1.0; // sample only
    int top_k = 0;            // sample only; 0 = disabled
    int max_len = 64;         // generated tokens, terminal <eos> included
    std::uint64_t seed = 42;

    void validate() const;
};

/// Argmax decoding from <bos>; ties break toward the lowest token id.
/// Output excludes <bos>, never contains <pad>, and ends with <eos> when the
/// model stopped on its own.
std::vector<int> greedy_decode(const std::vector<int>& source_ids, const Checkpoint& ckpt,
                               int max_len);

std::vector<int> sample_decode(const std::vector<int>& source_ids, const Checkpoint& ckpt,
                               const DecodeConfig& config);

std::vector<int> decode(const std::vector<int>& source_ids, const Checkpoint& ckpt,
                        const DecodeConfig& config);

/// Drops the terminal <eos> (and any reserved ids) for text output.
std::vector<int> strip_special_ids(const std::vector<int>& ids);

} // namespace gfus
