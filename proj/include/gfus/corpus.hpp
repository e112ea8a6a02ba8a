#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "gfus/errors.hpp"

namespace gfus {

/// Token ids reserved in every vocabulary.
constexpr int kPadId = 0;
constexpr int kBosId = 1;
constexpr int kEosId = 2;
constexpr int kUnkId = 3;

/// Bijective token <-> id map. Ids are contiguous from 0 and the first four
/// are always <pad>, <bos>, <eos>, <unk>.
class Vocabulary {
public:
    Vocabulary();
    /// Appends the given tokens after the four reserved ones.
    static Vocabulary from_tokens(const std::vector<std::string>& tokens);

    int size() const { return static_cast<int>(tokens_.size()); }
    int id_of(const std::string& token) const; // kUnkId when missing
    bool contains(const std::string& token) const;
    const std::string& token_of(int id) const;
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    void append(const std::string& token);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

struct ExamplePair {
    std::vector<int> source; // X
    std::vector<int> target; // <bos> Y <eos>
};

struct CorpusSplit {
    std::vector<ExamplePair> train;
    std::vector<ExamplePair> validation;
    std::vector<ExamplePair> test;
};

/// Lowercases, maps anything that is not a letter/digit/whitespace to a
/// space, collapses whitespace runs, trims.
std::string normalize(const std::string& text);

std::vector<std::string> tokenize(const std::string& text);

Vocabulary build_vocab(const std::vector<std::string>& texts, int min_freq, int max_size);

std::vector<int> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab);

/// Inverse of encode for real tokens; reserved <pad>/<bos>/<eos> are dropped.
std::vector<std::string> decode(const std::vector<int>& ids, const Vocabulary& vocab);

/// Deterministic shuffled 8:1:1 split. Requires at least 10 examples.
CorpusSplit split_corpus(const std::vector<ExamplePair>& examples, std::uint64_t seed);

enum class PairMode { paired_tsv, auto_split };

struct LoadedPairs {
    std::vector<ExamplePair> pairs;
    int skipped = 0; // lines rejected for having too little usable text
};

LoadedPairs load_pairs(const std::string& path, PairMode mode, double prefix_fraction,
                       const Vocabulary& vocab);

struct SynthData {
    std::vector<ExamplePair> pairs;
    Vocabulary vocab; // reserved tokens plus t0..t{alphabet_size-1}
};

/// Random sources over a synthetic alphabet; each target is its source
/// reversed.
SynthData synth_reversal(int n_examples, int seq_len, int alphabet_size, std::uint64_t seed);

void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path);

} // namespace gfus
