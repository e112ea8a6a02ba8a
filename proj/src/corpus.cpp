#include "gfus/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "gfus/rng.hpp"

namespace gfus {

namespace {

const char* kReserved[4] = {"<pad>", "<bos>", "<eos>", "<unk>"};

bool is_ascii_alnum(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

} // namespace

Vocabulary::Vocabulary() {
    for (const char* t : kReserved) {
        append(t);
    }
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    for (const std::string& t : tokens) {
        if (v.index_.count(t) != 0) {
            throw ConfigError("duplicate vocabulary token: " + t);
        }
        v.append(t);
    }
    return v;
}

void Vocabulary::append(const std::string& token) {
    index_.emplace(token, static_cast<int>(tokens_.size()));
    tokens_.push_back(token);
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
    return index_.count(token) != 0;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || id >= size()) {
        throw InternalError("token id " + std::to_string(id) + " out of range [0, " +
                            std::to_string(size()) + ")");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::string normalize(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (is_ascii_alnum(c)) {
            if (pending_space && !out.empty()) {
                out.push_back(' ');
            }
            pending_space = false;
            out.push_back(static_cast<char>((c >= 'A' && c <= 'Z') ? c - 'A' + 'a' : c));
        } else {
            // Non-alphanumeric (including whitespace and any non-ASCII byte)
            // becomes at most one separating space.
            pending_space = true;
        }
    }
    return out;
}

std::vector<std::string> tokenize(const std::string& text) {
    const std::string norm = normalize(text);
    std::vector<std::string> tokens;
    std::istringstream is(norm);
    std::string tok;
    while (is >> tok) {
        tokens.push_back(tok);
    }
    return tokens;
}

Vocabulary build_vocab(const std::vector<std::string>& texts, int min_freq, int max_size) {
    if (max_size < 5) {
        throw ConfigError("vocabulary max_size must be at least 5, got " +
                          std::to_string(max_size));
    }
    std::map<std::string, long> freq;
    for (const std::string& text : texts) {
        for (const std::string& tok : tokenize(text)) {
            ++freq[tok];
        }
    }
    std::vector<std::pair<std::string, long>> ranked;
    ranked.reserve(freq.size());
    for (const auto& [tok, n] : freq) {
        if (n >= min_freq) {
            ranked.emplace_back(tok, n);
        }
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    const std::size_t keep = std::min(ranked.size(), static_cast<std::size_t>(max_size - 4));
    std::vector<std::string> tokens;
    tokens.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
        tokens.push_back(ranked[i].first);
    }
    return Vocabulary::from_tokens(tokens);
}

std::vector<int> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const std::string& t : tokens) {
        ids.push_back(vocab.id_of(t));
    }
    return ids;
}

std::vector<std::string> decode(const std::vector<int>& ids, const Vocabulary& vocab) {
    std::vector<std::string> tokens;
    tokens.reserve(ids.size());
    for (int id : ids) {
        if (id == kPadId || id == kBosId || id == kEosId) {
            continue;
        }
        tokens.push_back(vocab.token_of(id));
    }
    return tokens;
}

CorpusSplit split_corpus(const std::vector<ExamplePair>& examples, std::uint64_t seed) {
    const std::size_t n = examples.size();
    if (n < 10) {
        throw ConfigError("split requires n >= 10, got " + std::to_string(n));
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    Rng rng(seed);
    rng.shuffle(order);

    const std::size_t n_train = n * 8 / 10;
    const std::size_t n_val = n / 10;
    CorpusSplit split;
    split.train.reserve(n_train);
    split.validation.reserve(n_val);
    split.test.reserve(n - n_train - n_val);
    for (std::size_t i = 0; i < n; ++i) {
        const ExamplePair& ex = examples[order[i]];
        if (i < n_train) {
            split.train.push_back(ex);
        } else if (i < n_train + n_val) {
            split.validation.push_back(ex);
        } else {
            split.test.push_back(ex);
        }
    }
    return split;
}

namespace {

ExamplePair to_example(const std::vector<int>& source_ids, const std::vector<int>& target_ids) {
    ExamplePair p;
    p.source = source_ids;
    p.target.reserve(target_ids.size() + 2);
    p.target.push_back(kBosId);
    p.target.insert(p.target.end(), target_ids.begin(), target_ids.end());
    p.target.push_back(kEosId);
    return p;
}

} // namespace

LoadedPairs load_pairs(const std::string& path, PairMode mode, double prefix_fraction,
                       const Vocabulary& vocab) {
    if (mode == PairMode::auto_split && !(prefix_fraction > 0.0 && prefix_fraction < 1.0)) {
        throw ConfigError("prefix_fraction must be in (0, 1), got " +
                          std::to_string(prefix_fraction));
    }
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) {
        throw DataError("cannot open corpus file: " + path);
    }
    LoadedPairs out;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (mode == PairMode::paired_tsv) {
            const std::size_t tab = line.find('\t');
            if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
                throw DataError("parse error at line " + std::to_string(line_no) +
                                ": expected exactly one TAB in " + path);
            }
            const std::vector<int> src = encode(tokenize(line.substr(0, tab)), vocab);
            const std::vector<int> tgt = encode(tokenize(line.substr(tab + 1)), vocab);
            if (src.empty()) {
                ++out.skipped;
                continue;
            }
            out.pairs.push_back(to_example(src, tgt));
        } else {
            const std::vector<int> ids = encode(tokenize(line), vocab);
            if (ids.size() < 2) {
                ++out.skipped;
                continue;
            }
            const auto len = static_cast<double>(ids.size());
            auto cut = static_cast<std::size_t>(std::ceil(prefix_fraction * len));
            cut = std::min(std::max<std::size_t>(cut, 1), ids.size());
            const std::vector<int> src(ids.begin(), ids.begin() + static_cast<long>(cut));
            const std::vector<int> tgt(ids.begin() + static_cast<long>(cut), ids.end());
            out.pairs.push_back(to_example(src, tgt));
        }
    }
    return out;
}

SynthData synth_reversal(int n_examples, int seq_len, int alphabet_size, std::uint64_t seed) {
    if (alphabet_size < 1) {
        throw ConfigError("alphabet_size must be at least 1, got " +
                          std::to_string(alphabet_size));
    }
    if (n_examples < 0 || seq_len < 1) {
        throw ConfigError("synth_reversal requires n_examples >= 0 and seq_len >= 1");
    }
    std::vector<std::string> alpha;
    alpha.reserve(static_cast<std::size_t>(alphabet_size));
    for (int i = 0; i < alphabet_size; ++i) {
        alpha.push_back("t" + std::to_string(i));
    }
    SynthData out;
    out.vocab = Vocabulary::from_tokens(alpha);
    Rng rng(seed);
    out.pairs.reserve(static_cast<std::size_t>(n_examples));
    for (int e = 0; e < n_examples; ++e) {
        std::vector<int> src(static_cast<std::size_t>(seq_len));
        for (int& id : src) {
            id = 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(alphabet_size)));
        }
        std::vector<int> rev(src.rbegin(), src.rend());
        out.pairs.push_back(to_example(src, rev));
    }
    return out;
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out.is_open()) {
        throw DataError("cannot write vocabulary file: " + path);
    }
    for (const std::string& t : vocab.tokens()) {
        out << t << '\n';
    }
    if (!out.good()) {
        throw DataError("failed while writing vocabulary file: " + path);
    }
}

Vocabulary load_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) {
        throw DataError("cannot open vocabulary file: " + path);
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        lines.push_back(line);
    }
    if (lines.size() < 4) {
        throw FormatError("vocabulary file too short: " + path);
    }
    for (int i = 0; i < 4; ++i) {
        if (lines[static_cast<std::size_t>(i)] != kReserved[i]) {
            throw FormatError("vocabulary line " + std::to_string(i + 1) + " must be " +
                              kReserved[i] + " in " + path);
        }
    }
    return Vocabulary::from_tokens(
        std::vector<std::string>(lines.begin() + 4, lines.end()));
}

} // namespace gfus
