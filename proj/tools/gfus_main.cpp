// gfus - train, run, and evaluate the gated encoder/decoder fusion model.
//
// Subcommands: build-vocab, synth, train, generate, eval, gradcheck.
// Exit codes: 0 success, 1 validation/usage error, 2 data/format error,
// 3 internal invariant violation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gfus/checkpoint_io.hpp"
#include "gfus/corpus.hpp"
#include "gfus/generator.hpp"
#include "gfus/gradcheck.hpp"
#include "gfus/metrics.hpp"
#include "gfus/model.hpp"
#include "gfus/trainer.hpp"

namespace fs = std::filesystem;
using namespace gfus;

namespace {

// ---------------------------------------------------------------------------
// Flat key-value run configuration: file values, then --seed, then --set.
// ---------------------------------------------------------------------------

const std::map<std::string, std::string> kDefaultConfig = {
    {"model.d_model", "64"},
    {"model.n_heads", "4"},
    {"model.n_encoder_layers", "1"},
    {"model.n_decoder_layers", "1"},
    {"model.d_ff", "128"},
    {"model.max_len", "64"},
    {"model.dropout", "0.1"},
    {"model.fusion_mode", "both"},
    {"model.gate_granularity", "scalar"},
    {"model.seed", "42"},
    {"train.learning_rate", "0.0003"},
    {"train.beta1", "0.9"},
    {"train.beta2", "0.999"},
    {"train.adam_eps", "1e-8"},
    {"train.clip_norm", "1"},
    {"train.batch_size", "16"},
    {"train.epochs", "10"},
    {"train.seed", "42"},
    {"train.log_every", "0"},
    {"train.checkpoint_every", "0"},
    {"decode.strategy", "greedy"},
    {"decode.temperature", "1"},
    {"decode.top_k", "0"},
    {"decode.max_len", "64"},
    {"decode.seed", "42"},
    {"data.mode", "paired"},
    {"data.prefix_fraction", "0.5"},
    {"data.min_freq", "1"},
    {"data.max_vocab", "50000"},
    {"data.split_seed", "42"},
};

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) {
        return "";
    }
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

class RunConfig {
public:
    RunConfig() : values_(kDefaultConfig) {}

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in.is_open()) {
            throw ConfigError("cannot open config file: " + path);
        }
        std::string line;
        long line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string stripped = trim(line);
            if (stripped.empty() || stripped[0] == '#') {
                continue;
            }
            const auto eq = stripped.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("config line " + std::to_string(line_no) +
                                  " is not key = value: " + stripped);
            }
            set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
        }
    }

    void set(const std::string& key, const std::string& value) {
        if (values_.find(key) == values_.end()) {
            throw ConfigError("unknown config key: " + key);
        }
        values_[key] = value;
    }

    void apply_seed(std::uint64_t seed) {
        const std::string s = std::to_string(seed);
        for (const char* key : {"model.seed", "train.seed", "decode.seed", "data.split_seed"}) {
            values_[key] = s;
        }
    }

    void apply_overrides(const std::vector<std::string>& pairs) {
        for (const std::string& p : pairs) {
            const auto eq = p.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("--set expects key=value, got: " + p);
            }
            set(trim(p.substr(0, eq)), trim(p.substr(eq + 1)));
        }
    }

    const std::string& str(const std::string& key) const { return values_.at(key); }

    long integer(const std::string& key) const {
        try {
            std::size_t used = 0;
            const long v = std::stol(values_.at(key), &used);
            if (used != values_.at(key).size()) {
                throw std::invalid_argument("trailing");
            }
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + " needs an integer, got: " +
                              values_.at(key));
        }
    }

    double real(const std::string& key) const {
        try {
            std::size_t used = 0;
            const double v = std::stod(values_.at(key), &used);
            if (used != values_.at(key).size()) {
                throw std::invalid_argument("trailing");
            }
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + " needs a number, got: " + values_.at(key));
        }
    }

    std::uint64_t seed(const std::string& key) const {
        try {
            return std::stoull(values_.at(key));
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + " needs a seed, got: " + values_.at(key));
        }
    }

    ModelConfig model_config(int vocab_size) const {
        ModelConfig c;
        c.vocab_size = vocab_size;
        c.d_model = static_cast<int>(integer("model.d_model"));
        c.n_heads = static_cast<int>(integer("model.n_heads"));
        c.n_encoder_layers = static_cast<int>(integer("model.n_encoder_layers"));
        c.n_decoder_layers = static_cast<int>(integer("model.n_decoder_layers"));
        c.d_ff = static_cast<int>(integer("model.d_ff"));
        c.max_len = static_cast<int>(integer("model.max_len"));
        c.dropout_rate = real("model.dropout");
        c.fusion_mode = fusion_mode_from_string(str("model.fusion_mode"));
        c.gate_granularity = gate_granularity_from_string(str("model.gate_granularity"));
        c.seed = seed("model.seed");
        c.validate();
        return c;
    }

    TrainConfig train_config() const {
        TrainConfig t;
        t.learning_rate = real("train.learning_rate");
        t.beta1 = real("train.beta1");
        t.beta2 = real("train.beta2");
        t.adam_eps = real("train.adam_eps");
        t.clip_norm = real("train.clip_norm");
        t.batch_size = static_cast<int>(integer("train.batch_size"));
        t.epochs = static_cast<int>(integer("train.epochs"));
        t.seed = seed("train.seed");
        t.log_every = static_cast<int>(integer("train.log_every"));
        t.checkpoint_every = static_cast<int>(integer("train.checkpoint_every"));
        t.validate();
        return t;
    }

    DecodeConfig decode_config() const {
        DecodeConfig d;
        d.strategy = decode_strategy_from_string(str("decode.strategy"));
        d.temperature = real("decode.temperature");
        d.top_k = static_cast<int>(integer("decode.top_k"));
        d.max_len = static_cast<int>(integer("decode.max_len"));
        d.seed = seed("decode.seed");
        d.validate();
        return d;
    }

    PairMode pair_mode() const {
        const std::string& m = str("data.mode");
        if (m == "paired") {
            return PairMode::paired_tsv;
        }
        if (m == "docs") {
            return PairMode::auto_split;
        }
        throw ConfigError("data.mode must be paired or docs, got: " + m);
    }

    void write_snapshot(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out.is_open()) {
            throw DataError("cannot write resolved config: " + path);
        }
        for (const auto& [key, value] : values_) {
            out << key << " = " << value << "\n";
        }
    }

private:
    std::map<std::string, std::string> values_;
};

struct CommonFlags {
    std::string config_file;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_file, "key = value config file");
    cmd->add_option("--set", flags.sets, "override a config key, e.g. --set model.d_model=32")
        ->take_all();
    cmd->add_option("--seed", flags.seed, "seed for every randomized stage")
        ->each([&flags](const std::string&) { flags.seed_given = true; });
}

RunConfig resolve(const CommonFlags& flags) {
    RunConfig rc;
    if (!flags.config_file.empty()) {
        rc.load_file(flags.config_file);
    }
    if (flags.seed_given) {
        rc.apply_seed(flags.seed);
    }
    rc.apply_overrides(flags.sets);
    return rc;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) {
        throw DataError("cannot open file: " + path);
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        lines.push_back(line);
    }
    return lines;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) {
            out.push_back(' ');
        }
        out += tokens[i];
    }
    return out;
}

// The encoder sees the source, the decoder sees target minus one position.
void check_pair_lengths(const std::vector<ExamplePair>& pairs, int max_len,
                        const std::string& data_path) {
    std::size_t longest = 0;
    for (const ExamplePair& p : pairs) {
        longest = std::max({longest, p.source.size(), p.target.size() - 1});
    }
    if (longest > static_cast<std::size_t>(max_len)) {
        throw ConfigError("model.max_len " + std::to_string(max_len) +
                          " is too small for " + data_path + " (needs " +
                          std::to_string(longest) + ")");
    }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_build_vocab(const std::string& corpus_path, const CommonFlags& flags,
                    const std::string& out_path) {
    const RunConfig rc = resolve(flags);
    const int min_freq = static_cast<int>(rc.integer("data.min_freq"));
    const int max_size = static_cast<int>(rc.integer("data.max_vocab"));
    const std::vector<std::string> lines = read_lines(corpus_path);
    const Vocabulary vocab = build_vocab(lines, min_freq, max_size);
    save_vocab(vocab, out_path);
    rc.write_snapshot(out_path + ".config");
    std::printf("vocabulary size %d written to %s\n", vocab.size(), out_path.c_str());
    return 0;
}

int cmd_synth(const CommonFlags& flags, const std::string& out_path, int n, int len,
              int alphabet) {
    const RunConfig rc = resolve(flags);
    if (n < 1) {
        throw ConfigError("synth needs n >= 1");
    }
    const SynthData data = synth_reversal(n, len, alphabet, rc.seed("data.split_seed"));
    std::ofstream out(out_path, std::ios::binary);
    if (!out.is_open()) {
        throw DataError("cannot write dataset: " + out_path);
    }
    for (const ExamplePair& p : data.pairs) {
        out << join_tokens(decode(p.source, data.vocab)) << '\t'
            << join_tokens(decode(p.target, data.vocab)) << '\n';
    }
    out.close();
    rc.write_snapshot(out_path + ".config");
    std::printf("wrote %d reversal pairs (len %d, alphabet %d) to %s\n", n, len, alphabet,
                out_path.c_str());
    return 0;
}

struct LoadedData {
    Vocabulary vocab;
    bool vocab_built = false;
    std::vector<ExamplePair> pairs;
    int skipped = 0;
};

LoadedData load_data(const RunConfig& rc, const std::string& data_path,
                     const std::string& vocab_path) {
    LoadedData out;
    if (!vocab_path.empty()) {
        out.vocab = load_vocab(vocab_path);
    } else {
        out.vocab = build_vocab(read_lines(data_path),
                                static_cast<int>(rc.integer("data.min_freq")),
                                static_cast<int>(rc.integer("data.max_vocab")));
        out.vocab_built = true;
    }
    LoadedPairs loaded =
        load_pairs(data_path, rc.pair_mode(), rc.real("data.prefix_fraction"), out.vocab);
    out.pairs = std::move(loaded.pairs);
    out.skipped = loaded.skipped;
    return out;
}

int cmd_train(const CommonFlags& flags, const std::string& data_path,
              const std::string& vocab_path, const std::string& out_dir) {
    const RunConfig rc = resolve(flags);
    const TrainConfig tc = rc.train_config();

    const LoadedData data = load_data(rc, data_path, vocab_path);
    if (data.skipped > 0) {
        std::fprintf(stderr, "warning: skipped %d unusable lines in %s\n", data.skipped,
                     data_path.c_str());
    }
    const CorpusSplit split = split_corpus(data.pairs, rc.seed("data.split_seed"));
    const ModelConfig mc = rc.model_config(data.vocab.size());
    check_pair_lengths(data.pairs, mc.max_len, data_path);

    // Config validated and data loaded; only now touch the filesystem.
    fs::create_directories(out_dir);
    rc.write_snapshot((fs::path(out_dir) / "resolved_config.txt").string());
    if (data.vocab_built) {
        save_vocab(data.vocab, (fs::path(out_dir) / "vocab.txt").string());
    }

    const CheckpointSink sink = [&](int epoch, const Checkpoint& ckpt) {
        save_checkpoint(ckpt, (fs::path(out_dir) /
                               ("checkpoint_epoch" + std::to_string(epoch) + ".gfus"))
                                  .string());
    };
    TrainResult result = train(init_parameters(mc), split, tc, sink);

    save_checkpoint(result.checkpoint, (fs::path(out_dir) / "checkpoint.gfus").string());
    {
        std::ofstream log_out(fs::path(out_dir) / "train_log.csv", std::ios::binary);
        write_log_csv(result.log, log_out);
    }
    {
        std::ofstream svg_out(fs::path(out_dir) / "loss_curve.svg", std::ios::binary);
        write_loss_curve_svg(result.log, svg_out);
    }
    double final_val = 0.0;
    for (const LogRow& row : result.log.rows) {
        if (row.split == "val") {
            final_val = row.loss;
        }
    }
    std::printf("trained %d epochs on %zu pairs (val %zu, test %zu); final val loss %.6f\n",
                tc.epochs, split.train.size(), split.validation.size(), split.test.size(),
                final_val);
    std::printf("outputs in %s: checkpoint.gfus, train_log.csv, loss_curve.svg\n",
                out_dir.c_str());
    return 0;
}

int cmd_generate(const CommonFlags& flags, const std::string& ckpt_path,
                 const std::string& vocab_path, const std::string& text,
                 const std::string& input_path) {
    const RunConfig rc = resolve(flags);
    const DecodeConfig dc = rc.decode_config();
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const Vocabulary vocab = load_vocab(vocab_path);
    if (vocab.size() != ckpt.config.vocab_size) {
        throw ConfigError("checkpoint/vocab mismatch: checkpoint expects vocab size " +
                          std::to_string(ckpt.config.vocab_size) + " but " + vocab_path +
                          " has " + std::to_string(vocab.size()));
    }
    std::vector<std::string> sources;
    if (!text.empty()) {
        sources.push_back(text);
    } else if (!input_path.empty()) {
        sources = read_lines(input_path);
    } else {
        throw ConfigError("generate needs --text or --input");
    }
    for (const std::string& line : sources) {
        const std::vector<int> ids = encode(tokenize(line), vocab);
        if (ids.empty()) {
            throw ConfigError("source must be non-empty");
        }
        if (static_cast<int>(ids.size()) > ckpt.config.max_len) {
            throw ConfigError("source has " + std::to_string(ids.size()) +
                              " tokens but the model caps sequences at " +
                              std::to_string(ckpt.config.max_len));
        }
        const std::vector<int> out = gfus::decode(ids, ckpt, dc);
        std::printf("%s\n", join_tokens(gfus::decode(strip_special_ids(out), vocab)).c_str());
    }
    return 0;
}

int cmd_eval(const CommonFlags& flags, const std::vector<std::string>& checkpoints,
             const std::string& data_path, const std::string& vocab_path,
             const std::string& out_dir) {
    const RunConfig rc = resolve(flags);
    const DecodeConfig dc = rc.decode_config();
    const Vocabulary vocab = load_vocab(vocab_path);
    const LoadedPairs loaded =
        load_pairs(data_path, rc.pair_mode(), rc.real("data.prefix_fraction"), vocab);
    if (loaded.pairs.empty()) {
        throw DataError("no usable pairs in " + data_path);
    }

    struct Variant {
        std::string name;
        Checkpoint ckpt;
    };
    std::vector<Variant> variants;
    for (const std::string& spec : checkpoints) {
        const auto eq = spec.find('=');
        const std::string name =
            eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
        const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
        Checkpoint ckpt = load_checkpoint(path);
        if (ckpt.config.vocab_size != vocab.size()) {
            throw ConfigError("checkpoint/vocab mismatch for " + name +
                              ": checkpoint expects vocab size " +
                              std::to_string(ckpt.config.vocab_size) + " but " + vocab_path +
                              " has " + std::to_string(vocab.size()));
        }
        check_pair_lengths(loaded.pairs, ckpt.config.max_len, data_path);
        variants.push_back({name, std::move(ckpt)});
    }

    const std::string dataset = fs::path(data_path).filename().string();
    std::vector<EvalRow> rows;
    for (const Variant& v : variants) {
        const VariantEval ev = evaluate_variant(v.ckpt, loaded.pairs, dc);
        rows.push_back({v.name, ev.ppl, 100.0 * ev.bleu, to_string(dc.strategy), dataset,
                        dc.seed});
    }
    const EvalReport report = make_report(std::move(rows));

    fs::create_directories(out_dir);
    rc.write_snapshot((fs::path(out_dir) / "resolved_config.txt").string());
    {
        std::ofstream csv(fs::path(out_dir) / "report.csv", std::ios::binary);
        write_report_csv(report, csv);
    }
    std::printf("%s", render_table(report).c_str());
    return 0;
}

int cmd_gradcheck(const CommonFlags& flags, double step, double threshold, bool corrupt) {
    const RunConfig rc = resolve(flags);
    const GradCheckReport report =
        model_gradient_check(gradcheck_config(), rc.seed("model.seed"), step, corrupt);
    for (const GradCheckRow& row : report.rows) {
        std::printf("%-16s max relative error %.3e\n", row.name.c_str(), row.max_rel_err);
    }
    std::printf("worst %.3e (threshold %.1e): %s\n", report.worst, threshold,
                report.passed(threshold) ? "PASS" : "FAIL");
    return report.passed(threshold) ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"gated encoder/decoder fusion language model"};
    app.require_subcommand(1);

    CommonFlags vocab_flags;
    std::string vocab_corpus;
    std::string vocab_out = "vocab.txt";
    CLI::App* build_vocab_cmd =
        app.add_subcommand("build-vocab", "build a vocabulary file from a text corpus");
    build_vocab_cmd->add_option("--corpus", vocab_corpus, "input corpus, one text per line")
        ->required();
    build_vocab_cmd->add_option("--out", vocab_out, "output vocabulary file");
    add_common(build_vocab_cmd, vocab_flags);

    CommonFlags synth_flags;
    std::string synth_task = "reversal";
    std::string synth_out = "reversal.tsv";
    int synth_n = 2000;
    int synth_len = 8;
    int synth_alphabet = 30;
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic paired dataset");
    synth_cmd->add_option("--task", synth_task, "task name (reversal)");
    synth_cmd->add_option("--n", synth_n, "number of pairs");
    synth_cmd->add_option("--len", synth_len, "source length");
    synth_cmd->add_option("--alphabet", synth_alphabet, "alphabet size");
    synth_cmd->add_option("--out", synth_out, "output TSV path");
    add_common(synth_cmd, synth_flags);

    CommonFlags train_flags;
    std::string train_data;
    std::string train_vocab;
    std::string train_out = "run";
    CLI::App* train_cmd = app.add_subcommand("train", "train a model from paired data");
    train_cmd->add_option("--data", train_data, "corpus file (data.mode decides the format)")
        ->required();
    train_cmd->add_option("--vocab", train_vocab,
                          "vocabulary file; built from the data when omitted");
    train_cmd->add_option("--out", train_out, "output directory");
    add_common(train_cmd, train_flags);

    CommonFlags gen_flags;
    std::string gen_ckpt;
    std::string gen_vocab;
    std::string gen_text;
    std::string gen_input;
    CLI::App* gen_cmd = app.add_subcommand("generate", "decode text from a checkpoint");
    gen_cmd->add_option("--checkpoint", gen_ckpt, "checkpoint file")->required();
    gen_cmd->add_option("--vocab", gen_vocab, "vocabulary file")->required();
    gen_cmd->add_option("--text", gen_text, "source text");
    gen_cmd->add_option("--input", gen_input, "file with one source per line");
    add_common(gen_cmd, gen_flags);

    CommonFlags eval_flags;
    std::vector<std::string> eval_ckpts;
    std::string eval_data;
    std::string eval_vocab;
    std::string eval_out = "eval";
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate checkpoints on a test set");
    eval_cmd->add_option("--checkpoint", eval_ckpts, "name=path (repeatable)")
        ->required()
        ->take_all();
    eval_cmd->add_option("--data", eval_data, "paired test data")->required();
    eval_cmd->add_option("--vocab", eval_vocab, "vocabulary file")->required();
    eval_cmd->add_option("--out", eval_out, "output directory");
    add_common(eval_cmd, eval_flags);

    CommonFlags grad_flags;
    double grad_step = 1e-6;
    double grad_threshold = 1e-5;
    bool grad_corrupt = false;
    CLI::App* grad_cmd =
        app.add_subcommand("gradcheck", "finite-difference check of every model gradient");
    grad_cmd->add_option("--step", grad_step, "central-difference step");
    grad_cmd->add_option("--threshold", grad_threshold, "max relative error to pass");
    grad_cmd->add_flag("--corrupt-backward", grad_corrupt)->group(""); // test fixture
    add_common(grad_cmd, grad_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (build_vocab_cmd->parsed()) {
            return cmd_build_vocab(vocab_corpus, vocab_flags, vocab_out);
        }
        if (synth_cmd->parsed()) {
            if (synth_task != "reversal") {
                throw ConfigError("unknown synth task: " + synth_task);
            }
            return cmd_synth(synth_flags, synth_out, synth_n, synth_len, synth_alphabet);
        }
        if (train_cmd->parsed()) {
            return cmd_train(train_flags, train_data, train_vocab, train_out);
        }
        if (gen_cmd->parsed()) {
            return cmd_generate(gen_flags, gen_ckpt, gen_vocab, gen_text, gen_input);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(eval_flags, eval_ckpts, eval_data, eval_vocab, eval_out);
        }
        if (grad_cmd->parsed()) {
            return cmd_gradcheck(grad_flags, grad_step, grad_threshold, grad_corrupt);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 3;
    }
    return 0;
}
