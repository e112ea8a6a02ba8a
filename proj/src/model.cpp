#include "gfus/model.hpp"

#include <cmath>

#include "gfus/rng.hpp"

namespace gfus {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;

void check_length(std::size_t len, int max_len, const char* what) {
    if (static_cast<int>(len) > max_len) {
        throw InternalError(std::string(what) + " length " + std::to_string(len) +
                            " exceeds max_len " + std::to_string(max_len));
    }
}

std::vector<std::uint8_t> pad_flags(const std::vector<int>& ids) {
    std::vector<std::uint8_t> flags(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        flags[i] = ids[i] == kPadId ? 1 : 0;
    }
    return flags;
}

// Row-major [Tq x Tk] mask: query t may attend to key k.
std::vector<std::uint8_t> attend_mask(std::size_t tq, const std::vector<std::uint8_t>& key_is_pad,
                                      bool causal) {
    const std::size_t tk = key_is_pad.size();
    std::vector<std::uint8_t> allowed(tq * tk, 0);
    for (std::size_t q = 0; q < tq; ++q) {
        for (std::size_t k = 0; k < tk; ++k) {
            const bool in_window = !causal || k <= q;
            allowed[q * tk + k] = (in_window && key_is_pad[k] == 0) ? 1 : 0;
        }
    }
    return allowed;
}

void push_attention_specs(std::vector<ParamSpec>& specs, const std::string& prefix, int d) {
    using Init = ParamSpec::Init;
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
        specs.push_back({prefix + "." + w, {d, d}, Init::normal});
    }
    for (const char* b : {"bq", "bk", "bv", "bo"}) {
        specs.push_back({prefix + "." + b, {d}, Init::zeros});
    }
}

void push_layer_norm_specs(std::vector<ParamSpec>& specs, const std::string& prefix, int d) {
    specs.push_back({prefix + ".gain", {d}, ParamSpec::Init::ones});
    specs.push_back({prefix + ".bias", {d}, ParamSpec::Init::zeros});
}

} // namespace

std::string to_string(FusionMode mode) {
    switch (mode) {
    case FusionMode::none: return "none";
    case FusionMode::cross_attention: return "cross_attention";
    case FusionMode::gate: return "gate";
    case FusionMode::both: return "both";
    }
    throw InternalError("unknown fusion mode");
}

std::string to_string(GateGranularity g) {
    return g == GateGranularity::scalar ? "scalar" : "per_dimension";
}

FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "none") return FusionMode::none;
    if (s == "cross_attention") return FusionMode::cross_attention;
    if (s == "gate") return FusionMode::gate;
    if (s == "both") return FusionMode::both;
    throw ConfigError("unknown fusion_mode: " + s +
                      " (expected none|cross_attention|gate|both)");
}

GateGranularity gate_granularity_from_string(const std::string& s) {
    if (s == "scalar") return GateGranularity::scalar;
    if (s == "per_dimension") return GateGranularity::per_dimension;
    throw ConfigError("unknown gate_granularity: " + s + " (expected scalar|per_dimension)");
}

void ModelConfig::validate() const {
    if (vocab_size < 5) {
        throw ConfigError("vocab_size must be at least 5 (reserved tokens plus one), got " +
                          std::to_string(vocab_size));
    }
    if (d_model < 1 || n_heads < 1 || n_encoder_layers < 1 || n_decoder_layers < 1 || d_ff < 1) {
        throw ConfigError("model sizes must all be at least 1");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                          std::to_string(n_heads));
    }
    if (max_len < 2) {
        throw ConfigError("max_len must be at least 2, got " + std::to_string(max_len));
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw ConfigError("dropout_rate must be in [0, 1), got " + std::to_string(dropout_rate));
    }
}

std::vector<ParamSpec> parameter_specs(const ModelConfig& c) {
    using Init = ParamSpec::Init;
    std::vector<ParamSpec> specs;
    const int d = c.d_model;
    specs.push_back({"tok_emb", {c.vocab_size, d}, Init::normal});
    specs.push_back({"enc.pos_emb", {c.max_len, d}, Init::normal});
    specs.push_back({"dec.pos_emb", {c.max_len, d}, Init::normal});
    for (int i = 0; i < c.n_encoder_layers; ++i) {
        const std::string p = "enc." + std::to_string(i);
        push_layer_norm_specs(specs, p + ".ln1", d);
        push_attention_specs(specs, p + ".attn", d);
        push_layer_norm_specs(specs, p + ".ln2", d);
        specs.push_back({p + ".ffn.w1", {d, c.d_ff}, Init::normal});
        specs.push_back({p + ".ffn.b1", {c.d_ff}, Init::zeros});
        specs.push_back({p + ".ffn.w2", {c.d_ff, d}, Init::normal});
        specs.push_back({p + ".ffn.b2", {d}, Init::zeros});
    }
    push_layer_norm_specs(specs, "enc.ln_f", d);
    for (int i = 0; i < c.n_decoder_layers; ++i) {
        const std::string p = "dec." + std::to_string(i);
        push_layer_norm_specs(specs, p + ".ln1", d);
        push_attention_specs(specs, p + ".attn", d);
        if (c.has_block_cross_attention()) {
            push_layer_norm_specs(specs, p + ".lnx", d);
            push_attention_specs(specs, p + ".xattn", d);
        }
        push_layer_norm_specs(specs, p + ".ln2", d);
        specs.push_back({p + ".ffn.w1", {d, c.d_ff}, Init::normal});
        specs.push_back({p + ".ffn.b1", {c.d_ff}, Init::zeros});
        specs.push_back({p + ".ffn.w2", {c.d_ff, d}, Init::normal});
        specs.push_back({p + ".ffn.b2", {d}, Init::zeros});
    }
    push_layer_norm_specs(specs, "dec.ln_f", d);
    if (c.has_gate()) {
        push_attention_specs(specs, "gate.attn", d);
        const int gate_out = c.gate_granularity == GateGranularity::scalar ? 1 : d;
        specs.push_back({"gate.w", {d, gate_out}, Init::normal});
        specs.push_back({"gate.b", {gate_out}, Init::zeros});
    }
    return specs;
}

Checkpoint init_parameters(const ModelConfig& config) {
    config.validate();
    Checkpoint ckpt;
    ckpt.config = config;
    Rng rng(config.seed);
    for (const ParamSpec& spec : parameter_specs(config)) {
        Tensor t(spec.shape);
        switch (spec.init) {
        case ParamSpec::Init::normal:
            for (double& v : t.data) {
                v = rng.normal(0.0, kInitStd);
            }
            break;
        case ParamSpec::Init::ones:
            for (double& v : t.data) {
                v = 1.0;
            }
            break;
        case ParamSpec::Init::zeros:
            break;
        }
        ckpt.params.emplace(spec.name, std::move(t));
    }
    return ckpt;
}

// ---------------------------------------------------------------------------
// ModelForward
// ---------------------------------------------------------------------------

ModelForward::ModelForward(Graph& graph, const Checkpoint& ckpt, bool train_mode, Rng* rng)
    : g_(graph), ckpt_(ckpt), train_mode_(train_mode), rng_(rng) {
    if (train_mode_ && ckpt_.config.dropout_rate > 0.0 && rng_ == nullptr) {
        throw InternalError("train-mode forward with dropout requires an rng");
    }
}

Node* ModelForward::param(const std::string& name) {
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end()) {
        return it->second;
    }
    auto pit = ckpt_.params.find(name);
    if (pit == ckpt_.params.end()) {
        throw InternalError("unknown parameter: " + name);
    }
    Node* leaf = g_.leaf(pit->second);
    param_nodes_.emplace(name, leaf);
    return leaf;
}

Node* ModelForward::maybe_dropout(Node* x) {
    if (train_mode_ && ckpt_.config.dropout_rate > 0.0) {
        return g_.dropout(x, ckpt_.config.dropout_rate, *rng_);
    }
    return x;
}

Node* ModelForward::embed_with_positions(const std::vector<int>& ids,
                                         const std::string& pos_name) {
    std::vector<int> positions(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        positions[i] = static_cast<int>(i);
    }
    Node* tok = g_.embed(param("tok_emb"), ids);
    Node* pos = g_.embed(param(pos_name), positions);
    return maybe_dropout(g_.add(tok, pos));
}

Node* ModelForward::attention(Node* queries, Node* keys_values, const std::string& prefix,
                              const std::vector<std::uint8_t>& allowed,
                              std::vector<Tensor>* head_weights_out) {
    const int d = ckpt_.config.d_model;
    const int heads = ckpt_.config.n_heads;
    const int head_dim = d / heads;
    Node* q = g_.add_rowvec(g_.matmul(queries, param(prefix + ".wq")), param(prefix + ".bq"));
    Node* k = g_.add_rowvec(g_.matmul(keys_values, param(prefix + ".wk")), param(prefix + ".bk"));
    Node* v = g_.add_rowvec(g_.matmul(keys_values, param(prefix + ".wv")), param(prefix + ".bv"));
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<Node*> per_head;
    per_head.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Node* qh = g_.slice_cols(q, h * head_dim, head_dim);
        Node* kh = g_.slice_cols(k, h * head_dim, head_dim);
        Node* vh = g_.slice_cols(v, h * head_dim, head_dim);
        Node* scores = g_.affine(g_.matmul(qh, g_.transpose(kh)), scale, 0.0);
        Node* weights = g_.masked_softmax(scores, allowed);
        if (head_weights_out != nullptr) {
            head_weights_out->push_back(weights->value);
        }
        per_head.push_back(g_.matmul(weights, vh));
    }
    Node* cat = heads == 1 ? per_head[0] : g_.concat_cols(per_head);
    return g_.add_rowvec(g_.matmul(cat, param(prefix + ".wo")), param(prefix + ".bo"));
}

Node* ModelForward::feed_forward(Node* x, const std::string& prefix) {
    Node* hidden = g_.gelu(
        g_.add_rowvec(g_.matmul(x, param(prefix + ".w1")), param(prefix + ".b1")));
    return g_.add_rowvec(g_.matmul(hidden, param(prefix + ".w2")), param(prefix + ".b2"));
}

Node* ModelForward::encode_source(const std::vector<int>& source_ids,
                                  std::vector<std::uint8_t>* is_pad_out) {
    if (source_ids.empty()) {
        throw InternalError("encode: source must be non-empty");
    }
    check_length(source_ids.size(), ckpt_.config.max_len, "source");
    const std::vector<std::uint8_t> is_pad = pad_flags(source_ids);
    if (is_pad_out != nullptr) {
        *is_pad_out = is_pad;
    }
    const std::vector<std::uint8_t> allowed = attend_mask(source_ids.size(), is_pad, false);
    Node* x = embed_with_positions(source_ids, "enc.pos_emb");
    for (int i = 0; i < ckpt_.config.n_encoder_layers; ++i) {
        const std::string p = "enc." + std::to_string(i);
        Node* a = g_.layer_norm(x, param(p + ".ln1.gain"), param(p + ".ln1.bias"), kLayerNormEps);
        x = g_.add(x, maybe_dropout(attention(a, a, p + ".attn", allowed)));
        Node* f = g_.layer_norm(x, param(p + ".ln2.gain"), param(p + ".ln2.bias"), kLayerNormEps);
        x = g_.add(x, maybe_dropout(feed_forward(f, p + ".ffn")));
    }
    return g_.layer_norm(x, param("enc.ln_f.gain"), param("enc.ln_f.bias"), kLayerNormEps);
}

Node* ModelForward::decode_prefix(const std::vector<int>& prefix_ids, Node* h,
                                  const std::vector<std::uint8_t>& src_is_pad, GateTrace* trace) {
    if (prefix_ids.empty()) {
        throw InternalError("decode: prefix must be non-empty");
    }
    check_length(prefix_ids.size(), ckpt_.config.max_len, "prefix");
    const ModelConfig& c = ckpt_.config;
    if (c.uses_encoder() && h == nullptr) {
        throw InternalError("decode: fusion mode " + to_string(c.fusion_mode) +
                            " requires encoder output");
    }
    const std::size_t t_len = prefix_ids.size();
    const std::vector<std::uint8_t> causal =
        attend_mask(t_len, pad_flags(prefix_ids), true);
    const std::vector<std::uint8_t> cross =
        c.uses_encoder() ? attend_mask(t_len, src_is_pad, false) : std::vector<std::uint8_t>{};

    Node* x = embed_with_positions(prefix_ids, "dec.pos_emb");
    for (int i = 0; i < c.n_decoder_layers; ++i) {
        const std::string p = "dec." + std::to_string(i);
        Node* a = g_.layer_norm(x, param(p + ".ln1.gain"), param(p + ".ln1.bias"), kLayerNormEps);
        x = g_.add(x, maybe_dropout(attention(a, a, p + ".attn", causal)));
        if (c.has_block_cross_attention()) {
            Node* q = g_.layer_norm(x, param(p + ".lnx.gain"), param(p + ".lnx.bias"),
                                    kLayerNormEps);
            x = g_.add(x, maybe_dropout(attention(q, h, p + ".xattn", cross)));
        }
        Node* f = g_.layer_norm(x, param(p + ".ln2.gain"), param(p + ".ln2.bias"), kLayerNormEps);
        x = g_.add(x, maybe_dropout(feed_forward(f, p + ".ffn")));
    }
    Node* z = g_.layer_norm(x, param("dec.ln_f.gain"), param("dec.ln_f.bias"), kLayerNormEps);

    if (c.has_gate()) {
        Node* context = attention(z, h, "gate.attn", cross);
        Node* alpha = g_.sigmoid(
            g_.add_rowvec(g_.matmul(z, param("gate.w")), param("gate.b")));
        Node* keep = g_.affine(alpha, -1.0, 1.0); // 1 - alpha
        Node* fused;
        if (c.gate_granularity == GateGranularity::scalar) {
            fused = g_.add(g_.mul_colvec(context, alpha), g_.mul_colvec(z, keep));
        } else {
            fused = g_.add(g_.mul(context, alpha), g_.mul(z, keep));
        }
        if (trace != nullptr) {
            const Tensor& av = alpha->value;
            const int width = av.cols();
            trace->alphas.resize(static_cast<std::size_t>(av.rows()));
            for (int r = 0; r < av.rows(); ++r) {
                trace->alphas[static_cast<std::size_t>(r)].assign(
                    av.data.begin() + static_cast<long>(r) * width,
                    av.data.begin() + static_cast<long>(r + 1) * width);
            }
        }
        z = fused;
    }
    return g_.matmul(z, g_.transpose(param("tok_emb")));
}

Node* ModelForward::pair_loss(const ExamplePair& pair) {
    if (pair.target.size() < 2) {
        throw InternalError("pair target must have at least <bos> and <eos>");
    }
    std::vector<std::uint8_t> src_is_pad;
    Node* h = nullptr;
    if (ckpt_.config.uses_encoder()) {
        h = encode_source(pair.source, &src_is_pad);
    } else {
        src_is_pad = pad_flags(pair.source);
    }
    const std::vector<int> prefix(pair.target.begin(), pair.target.end() - 1);
    const std::vector<int> supervision(pair.target.begin() + 1, pair.target.end());
    Node* logits = decode_prefix(prefix, h, src_is_pad);
    return g_.cross_entropy_mean(logits, supervision, kPadId);
}

// ---------------------------------------------------------------------------
// Plain-tensor entry points
// ---------------------------------------------------------------------------

EncoderOutput encode(const std::vector<int>& source_ids, const Checkpoint& ckpt,
                     bool train_mode, Rng* rng) {
    Graph g;
    ModelForward fwd(g, ckpt, train_mode, rng);
    EncoderOutput out;
    Node* h = fwd.encode_source(source_ids, &out.is_pad);
    out.h = h->value;
    return out;
}

DecodeResult decode_forward(const std::vector<int>& prefix_ids, const EncoderOutput& enc,
                            const Checkpoint& ckpt, bool train_mode, Rng* rng) {
    Graph g;
    ModelForward fwd(g, ckpt, train_mode, rng);
    Node* h = nullptr;
    if (ckpt.config.uses_encoder()) {
        h = g.leaf(enc.h);
    }
    DecodeResult result;
    Node* logits = fwd.decode_prefix(prefix_ids, h, enc.is_pad, &result.gate_trace);
    result.logits = logits->value;
    return result;
}

CrossAttendResult cross_attend(const Tensor& z, const EncoderOutput& enc,
                               const Checkpoint& ckpt) {
    if (!ckpt.config.has_gate()) {
        throw InternalError("cross_attend requires a fusion mode with a gate");
    }
    Graph g;
    ModelForward fwd(g, ckpt, false, nullptr);
    Node* zn = g.leaf(z);
    Node* hn = g.leaf(enc.h);
    const std::vector<std::uint8_t> allowed =
        attend_mask(static_cast<std::size_t>(z.rows()), enc.is_pad, false);
    CrossAttendResult result;
    Node* c = fwd.attention(zn, hn, "gate.attn", allowed, &result.head_weights);
    result.context = c->value;
    return result;
}

GateResult gate(const Tensor& z, const Tensor& c, const Tensor& w, const Tensor& b,
                GateGranularity granularity) {
    const int d = z.cols();
    const int out_width = granularity == GateGranularity::scalar ? 1 : d;
    if (w.rank() != 2 || w.shape[0] != d || w.shape[1] != out_width ||
        static_cast<int>(b.numel()) != out_width) {
        throw ShapeError("gate: expected W " + shape_str({d, out_width}) + " and b [" +
                         std::to_string(out_width) + "], got W " + shape_str(w.shape) +
                         ", b " + shape_str(b.shape));
    }
    if (!z.same_shape(c)) {
        throw ShapeError("gate: z " + shape_str(z.shape) + " vs c " + shape_str(c.shape));
    }
    Graph g;
    Node* zn = g.leaf(z);
    Node* cn = g.leaf(c);
    Node* alpha = g.sigmoid(g.add_rowvec(g.matmul(zn, g.leaf(w)), g.leaf(b)));
    Node* keep = g.affine(alpha, -1.0, 1.0);
    Node* fused = granularity == GateGranularity::scalar
                      ? g.add(g.mul_colvec(cn, alpha), g.mul_colvec(zn, keep))
                      : g.add(g.mul(cn, alpha), g.mul(zn, keep));
    return GateResult{alpha->value, fused->value};
}

double forward_loss(const ExamplePair& pair, const Checkpoint& ckpt, bool train_mode, Rng* rng) {
    Graph g;
    ModelForward fwd(g, ckpt, train_mode, rng);
    return fwd.pair_loss(pair)->value.data[0];
}

int supervised_token_count(const ExamplePair& pair) {
    if (pair.target.size() < 2) {
        throw InternalError("pair target must have at least <bos> and <eos>");
    }
    int n = 0;
    for (std::size_t i = 1; i < pair.target.size(); ++i) {
        if (pair.target[i] != kPadId) {
            ++n;
        }
    }
    return n;
}

} // namespace gfus
