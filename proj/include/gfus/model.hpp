#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gfus/autograd.hpp"
#include "gfus/corpus.hpp"
#include "gfus/tensor.hpp"

namespace gfus {

enum class FusionMode { none, cross_attention, gate, both };
enum class GateGranularity { scalar, per_dimension };

std::string to_string(FusionMode mode);
std::string to_string(GateGranularity g);
FusionMode fusion_mode_from_string(const std::string& s);
GateGranularity gate_granularity_from_string(const std::string& s);

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 64;
    int n_heads = 4;
    int n_encoder_layers = 1;
    int n_decoder_layers = 1;
    int d_ff = 128;
    int max_len = 64;
    double dropout_rate = 0.1;
    FusionMode fusion_mode = FusionMode::both;
    GateGranularity gate_granularity = GateGranularity::scalar;
    std::uint64_t seed = 42;

    bool has_block_cross_attention() const {
        return fusion_mode == FusionMode::cross_attention || fusion_mode == FusionMode::both;
    }
    bool has_gate() const {
        return fusion_mode == FusionMode::gate || fusion_mode == FusionMode::both;
    }
    bool uses_encoder() const { return fusion_mode != FusionMode::none; }

    void validate() const; // throws ConfigError
};

/// Model parameters by name, together with the architecture that shaped them.
struct Checkpoint {
    ModelConfig config;
    std::map<std::string, Tensor> params;
};

/// Canonical parameter list for a config: names, shapes, and whether the
/// entry gets the Normal(0, 0.02^2) matrix init (vs. zeros / ones for
/// biases and layer-norm gains).
struct ParamSpec {
    std::string name;
    std::vector<int> shape;
    enum class Init { normal, zeros, ones } init;
};
std::vector<ParamSpec> parameter_specs(const ModelConfig& config);

Checkpoint init_parameters(const ModelConfig& config);

struct EncoderOutput {
    Tensor h;                          // [n x d_model]
    std::vector<std::uint8_t> is_pad;  // per source position
};

struct GateTrace {
    /// One entry per decoder step: a single alpha in scalar mode, d_model
    /// values in per-dimension mode.
    std::vector<std::vector<double>> alphas;
};

struct DecodeResult {
    Tensor logits; // [T x vocab]
    GateTrace gate_trace;
};

EncoderOutput encode(const std::vector<int>& source_ids, const Checkpoint& ckpt,
                     bool train_mode, Rng* rng = nullptr);

DecodeResult decode_forward(const std::vector<int>& prefix_ids, const EncoderOutput& enc,
                            const Checkpoint& ckpt, bool train_mode, Rng* rng = nullptr);

struct CrossAttendResult {
    Tensor context;                   // [Tq x d_model]
    std::vector<Tensor> head_weights; // per head, [Tq x n]
};

/// Attention pooling of h with queries from z, using the gate's attention
/// parameters. Requires a fusion mode with a gate.
CrossAttendResult cross_attend(const Tensor& z, const EncoderOutput& enc, const Checkpoint& ckpt);

struct GateResult {
    Tensor alpha;  // [T x 1] or [T x d_model]
    Tensor fused;  // [T x d_model]
};

/// alpha = sigmoid(z W + b); fused = alpha * c + (1 - alpha) * z.
GateResult gate(const Tensor& z, const Tensor& c, const Tensor& w, const Tensor& b,
                GateGranularity granularity);

/// Teacher-forced mean NLL per supervised target token.
double forward_loss(const ExamplePair& pair, const Checkpoint& ckpt, bool train_mode,
                    Rng* rng = nullptr);

int supervised_token_count(const ExamplePair& pair);

/// Graph-building forward pass bound to a checkpoint. Parameter leaves are
/// created once per graph so gradients accumulate across uses; the trainer
/// reads them back through param_nodes().
class ModelForward {
public:
    ModelForward(Graph& graph, const Checkpoint& ckpt, bool train_mode, Rng* rng);

    Node* encode_source(const std::vector<int>& source_ids,
                        std::vector<std::uint8_t>* is_pad_out = nullptr);
    Node* decode_prefix(const std::vector<int>& prefix_ids, Node* h,
                        const std::vector<std::uint8_t>& src_is_pad, GateTrace* trace = nullptr);
    Node* pair_loss(const ExamplePair& pair);

    Node* param(const std::string& name);
    const std::map<std::string, Node*>& param_nodes() const { return param_nodes_; }

private:
    Node* embed_with_positions(const std::vector<int>& ids, const std::string& pos_name);
    Node* attention(Node* queries, Node* keys_values, const std::string& prefix,
                    const std::vector<std::uint8_t>& allowed,
                    std::vector<Tensor>* head_weights_out = nullptr);
    Node* feed_forward(Node* x, const std::string& prefix);
    Node* maybe_dropout(Node* x);

    Graph& g_;
    const Checkpoint& ckpt_;
    bool train_mode_;
    Rng* rng_;
    std::map<std::string, Node*> param_nodes_;

    friend CrossAttendResult cross_attend(const Tensor&, const EncoderOutput&, const Checkpoint&);
};

} // namespace gfus
