#include "gfus/gradcheck.hpp"

#include <algorithm>

#include "gfus/rng.hpp"

namespace gfus {

ModelConfig gradcheck_config() {
    ModelConfig c;
    c.vocab_size = 20;
    c.d_model = 16;
    c.n_heads = 2;
    c.n_encoder_layers = 1;
    c.n_decoder_layers = 1;
    c.d_ff = 32;
    c.max_len = 8;
    c.dropout_rate = 0.0;
    c.fusion_mode = FusionMode::both;
    c.gate_granularity = GateGranularity::scalar;
    return c;
}

GradCheckReport model_gradient_check(const ModelConfig& config, std::uint64_t seed, double step,
                                     bool corrupt_one) {
    ModelConfig cfg = config;
    cfg.seed = seed;
    cfg.dropout_rate = 0.0; // finite differences need a deterministic forward
    Checkpoint ckpt = init_parameters(cfg);

    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    const int n = std::min(5, cfg.max_len);
    const int m = std::min(5, cfg.max_len - 1);
    ExamplePair pair;
    pair.source.resize(static_cast<std::size_t>(n));
    for (int& id : pair.source) {
        id = 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.vocab_size - 4)));
    }
    pair.target.push_back(kBosId);
    for (int i = 0; i < m - 1; ++i) {
        pair.target.push_back(
            4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.vocab_size - 4))));
    }
    pair.target.push_back(kEosId);

    // One backward pass gives every analytic gradient.
    Graph g;
    ModelForward fwd(g, ckpt, false, nullptr);
    Node* loss = fwd.pair_loss(pair);
    g.backward(loss);

    GradCheckReport report;
    bool corrupted = false;
    for (const auto& [name, tensor] : ckpt.params) {
        Tensor analytic = Tensor::zeros_like(tensor);
        auto it = fwd.param_nodes().find(name);
        if (it != fwd.param_nodes().end()) {
            analytic = it->second->grad;
        }
        if (corrupt_one && !corrupted) {
            analytic.data[0] += 1.0;
            corrupted = true;
        }
        Checkpoint probe = ckpt;
        Tensor& slot = probe.params.at(name);
        auto f = [&](const Tensor& theta) {
            slot = theta;
            return forward_loss(pair, probe, false);
        };
        const double err = finite_diff_check(f, tensor, analytic, step);
        report.rows.push_back({name, err});
        report.worst = std::max(report.worst, err);
    }
    return report;
}

} // namespace gfus
