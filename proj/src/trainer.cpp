#include "gfus/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "gfus/rng.hpp"

namespace gfus {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) {
        throw ConfigError("learning_rate must be positive");
    }
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw ConfigError("beta1 and beta2 must lie in [0, 1)");
    }
    if (adam_eps <= 0.0) {
        throw ConfigError("adam_eps must be positive");
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size must be at least 1");
    }
    if (epochs < 0) {
        throw ConfigError("epochs must be non-negative");
    }
    if (log_every < 0 || checkpoint_every < 0) {
        throw ConfigError("log_every and checkpoint_every must be non-negative");
    }
}

AdamState AdamState::for_params(const std::map<std::string, Tensor>& params) {
    AdamState s;
    for (const auto& [name, tensor] : params) {
        s.m.emplace(name, Tensor::zeros_like(tensor));
        s.v.emplace(name, Tensor::zeros_like(tensor));
    }
    return s;
}

void adam_step(std::map<std::string, Tensor>& params, const std::map<std::string, Tensor>& grads,
               AdamState& state, const TrainConfig& config) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
    for (auto& [name, theta] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) {
            throw InternalError("adam_step: missing gradient for " + name);
        }
        const Tensor& g = git->second;
        if (!g.same_shape(theta)) {
            throw InternalError("adam_step: gradient shape " + shape_str(g.shape) +
                                " does not match parameter " + name + " " +
                                shape_str(theta.shape));
        }
        Tensor& m = state.m.at(name);
        Tensor& v = state.v.at(name);
        for (std::size_t i = 0; i < theta.data.size(); ++i) {
            const double gi = g.data[i];
            m.data[i] = config.beta1 * m.data[i] + (1.0 - config.beta1) * gi;
            v.data[i] = config.beta2 * v.data[i] + (1.0 - config.beta2) * gi * gi;
            const double m_hat = m.data[i] / bc1;
            const double v_hat = v.data[i] / bc2;
            theta.data[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_eps);
        }
    }
}

double clip_gradients(std::map<std::string, Tensor>& grads, double clip_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads) {
        for (double v : g.data) {
            sq += v * v;
        }
    }
    const double norm = std::sqrt(sq);
    if (clip_norm > 0.0 && norm > clip_norm) {
        const double scale = clip_norm / norm;
        for (auto& [name, g] : grads) {
            for (double& v : g.data) {
                v *= scale;
            }
        }
    }
    return norm;
}

void write_log_csv(const TrainingLog& log, std::ostream& out) {
    out << "epoch,step,split,loss,ppl\n";
    char buf[128];
    for (const LogRow& row : log.rows) {
        std::snprintf(buf, sizeof buf, "%d,%ld,%s,%.17g,%.17g\n", row.epoch, row.step,
                      row.split.c_str(), row.loss, row.ppl);
        out << buf;
    }
}

TrainingLog read_log_csv(std::istream& in) {
    TrainingLog log;
    std::string line;
    if (!std::getline(in, line) || line != "epoch,step,split,loss,ppl") {
        throw FormatError("training log CSV missing expected header");
    }
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::istringstream ls(line);
        std::string field;
        LogRow row;
        try {
            std::getline(ls, field, ',');
            row.epoch = std::stoi(field);
            std::getline(ls, field, ',');
            row.step = std::stol(field);
            std::getline(ls, row.split, ',');
            std::getline(ls, field, ',');
            row.loss = std::stod(field);
            std::getline(ls, field, ',');
            row.ppl = std::stod(field);
        } catch (const std::exception&) {
            throw FormatError("training log CSV parse error at line " + std::to_string(line_no));
        }
        log.rows.push_back(std::move(row));
    }
    return log;
}

PaddedBatch pad_batch(const std::vector<ExamplePair>& pairs, int pad_id) {
    if (pairs.empty()) {
        throw InternalError("pad_batch: empty batch");
    }
    std::size_t max_src = 0;
    std::size_t max_tgt = 0;
    for (const ExamplePair& p : pairs) {
        if (p.source.empty() || p.target.size() < 2) {
            throw InternalError("pad_batch: pair violates source/target invariants");
        }
        max_src = std::max(max_src, p.source.size());
        max_tgt = std::max(max_tgt, p.target.size());
    }
    PaddedBatch batch;
    for (const ExamplePair& p : pairs) {
        std::vector<int> src = p.source;
        src.resize(max_src, pad_id);
        std::vector<int> tgt = p.target;
        tgt.resize(max_tgt, pad_id);
        std::vector<std::uint8_t> sp(max_src, 0);
        std::fill(sp.begin() + static_cast<long>(p.source.size()), sp.end(), 1);
        std::vector<std::uint8_t> tp(max_tgt, 0);
        std::fill(tp.begin() + static_cast<long>(p.target.size()), tp.end(), 1);
        batch.sources.push_back(std::move(src));
        batch.targets.push_back(std::move(tgt));
        batch.source_pad.push_back(std::move(sp));
        batch.target_pad.push_back(std::move(tp));
    }
    return batch;
}

namespace {

struct BatchLossNodes {
    Node* loss = nullptr; // token-weighted mean over the batch
    long tokens = 0;
};

BatchLossNodes batch_loss_graph(Graph& g, ModelForward& fwd, const PaddedBatch& batch) {
    long total_tokens = 0;
    std::vector<std::pair<Node*, int>> parts;
    parts.reserve(batch.sources.size());
    for (std::size_t i = 0; i < batch.sources.size(); ++i) {
        ExamplePair padded;
        padded.source = batch.sources[i];
        padded.target = batch.targets[i];
        Node* mean_nll = fwd.pair_loss(padded);
        const int tokens = supervised_token_count(padded);
        parts.emplace_back(mean_nll, tokens);
        total_tokens += tokens;
    }
    Node* acc = nullptr;
    for (const auto& [mean_nll, tokens] : parts) {
        Node* weighted = g.affine(mean_nll, static_cast<double>(tokens) /
                                                static_cast<double>(total_tokens), 0.0);
        acc = acc == nullptr ? weighted : g.add(acc, weighted);
    }
    return {acc, total_tokens};
}

} // namespace

double padded_batch_loss(const Checkpoint& ckpt, const PaddedBatch& batch) {
    Graph g;
    ModelForward fwd(g, ckpt, false, nullptr);
    return batch_loss_graph(g, fwd, batch).loss->value.data[0];
}

double eval_loss(const Checkpoint& ckpt, const std::vector<ExamplePair>& pairs) {
    if (pairs.empty()) {
        throw InternalError("eval_loss: empty pair list");
    }
    double total_nll = 0.0;
    long total_tokens = 0;
    for (const ExamplePair& p : pairs) {
        const double mean_nll = forward_loss(p, ckpt, false);
        const int tokens = supervised_token_count(p);
        total_nll += mean_nll * tokens;
        total_tokens += tokens;
    }
    return total_nll / static_cast<double>(total_tokens);
}

TrainResult train(Checkpoint initial, const CorpusSplit& split, const TrainConfig& config,
                  const CheckpointSink& sink) {
    config.validate();
    initial.config.validate();
    if (config.epochs > 0 && split.train.empty()) {
        throw ConfigError("training requires a non-empty train split");
    }

    TrainResult result;
    result.checkpoint = std::move(initial);
    Checkpoint& ckpt = result.checkpoint;

    AdamState adam = AdamState::for_params(ckpt.params);
    Rng dropout_rng(config.seed);
    long global_step = 0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<std::size_t> order(split.train.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        Rng shuffle_rng(config.seed ^ static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double epoch_nll = 0.0;
        long epoch_tokens = 0;
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
            std::vector<ExamplePair> chunk;
            chunk.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) {
                chunk.push_back(split.train[order[i]]);
            }
            const PaddedBatch batch = pad_batch(chunk, kPadId);

            Graph g;
            ModelForward fwd(g, ckpt, true, &dropout_rng);
            const BatchLossNodes bl = batch_loss_graph(g, fwd, batch);
            g.backward(bl.loss);

            std::map<std::string, Tensor> grads;
            for (const auto& [name, tensor] : ckpt.params) {
                auto it = fwd.param_nodes().find(name);
                grads.emplace(name, it == fwd.param_nodes().end() ? Tensor::zeros_like(tensor)
                                                                  : it->second->grad);
            }
            clip_gradients(grads, config.clip_norm);
            adam_step(ckpt.params, grads, adam, config);

            const double batch_loss = bl.loss->value.data[0];
            epoch_nll += batch_loss * static_cast<double>(bl.tokens);
            epoch_tokens += bl.tokens;
            ++global_step;
            if (config.log_every > 0 && global_step % config.log_every == 0) {
                result.log.rows.push_back(
                    {epoch, global_step, "train", batch_loss, std::exp(batch_loss)});
            }
        }

        const double train_loss = epoch_nll / static_cast<double>(epoch_tokens);
        result.log.rows.push_back({epoch, global_step, "train", train_loss,
                                   std::exp(train_loss)});
        if (!split.validation.empty()) {
            const double val = eval_loss(ckpt, split.validation);
            result.log.rows.push_back({epoch, global_step, "val", val, std::exp(val)});
        }
        if (sink && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
            sink(epoch, ckpt);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Loss-curve SVG
// ---------------------------------------------------------------------------

namespace {

struct Series {
    std::vector<double> xs;
    std::vector<double> ys;
};

// Per-epoch mean of the given split's rows.
Series epoch_series(const TrainingLog& log, const std::string& split) {
    std::map<int, std::pair<double, int>> by_epoch;
    for (const LogRow& row : log.rows) {
        if (row.split == split) {
            auto& [sum, n] = by_epoch[row.epoch];
            sum += row.loss;
            n += 1;
        }
    }
    Series s;
    for (const auto& [epoch, agg] : by_epoch) {
        s.xs.push_back(static_cast<double>(epoch));
        s.ys.push_back(agg.first / agg.second);
    }
    return s;
}

std::string polyline(const Series& s, double x0, double x1, double y0, double y1, double w,
                     double h, double margin, const char* color) {
    std::ostringstream os;
    os << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
        const double px = margin + (s.xs[i] - x0) / (x1 - x0) * (w - 2 * margin);
        const double py = h - margin - (s.ys[i] - y0) / (y1 - y0) * (h - 2 * margin);
        os << px << ',' << py << ' ';
    }
    os << "\"/>\n";
    return os.str();
}

} // namespace

void write_loss_curve_svg(const TrainingLog& log, std::ostream& out) {
    const Series train = epoch_series(log, "train");
    const Series val = epoch_series(log, "val");

    const double w = 640.0;
    const double h = 420.0;
    const double margin = 50.0;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    out << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "  <line x1=\"" << margin << "\" y1=\"" << h - margin << "\" x2=\"" << w - margin
        << "\" y2=\"" << h - margin << "\" stroke=\"black\"/>\n";
    out << "  <line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin
        << "\" y2=\"" << h - margin << "\" stroke=\"black\"/>\n";
    out << "  <text x=\"" << w / 2 << "\" y=\"" << h - 12
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">Epoch</text>\n";
    out << "  <text x=\"16\" y=\"" << h / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" transform=\"rotate(-90 16 "
        << h / 2 << ")\">Loss value</text>\n";

    if (!train.xs.empty()) {
        double x0 = train.xs.front();
        double x1 = train.xs.back();
        double y0 = train.ys[0];
        double y1 = train.ys[0];
        for (const Series* s : {&train, &val}) {
            for (double y : s->ys) {
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
        }
        if (x1 == x0) {
            x1 = x0 + 1;
        }
        if (y1 == y0) {
            y1 = y0 + 1;
        }
        out << polyline(train, x0, x1, y0, y1, w, h, margin, "#1f77b4");
        if (!val.xs.empty()) {
            out << polyline(val, x0, x1, y0, y1, w, h, margin, "#d62728");
        }
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "  <text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"12\" "
                      "fill=\"#1f77b4\">train</text>\n",
                      w - margin - 60.0, margin + 14.0);
        out << buf;
        if (!val.xs.empty()) {
            std::snprintf(buf, sizeof buf,
                          "  <text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"12\" "
                          "fill=\"#d62728\">val</text>\n",
                          w - margin - 60.0, margin + 30.0);
            out << buf;
        }
    }
    out << "</svg>\n";
}

} // namespace gfus
