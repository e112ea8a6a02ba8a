#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "gfus/corpus.hpp"
#include "gfus/model.hpp"

namespace gfus {

struct TrainConfig {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 1.0; // <= 0 disables clipping
    int batch_size = 16;
    int epochs = 10;
    std::uint64_t seed = 42;
    int log_every = 0;        // per-step train rows; 0 = epoch summaries only
    int checkpoint_every = 0; // epochs between snapshots; 0 = final only

    void validate() const;
};

struct AdamState {
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    long t = 0;

    static AdamState for_params(const std::map<std::string, Tensor>& params);
};

void adam_step(std::map<std::string, Tensor>& params, const std::map<std::string, Tensor>& grads,
               AdamState& state, const TrainConfig& config);

/// Scales all gradients by clip_norm / ||g|| when the global L2 norm
/// exceeds clip_norm. Returns the pre-clip norm.
double clip_gradients(std::map<std::string, Tensor>& grads, double clip_norm);

struct LogRow {
    int epoch;
    long step;
    std::string split; // "train" or "val"
    double loss;
    double ppl;
};

struct TrainingLog {
    std::vector<LogRow> rows;
};

/// CSV with header epoch,step,split,loss,ppl; loss/ppl at 17 significant
/// digits so values round-trip exactly.
void write_log_csv(const TrainingLog& log, std::ostream& out);
TrainingLog read_log_csv(std::istream& in);

/// Epoch-vs-loss chart of the per-epoch train/val rows.
void write_loss_curve_svg(const TrainingLog& log, std::ostream& out);

struct PaddedBatch {
    std::vector<std::vector<int>> sources;           // right-padded to batch max
    std::vector<std::vector<int>> targets;
    std::vector<std::vector<std::uint8_t>> source_pad;
    std::vector<std::vector<std::uint8_t>> target_pad;
};

PaddedBatch pad_batch(const std::vector<ExamplePair>& pairs, int pad_id);

/// Token-weighted mean NLL of a padded batch in eval mode.
double padded_batch_loss(const Checkpoint& ckpt, const PaddedBatch& batch);

/// Token-weighted mean NLL over pairs in eval mode.
double eval_loss(const Checkpoint& ckpt, const std::vector<ExamplePair>& pairs);

using CheckpointSink = std::function<void(int epoch, const Checkpoint&)>;

struct TrainResult {
    Checkpoint checkpoint;
    TrainingLog log;
};

TrainResult train(Checkpoint initial, const CorpusSplit& split, const TrainConfig& config,
                  const CheckpointSink& sink = {});

} // namespace gfus
