#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "umif/checkpoint.hpp"
#include "umif/model.hpp"

namespace umif {

// Stream tags for the deterministic per-purpose RNG seeds.
constexpr uint64_t kShuffleTag = 0x53485546;    // per-epoch train order
constexpr uint64_t kTrainViewTag = 0x54565731;  // per (epoch, sample) view pick
constexpr uint64_t kEvalViewTag = 0x45565732;   // per-sample eval view order
constexpr uint64_t kSurfaceTag = 0x53504e54;    // surface sampling seeds

struct EpochLog {
  int epoch = 0;  // 0 = untrained evaluation; epoch e is the state after e epochs
  double lr = 0;
  double train_dice = 0;
  double val_dice = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::string last_checkpoint;
};

// Deterministic per-sample evaluation view order (a fixed permutation of the
// stored directions; evaluating n views uses its first n entries, so view
// sets are nested across n).
std::vector<int> eval_view_order(const RunConfig& cfg, uint64_t sample_seed, int stored);

// Trains per the config: per-epoch Dice log rows (epoch 0 is the untrained
// model), a checkpoint per epoch with optimizer state, CSV at
// <report_dir>/train_log.csv. Deterministic given (config, dataset); resuming
// from a checkpoint reproduces the uninterrupted run.
TrainResult train_model(const RunConfig& cfg, const Dataset& ds,
                        const std::string& resume_path = "", std::ostream* progress = nullptr);

struct EvalRow {
  std::string sample_id;  // dataset index, or "mean"
  int n_views = 0;
  double iou_v = 0, fscore_v = 0, dice_v = 0;
};

// Per-sample and mean metrics over the given samples and view counts.
// A prediction that binarizes to an empty grid scores F = 0.
std::vector<EvalRow> evaluate_model(const Model<float>& model, const Dataset& ds,
                                    const std::vector<int>& sample_indices,
                                    const std::vector<int>& n_views_list);

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows);

// Dice loss of the constant-0.5 predictor over the given samples.
double constant_half_dice(const Dataset& ds, const std::vector<int>& indices);

// Convenience for tools: build a model and load a checkpoint that carries its
// own config.
Model<float> load_model_from_checkpoint(const std::string& path, CheckpointTrailer* trailer_out);

}  // namespace umif
