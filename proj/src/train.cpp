#include "umif/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "umif/csv.hpp"

namespace umif {

namespace fs = std::filesystem;

std::vector<int> eval_view_order(const RunConfig& cfg, uint64_t sample_seed, int stored) {
  Rng rng(derive_seed(cfg.seed, kEvalViewTag, sample_seed));
  std::vector<int> order(static_cast<size_t>(stored));
  for (int i = 0; i < stored; ++i) order[size_t(i)] = i;
  rng.shuffle(order);
  return order;
}

namespace {

std::vector<int> train_views(const RunConfig& cfg, int epoch, int sample_index, int stored) {
  Rng rng(derive_seed(cfg.seed, kTrainViewTag, uint64_t(epoch), uint64_t(sample_index)));
  return rng.sample_without_replacement(stored, cfg.n_views_train);
}

std::vector<const Image*> select_views(const LoadedSample& s, const std::vector<int>& which) {
  std::vector<const Image*> out;
  out.reserve(which.size());
  for (int v : which) out.push_back(&s.views[size_t(v)]);
  return out;
}

double mean_val_dice(const Model<float>& model, const Dataset& ds, const std::vector<int>& idx,
                     int n_views) {
  double sum = 0;
  for (int i : idx) {
    const LoadedSample& s = ds.samples[size_t(i)];
    auto order = eval_view_order(model.cfg, s.seed, int(s.views.size()));
    order.resize(size_t(n_views));
    Tensor<float> probs = model.forward_probs(select_views(s, order));
    sum += dice_loss(to_voxel_grid(probs), s.voxel);
  }
  return sum / double(idx.size());
}

std::string checkpoint_name(const RunConfig& cfg, int epochs_done) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "epoch_%03d.umif", epochs_done);
  return (fs::path(cfg.checkpoint_dir) / buf).string();
}

}  // namespace

double constant_half_dice(const Dataset& ds, const std::vector<int>& indices) {
  double sum = 0;
  for (int i : indices) {
    VoxelGrid half(ds.samples[size_t(i)].voxel.side);
    for (auto& v : half.values) v = 0.5f;
    sum += dice_loss(half, ds.samples[size_t(i)].voxel);
  }
  return sum / double(indices.size());
}

TrainResult train_model(const RunConfig& cfg, const Dataset& ds, const std::string& resume_path,
                        std::ostream* progress) {
  cfg.validate();
  if (ds.samples.empty()) throw ContractError("train: dataset is empty");
  for (const auto& s : ds.samples)
    if (int(s.views.size()) < cfg.n_views_train)
      throw UsageError("train: n_views_train=" + std::to_string(cfg.n_views_train) +
                       " exceeds stored views " + std::to_string(s.views.size()));

  Model<float> model(cfg);
  OptimizerState<float> opt;
  opt.beta1 = cfg.beta1;
  opt.beta2 = cfg.beta2;
  opt.weight_decay = cfg.weight_decay;
  opt.epsilon = cfg.adam_eps;

  int start_epoch = 0;
  if (!resume_path.empty()) {
    CheckpointTrailer tr = load_checkpoint(resume_path, model.params);
    start_epoch = int(tr.epochs_done);
    if (tr.has_optimizer) {
      opt.step_count = tr.step_count;
      opt.m = std::move(tr.m);
      opt.v = std::move(tr.v);
    }
  }

  fs::create_directories(cfg.checkpoint_dir);
  fs::create_directories(cfg.report_dir);
  std::string csv_path = (fs::path(cfg.report_dir) / "train_log.csv").string();
  CsvWriter csv(csv_path, {"epoch", "lr", "train_dice", "val_dice"}, start_epoch > 0);

  auto tr_idx = train_indices(ds);
  auto va_idx = val_indices(ds);
  if (tr_idx.empty() || va_idx.empty())
    throw ContractError("train: both parity splits must be non-empty (got " +
                        std::to_string(tr_idx.size()) + " train / " +
                        std::to_string(va_idx.size()) + " val)");

  TrainResult result;
  auto log_row = [&](const EpochLog& row) {
    result.log.push_back(row);
    csv.row({std::to_string(row.epoch), fmt_g(row.lr), fmt_g(row.train_dice),
             fmt_g(row.val_dice)});
    csv.flush();
    if (progress)
      (*progress) << "epoch " << row.epoch << " lr " << row.lr << " train " << row.train_dice
                  << " val " << row.val_dice << "\n";
  };

  if (start_epoch == 0) {
    EpochLog row;
    row.epoch = 0;
    row.lr = lr_at_epoch(cfg.lr, cfg.lr_decay_epochs, 0);
    row.train_dice = mean_val_dice(model, ds, tr_idx, cfg.n_views_train);
    row.val_dice = mean_val_dice(model, ds, va_idx, cfg.n_views_train);
    log_row(row);
    CheckpointTrailer tr;
    tr.config_text = cfg.serialize();
    tr.epochs_done = 0;
    save_checkpoint(checkpoint_name(cfg, 0), model.params, tr);
    result.last_checkpoint = checkpoint_name(cfg, 0);
  }

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    double lr = lr_at_epoch(cfg.lr, cfg.lr_decay_epochs, epoch);
    opt.learning_rate = lr;

    std::vector<int> order = tr_idx;
    Rng shuffle_rng(derive_seed(cfg.seed, kShuffleTag, uint64_t(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0;
    size_t done = 0;
    while (done < order.size()) {
      size_t batch_n = std::min(size_t(cfg.batch_size), order.size() - done);
      model.params.zero_grad();
      for (size_t b = 0; b < batch_n; ++b) {
        int si = order[done + b];
        const LoadedSample& s = ds.samples[size_t(si)];
        auto which = train_views(cfg, epoch, si, int(s.views.size()));
        try {
          Tensor<float> probs = model.forward_probs(select_views(s, which));
          Tensor<float> loss = model.loss_against(probs, s.voxel);
          loss_sum += double(loss.item());
          backward(scalar_mul(loss, float(1.0 / double(batch_n))));
        } catch (const NumericalError& e) {
          throw NumericalError(std::string(e.what()) + " [epoch " + std::to_string(epoch) +
                               ", sample " + std::to_string(si) + "]");
        }
      }
      adamw_step(model.params, opt);
      done += batch_n;
    }

    EpochLog row;
    row.epoch = epoch + 1;
    row.lr = lr;
    row.train_dice = loss_sum / double(order.size());
    row.val_dice = mean_val_dice(model, ds, va_idx, cfg.n_views_train);
    log_row(row);

    CheckpointTrailer tr;
    tr.config_text = cfg.serialize();
    tr.epochs_done = uint32_t(epoch + 1);
    tr.has_optimizer = true;
    tr.step_count = opt.step_count;
    tr.m = opt.m;
    tr.v = opt.v;
    result.last_checkpoint = checkpoint_name(cfg, epoch + 1);
    save_checkpoint(result.last_checkpoint, model.params, tr);
  }
  return result;
}

std::vector<EvalRow> evaluate_model(const Model<float>& model, const Dataset& ds,
                                    const std::vector<int>& sample_indices,
                                    const std::vector<int>& n_views_list) {
  if (n_views_list.empty()) throw UsageError("eval: empty view-count list");
  for (int i : sample_indices)
    for (int n : n_views_list)
      if (n < 1 || n > int(ds.samples[size_t(i)].views.size()))
        throw UsageError("eval: n=" + std::to_string(n) + " exceeds stored views " +
                         std::to_string(ds.samples[size_t(i)].views.size()));
  const RunConfig& cfg = model.cfg;
  std::vector<EvalRow> rows;
  for (int n : n_views_list) {
    double iou_sum = 0, f_sum = 0, dice_sum = 0;
    for (int i : sample_indices) {
      const LoadedSample& s = ds.samples[size_t(i)];
      auto order = eval_view_order(cfg, s.seed, int(s.views.size()));
      order.resize(size_t(n));
      Tensor<float> probs_t = model.forward_probs(select_views(s, order));
      VoxelGrid probs = to_voxel_grid(probs_t);
      EvalRow row;
      row.sample_id = std::to_string(i);
      row.n_views = n;
      row.dice_v = dice_loss(probs, s.voxel);
      row.iou_v = iou(probs, s.voxel, cfg.threshold);
      VoxelGrid pred_bin = binarize(probs, cfg.threshold);
      if (pred_bin.occupied() == 0) {
        row.fscore_v = 0.0;
      } else {
        // One sampling stream for both clouds: identical grids then yield
        // identical clouds, so a perfect prediction scores exactly 1.
        uint64_t cloud_seed = derive_seed(s.seed, kSurfaceTag);
        PointCloud pc_pred = extract_surface_points(pred_bin, cfg.fscore_points, cloud_seed);
        PointCloud pc_gt = extract_surface_points(s.voxel, cfg.fscore_points, cloud_seed);
        row.fscore_v = f_score(pc_pred, pc_gt, cfg.fscore_distance);
      }
      iou_sum += row.iou_v;
      f_sum += row.fscore_v;
      dice_sum += row.dice_v;
      rows.push_back(row);
    }
    EvalRow mean;
    mean.sample_id = "mean";
    mean.n_views = n;
    mean.iou_v = iou_sum / double(sample_indices.size());
    mean.fscore_v = f_sum / double(sample_indices.size());
    mean.dice_v = dice_sum / double(sample_indices.size());
    rows.push_back(mean);
  }
  return rows;
}

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows) {
  CsvWriter csv(path, {"sample_id", "n_views", "iou", "fscore", "dice"});
  for (const auto& r : rows)
    csv.row({r.sample_id, std::to_string(r.n_views), fmt_g(r.iou_v), fmt_g(r.fscore_v),
             fmt_g(r.dice_v)});
}

Model<float> load_model_from_checkpoint(const std::string& path, CheckpointTrailer* trailer_out) {
  RunConfig cfg = RunConfig::deserialize(read_checkpoint_config(path));
  Model<float> model(cfg);
  CheckpointTrailer tr = load_checkpoint(path, model.params);
  if (trailer_out) *trailer_out = std::move(tr);
  return model;
}

}  // namespace umif
