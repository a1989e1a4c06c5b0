#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "umif/decoder.hpp"
#include "umif/encoder.hpp"

namespace umif {

// Flat key=value run configuration. Defaults are the toy profile (every
// mechanism exercised, trains in minutes); `profile=paper` switches to the
// published 224^2 / 768-d geometry. Unknown keys are rejected. Precedence:
// defaults < config file < UMIF_* environment < command line.
struct RunConfig {
  std::string profile = "toy";

  uint64_t seed = 7;

  // encoder geometry
  int image_size = 32;
  int patch_size = 8;
  int channels = 1;
  int dim = 64;
  int depth = 4;
  int heads = 4;
  int mlp_ratio = 4;
  int ivdb_period = 2;
  bool ivdb_once = false;
  int k = 3;
  int k_dpc = 5;
  int g = 16;
  std::string rectification = "offset_weight";  // fc_mapping | offset | offset_weight
  std::string merger = "stm";                   // pbm | abm | stm

  // decoder geometry
  int query_count = 512;
  int decoder_depth = 1;
  int voxel_size = 16;
  int upsample_stages = 1;

  // training & evaluation
  double threshold = 0.5;
  int n_views_train = 3;
  int batch_size = 4;
  int epochs = 30;
  double lr = 1e-3;
  std::vector<int> lr_decay_epochs = {50, 120};
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  // data
  int n_shapes = 200;
  int fscore_points = 1024;
  double fscore_distance = 0.01;

  // paths
  std::string dataset_dir = "data";
  std::string checkpoint_dir = "checkpoints";
  std::string report_dir = "reports";

  static RunConfig toy();
  static RunConfig paper();

  static const std::vector<std::string>& keys();
  void set(const std::string& key, const std::string& value);  // throws UsageError
  std::string get(const std::string& key) const;

  std::string serialize() const;
  static RunConfig deserialize(const std::string& text);

  void load_file(const std::string& path);
  void apply_env();

  void validate() const;
  EncoderConfig encoder_config() const;
  DecoderConfig decoder_config() const;
};

}  // namespace umif
