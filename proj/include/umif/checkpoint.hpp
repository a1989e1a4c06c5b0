#pragma once

// Versioned binary checkpoint: magic "UMIF", u32 version, u32 parameter
// count, then per parameter (u32 name length, UTF-8 name, u32 rank, u64 dims,
// raw float32 little-endian scalars). A trailer carries the serialized run
// config and, optionally, optimizer state so interrupted runs resume
// bit-exactly. Round trips are byte-exact.

#include <optional>
#include <string>

#include "umif/optim.hpp"

namespace umif {

struct CheckpointTrailer {
  std::string config_text;
  uint32_t epochs_done = 0;
  bool has_optimizer = false;
  int64_t step_count = 0;
  std::vector<std::vector<float>> m, v;  // per-parameter moments, store order
};

void save_checkpoint(const std::string& path, const ParamStore<float>& params,
                     const CheckpointTrailer& trailer);

// Loads values into an existing store; every stored name/shape must match a
// parameter in the store and vice versa.
CheckpointTrailer load_checkpoint(const std::string& path, ParamStore<float>& params);

// Reads only the embedded config text (to build the model before loading).
std::string read_checkpoint_config(const std::string& path);

}  // namespace umif
