#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "umif/common.hpp"

namespace umif {

// S^3 occupancy grid, row-major with x slowest: flat = (x*S + y)*S + z.
// Values are probabilities in [0,1] or binary {0,1} depending on context.
struct VoxelGrid {
  int side = 0;
  std::vector<float> values;

  VoxelGrid() = default;
  explicit VoxelGrid(int s) : side(s), values(size_t(s) * size_t(s) * size_t(s), 0.0f) {}

  int64_t count() const { return int64_t(side) * side * side; }
  float& at(int x, int y, int z) {
    return values[size_t((int64_t(x) * side + y) * side + z)];
  }
  float at(int x, int y, int z) const {
    return values[size_t((int64_t(x) * side + y) * side + z)];
  }
  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && x < side && y >= 0 && y < side && z >= 0 && z < side;
  }
  int64_t occupied() const {
    int64_t n = 0;
    for (float v : values)
      if (v != 0.0f) ++n;
    return n;
  }
};

// Strict threshold: value > t becomes 1, everything else 0.
inline VoxelGrid binarize(const VoxelGrid& probs, double t) {
  if (!(t > 0.0 && t < 1.0))
    throw ContractError("binarize: threshold must lie in (0,1), got " + std::to_string(t));
  VoxelGrid out(probs.side);
  for (size_t i = 0; i < probs.values.size(); ++i)
    out.values[i] = probs.values[i] > float(t) ? 1.0f : 0.0f;
  return out;
}

}  // namespace umif
