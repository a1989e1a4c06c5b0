#pragma once

// Dice loss (both as a differentiable graph and as a plain double-precision
// evaluation), voxel IoU, exposed-face surface sampling, and point-cloud
// F-Score.

#include <array>
#include <vector>

#include "umif/tensor.hpp"
#include "umif/voxel.hpp"

namespace umif {

// Two-term overlap loss over occupancy probabilities p and binary gt:
//   L = 1 - sum(p*gt)/sum(p+gt) - sum((1-p)(1-gt))/sum(2-p-gt)
// Each denominator is floored at eps so degenerate all-ones inputs stay
// finite; the floor leaves non-degenerate values bit-exact.
template <class S>
Tensor<S> dice_loss_graph(const Tensor<S>& p, const Tensor<S>& gt, double eps = 1e-8) {
  require_same_shape(p, gt, "dice_loss");
  Tensor<S> one_grid = Tensor<S>::full(p.shape(), S(1));
  Tensor<S> not_p = sub(one_grid, p);
  Tensor<S> not_gt = sub(one_grid, gt);

  Tensor<S> eps_leaf = Tensor<S>::leaf(Shape{1}, {S(eps)}, false);
  auto floored = [&](const Tensor<S>& den) {
    return reduce_max(concat<S>({reshape(den, Shape{1}), eps_leaf}, 0), 0);
  };

  Tensor<S> num1 = sum_all(mul(p, gt));
  Tensor<S> den1 = floored(add(sum_all(p), sum_all(gt)));
  Tensor<S> num2 = sum_all(mul(not_p, not_gt));
  Tensor<S> den2 = floored(add(sum_all(not_p), sum_all(not_gt)));

  Tensor<S> one = Tensor<S>::scalar(S(1));
  return sub(sub(one, div(num1, den1)), div(num2, den2)).set_label("dice_loss");
}

// Plain evaluation in double precision; same formula and epsilon floor.
double dice_loss(const VoxelGrid& probs, const VoxelGrid& gt, double eps = 1e-8);

// |{p>t} ∩ {gt=1}| / |{p>t} ∪ {gt=1}|; an empty union counts as 1 (two empty
// shapes agree).
double iou(const VoxelGrid& probs, const VoxelGrid& gt, double threshold);

struct PointCloud {
  std::vector<std::array<double, 3>> points;  // all coordinates in [0,1]
};

// An occupied voxel's face toward an empty or out-of-bounds neighbor.
// dir: 0 -x, 1 +x, 2 -y, 3 +y, 4 -z, 5 +z.
struct ExposedFace {
  int x, y, z, dir;
};

std::vector<ExposedFace> exposed_faces(const VoxelGrid& binary);

// m points drawn uniformly over the exposed faces (all faces are unit
// squares), coordinates normalized by the grid side. Deterministic per seed.
PointCloud extract_surface_points(const VoxelGrid& binary, int64_t m, uint64_t seed);

// F-Score at distance threshold d: harmonic mean of precision (fraction of
// reconstruction points within d of ground truth) and recall (fraction of
// ground-truth points within d of the reconstruction). 0 when both vanish.
// Uses a uniform cell hash; the oracle below is the naive all-pairs scan.
double f_score(const PointCloud& recon, const PointCloud& gt, double d = 0.01);
double f_score_oracle(const PointCloud& recon, const PointCloud& gt, double d = 0.01);

}  // namespace umif
