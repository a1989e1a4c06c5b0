#include "umif/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "umif/common.hpp"

namespace umif {

namespace {

void require_binary(const VoxelGrid& gt, const char* op) {
  for (float v : gt.values)
    if (v != 0.0f && v != 1.0f)
      throw ContractError(std::string(op) + ": ground truth grid is not binary");
}

void require_same_side(const VoxelGrid& a, const VoxelGrid& b, const char* op) {
  if (a.side != b.side)
    throw ContractError(std::string(op) + ": side mismatch " + std::to_string(a.side) + " vs " +
                        std::to_string(b.side));
}

}  // namespace

double dice_loss(const VoxelGrid& probs, const VoxelGrid& gt, double eps) {
  require_same_side(probs, gt, "dice_loss");
  require_binary(gt, "dice_loss");
  double num1 = 0, den1 = 0, num2 = 0, den2 = 0;
  for (size_t i = 0; i < probs.values.size(); ++i) {
    double p = double(probs.values[i]);
    double g = double(gt.values[i]);
    num1 += p * g;
    den1 += p + g;
    num2 += (1.0 - p) * (1.0 - g);
    den2 += 2.0 - p - g;
  }
  den1 = std::max(den1, eps);
  den2 = std::max(den2, eps);
  return 1.0 - num1 / den1 - num2 / den2;
}

double iou(const VoxelGrid& probs, const VoxelGrid& gt, double threshold) {
  require_same_side(probs, gt, "iou");
  require_binary(gt, "iou");
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < probs.values.size(); ++i) {
    bool p = double(probs.values[i]) > threshold;
    bool g = gt.values[i] != 0.0f;
    inter += (p && g) ? 1 : 0;
    uni += (p || g) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return double(inter) / double(uni);
}

std::vector<ExposedFace> exposed_faces(const VoxelGrid& binary) {
  static const int off[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0},
                                {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};
  std::vector<ExposedFace> faces;
  for (int x = 0; x < binary.side; ++x)
    for (int y = 0; y < binary.side; ++y)
      for (int z = 0; z < binary.side; ++z) {
        if (binary.at(x, y, z) == 0.0f) continue;
        for (int d = 0; d < 6; ++d) {
          int nx = x + off[d][0], ny = y + off[d][1], nz = z + off[d][2];
          if (!binary.in_bounds(nx, ny, nz) || binary.at(nx, ny, nz) == 0.0f)
            faces.push_back({x, y, z, d});
        }
      }
  return faces;
}

PointCloud extract_surface_points(const VoxelGrid& binary, int64_t m, uint64_t seed) {
  auto faces = exposed_faces(binary);
  if (faces.empty())
    throw ContractError("extract_surface_points: grid has no occupied voxels");
  Rng rng(seed);
  PointCloud out;
  out.points.reserve(size_t(m));
  double inv = 1.0 / double(binary.side);
  for (int64_t i = 0; i < m; ++i) {
    size_t fi = size_t(std::min<int64_t>(int64_t(faces.size()) - 1,
                                         int64_t(rng.uniform() * double(faces.size()))));
    const ExposedFace& f = faces[fi];
    double u = rng.uniform();
    double v = rng.uniform();
    double px, py, pz;
    switch (f.dir) {
      case 0: px = f.x;     py = f.y + u; pz = f.z + v; break;
      case 1: px = f.x + 1; py = f.y + u; pz = f.z + v; break;
      case 2: px = f.x + u; py = f.y;     pz = f.z + v; break;
      case 3: px = f.x + u; py = f.y + 1; pz = f.z + v; break;
      case 4: px = f.x + u; py = f.y + v; pz = f.z;     break;
      default: px = f.x + u; py = f.y + v; pz = f.z + 1; break;
    }
    out.points.push_back({px * inv, py * inv, pz * inv});
  }
  return out;
}

namespace {

double dist2_3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// Fraction of `from` points whose nearest `to` point lies strictly within d,
// via a cell hash with cell size d (a hit can only be in the 27 surrounding
// cells).
double coverage(const std::vector<std::array<double, 3>>& from,
                const std::vector<std::array<double, 3>>& to, double d) {
  auto key = [](int64_t cx, int64_t cy, int64_t cz) {
    return ((cx + 4) * (1 << 20) + (cy + 4)) * (1 << 20) + (cz + 4);
  };
  std::unordered_map<int64_t, std::vector<size_t>> cells;
  for (size_t i = 0; i < to.size(); ++i) {
    int64_t cx = int64_t(std::floor(to[i][0] / d));
    int64_t cy = int64_t(std::floor(to[i][1] / d));
    int64_t cz = int64_t(std::floor(to[i][2] / d));
    cells[key(cx, cy, cz)].push_back(i);
  }
  double d2 = d * d;
  int64_t hits = 0;
  for (const auto& p : from) {
    int64_t cx = int64_t(std::floor(p[0] / d));
    int64_t cy = int64_t(std::floor(p[1] / d));
    int64_t cz = int64_t(std::floor(p[2] / d));
    bool hit = false;
    for (int64_t ox = -1; ox <= 1 && !hit; ++ox)
      for (int64_t oy = -1; oy <= 1 && !hit; ++oy)
        for (int64_t oz = -1; oz <= 1 && !hit; ++oz) {
          auto it = cells.find(key(cx + ox, cy + oy, cz + oz));
          if (it == cells.end()) continue;
          for (size_t j : it->second)
            if (dist2_3(p, to[j]) < d2) {
              hit = true;
              break;
            }
        }
    hits += hit ? 1 : 0;
  }
  return double(hits) / double(from.size());
}

}  // namespace

double f_score(const PointCloud& recon, const PointCloud& gt, double d) {
  if (recon.points.empty() || gt.points.empty())
    throw ContractError("f_score: point clouds must be non-empty");
  double precision = coverage(recon.points, gt.points, d);
  double recall = coverage(gt.points, recon.points, d);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double f_score_oracle(const PointCloud& recon, const PointCloud& gt, double d) {
  if (recon.points.empty() || gt.points.empty())
    throw ContractError("f_score_oracle: point clouds must be non-empty");
  double d2 = d * d;
  auto frac_within = [d2](const std::vector<std::array<double, 3>>& from,
                          const std::vector<std::array<double, 3>>& to) {
    int64_t hits = 0;
    for (const auto& p : from) {
      double best = dist2_3(p, to[0]);
      for (size_t j = 1; j < to.size(); ++j) best = std::min(best, dist2_3(p, to[j]));
      hits += best < d2 ? 1 : 0;
    }
    return double(hits) / double(from.size());
  };
  double precision = frac_within(recon.points, gt.points);
  double recall = frac_within(gt.points, recon.points);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace umif
