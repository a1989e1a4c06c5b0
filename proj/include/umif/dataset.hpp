#pragma once

// Synthetic multi-view dataset: seeded primitive shapes voxelized onto an
// S^3 grid, orthographic silhouette renders from a fixed 24-direction set,
// and the on-disk formats (VOXG voxels, IMGF images, binvox ingestion,
// plain-text manifest).

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "umif/common.hpp"
#include "umif/voxel.hpp"

namespace umif {

struct Primitive {
  enum class Kind { Box, Sphere, Cylinder };
  Kind kind = Kind::Box;
  int axis = 2;  // cylinder axis: 0 x, 1 y, 2 z
  // Box: center (cx,cy,cz) + half extents (hx,hy,hz).
  // Sphere: center + radius in p[3].
  // Cylinder: center + radius p[3] + half length p[4] along `axis`.
  std::array<double, 6> p{};
};

using Recipe = std::vector<Primitive>;

std::string recipe_to_string(const Recipe& r);
Recipe parse_recipe(const std::string& s);

// Occupancy test uses voxel centers (i + 0.5) in [0, S] coordinates.
VoxelGrid voxelize(const Recipe& recipe, int side);

struct SyntheticShape {
  uint64_t seed = 0;
  Recipe recipe;
  VoxelGrid voxel;
};

// Union of 1-4 random primitives with occupancy in [1%, 90%]; recipes
// violating the bound are redrawn up to 16 times from the same stream.
SyntheticShape gen_shape(uint64_t seed, int side);

struct Image {
  int h = 0, w = 0;
  std::vector<float> values;
  float at(int r, int c) const { return values[size_t(r) * size_t(w) + size_t(c)]; }
};

// 24 fixed unit view directions: 6 axes, 12 icosahedron vertices, 6 face
// diagonals. The set is closed under negation.
const std::vector<std::array<double, 3>>& view_directions();

// Orthographic silhouette: rotate the grid so +z aligns with the view
// direction (nearest-voxel resampling), take the max over depth, then
// nearest-resize to H x W. Antipodal directions produce exact mirror images
// by construction of the rotation choice.
Image render_view(const VoxelGrid& binary, const std::array<double, 3>& dir, int H, int W);

// --- binary file formats (all little-endian) --------------------------------

void write_voxg(const std::string& path, const VoxelGrid& grid);
VoxelGrid read_voxg(const std::string& path);

void write_imgf(const std::string& path, const Image& img);
Image read_imgf(const std::string& path);

// binvox: RLE occupancy, file axis order [x][z][y]; converted to our
// (x, y, z) order on read. Only cubic grids are accepted.
VoxelGrid read_binvox(const std::vector<uint8_t>& bytes);
VoxelGrid read_binvox_file(const std::string& path);
std::vector<uint8_t> write_binvox(const VoxelGrid& binary);

// --- dataset on disk ---------------------------------------------------------

struct SampleRecord {
  uint64_t seed = 0;
  std::string recipe;
  std::string voxel_path;               // relative to the dataset dir
  std::vector<std::string> view_paths;  // one per stored direction
};

struct LoadedSample {
  uint64_t seed = 0;
  std::string recipe;
  VoxelGrid voxel;
  std::vector<Image> views;
};

struct Dataset {
  std::string dir;
  std::vector<LoadedSample> samples;
};

// Writes shape_%05d.voxg, shape_%05d_view%02d.imgf and manifest.txt.
// Sample i uses seed master_seed + i; regeneration is byte-identical.
void generate_dataset(const std::string& dir, uint64_t master_seed, int n_shapes, int side,
                      int image_size);

Dataset load_dataset(const std::string& dir);

// Split by seed parity: even seeds train, odd seeds validation.
std::vector<int> train_indices(const Dataset& ds);
std::vector<int> val_indices(const Dataset& ds);

}  // namespace umif
