#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "umif/dataset.hpp"

using namespace umif;
namespace fs = std::filesystem;

namespace {
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("umif_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::vector<uint8_t> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(is)),
                              std::istreambuf_iterator<char>());
}
}  // namespace

TEST_CASE("gen_shape is deterministic and respects occupancy bounds") {
  for (uint64_t seed : {0ull, 1ull, 17ull, 123456789ull}) {
    SyntheticShape a = gen_shape(seed, 16);
    SyntheticShape b = gen_shape(seed, 16);
    CHECK(a.voxel.values == b.voxel.values);
    CHECK(recipe_to_string(a.recipe) == recipe_to_string(b.recipe));
    double frac = double(a.voxel.occupied()) / double(a.voxel.count());
    CHECK(frac >= 0.01);
    CHECK(frac <= 0.90);
  }
  CHECK_THROWS_AS(gen_shape(1, 12), ContractError);
}

TEST_CASE("recipes round-trip through their string form") {
  SyntheticShape s = gen_shape(99, 16);
  Recipe r = parse_recipe(recipe_to_string(s.recipe));
  CHECK(voxelize(r, 16).values == s.voxel.values);
  CHECK_THROWS_AS(parse_recipe("noodle(1,2)"), ParseError);
  CHECK_THROWS_AS(parse_recipe("box(1,2)"), ParseError);
}

TEST_CASE("centered box occupancy is exact") {
  Recipe r;
  Primitive b;
  b.kind = Primitive::Kind::Box;
  b.p = {8, 8, 8, 2, 2, 2};  // half extents 2 -> covers centers in (6,10), 4 per axis
  r.push_back(b);
  VoxelGrid g = voxelize(r, 16);
  CHECK(g.occupied() == 4 * 4 * 4);
}

TEST_CASE("centered sphere occupancy is close to the analytic volume") {
  Recipe r;
  Primitive s;
  s.kind = Primitive::Kind::Sphere;
  s.p = {8, 8, 8, 4, 0, 0};
  r.push_back(s);
  VoxelGrid g = voxelize(r, 16);
  double analytic = 4.0 / 3.0 * 3.14159265358979323846 * 4 * 4 * 4;
  CHECK(std::abs(double(g.occupied()) - analytic) / analytic < 0.10);
}

TEST_CASE("renders: axis projection of a full cube is all ones, empty is zero") {
  VoxelGrid cube(8);
  for (auto& v : cube.values) v = 1.0f;
  Image im = render_view(cube, {0, 0, 1}, 16, 16);
  for (float v : im.values) CHECK(v == 1.0f);
  VoxelGrid empty(8);
  Image im0 = render_view(empty, {0, 0, 1}, 16, 16);
  for (float v : im0.values) CHECK(v == 0.0f);
}

TEST_CASE("single voxel projects to the hand-computed pixel for each axis") {
  VoxelGrid g(8);
  g.at(2, 5, 3) = 1.0f;
  // +z view: image indexes (x, y)
  Image z = render_view(g, {0, 0, 1}, 8, 8);
  CHECK(z.at(2, 5) == 1.0f);
  int lit = 0;
  for (float v : z.values) lit += v != 0.0f;
  CHECK(lit == 1);
  // +x view: rotation takes +z to +x; the image still has exactly one pixel
  Image x = render_view(g, {1, 0, 0}, 8, 8);
  lit = 0;
  for (float v : x.values) lit += v != 0.0f;
  CHECK(lit == 1);
}

TEST_CASE("24 fixed directions, unit norm, closed under negation") {
  const auto& dirs = view_directions();
  CHECK(dirs.size() == 24);
  for (const auto& d : dirs) {
    double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
    bool has_neg = false;
    for (const auto& e : dirs)
      has_neg = has_neg || (std::abs(e[0] + d[0]) < 1e-12 && std::abs(e[1] + d[1]) < 1e-12 &&
                            std::abs(e[2] + d[2]) < 1e-12);
    CHECK(has_neg);
  }
}

TEST_CASE("antipodal renders are exact mirrors") {
  VoxelGrid g = gen_shape(2024, 16).voxel;
  for (const auto& d : view_directions()) {
    Image a = render_view(g, d, 32, 32);
    Image b = render_view(g, {-d[0], -d[1], -d[2]}, 32, 32);
    for (int r = 0; r < 32; ++r)
      for (int c = 0; c < 32; ++c)
        if (a.at(r, c) != b.at(r, 31 - c)) {
          CAPTURE(d[0]);
          CAPTURE(d[1]);
          CAPTURE(d[2]);
          REQUIRE(a.at(r, c) == b.at(r, 31 - c));
        }
  }
}

TEST_CASE("binvox fixture, errors, and round trip") {
  std::string hdr = "#binvox 1\ndim 2 2 2\ndata\n";
  std::vector<uint8_t> fx(hdr.begin(), hdr.end());
  fx.push_back(1);
  fx.push_back(8);
  VoxelGrid g = read_binvox(fx);
  CHECK(g.side == 2);
  for (float v : g.values) CHECK(v == 1.0f);

  std::vector<uint8_t> bad_magic = fx;
  bad_magic[1] = 'B';
  CHECK_THROWS_AS(read_binvox(bad_magic), ParseError);

  std::vector<uint8_t> odd(hdr.begin(), hdr.end());
  odd.push_back(1);
  CHECK_THROWS_AS(read_binvox(odd), ParseError);

  std::vector<uint8_t> short_rle(hdr.begin(), hdr.end());
  short_rle.push_back(1);
  short_rle.push_back(4);  // only 4 of 8 voxels
  CHECK_THROWS_AS(read_binvox(short_rle), ParseError);

  std::string noncube = "#binvox 1\ndim 2 3 2\ndata\n";
  std::vector<uint8_t> nc(noncube.begin(), noncube.end());
  nc.push_back(1);
  nc.push_back(12);
  CHECK_THROWS_AS(read_binvox(nc), ParseError);

  VoxelGrid shape = gen_shape(7, 16).voxel;
  CHECK(read_binvox(write_binvox(shape)).values == shape.values);
}

TEST_CASE("binvox axis order is x slowest, then z, then y") {
  // one occupied voxel at file position x=1,z=0,y=0 of a 2^3 grid
  std::string hdr = "#binvox 1\ndim 2 2 2\ndata\n";
  std::vector<uint8_t> fx(hdr.begin(), hdr.end());
  fx.push_back(0);
  fx.push_back(4);
  fx.push_back(1);
  fx.push_back(1);
  fx.push_back(0);
  fx.push_back(3);
  VoxelGrid g = read_binvox(fx);
  CHECK(g.occupied() == 1);
  CHECK(g.at(1, 0, 0) == 1.0f);
}

TEST_CASE("voxg and imgf round trips are byte exact") {
  TempDir tmp("io");
  Rng rng(1);
  VoxelGrid g(8);
  for (auto& v : g.values) v = float(rng.uniform());
  auto p1 = tmp.path / "a.voxg";
  auto p2 = tmp.path / "b.voxg";
  write_voxg(p1.string(), g);
  write_voxg(p2.string(), read_voxg(p1.string()));
  CHECK(slurp(p1) == slurp(p2));

  Image im;
  im.h = 3;
  im.w = 5;
  im.values = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
  auto q1 = tmp.path / "a.imgf";
  auto q2 = tmp.path / "b.imgf";
  write_imgf(q1.string(), im);
  Image back = read_imgf(q1.string());
  CHECK(back.h == 3);
  CHECK(back.w == 5);
  write_imgf(q2.string(), back);
  CHECK(slurp(q1) == slurp(q2));
}

TEST_CASE("dataset generation is idempotent and splits by seed parity") {
  TempDir tmp("ds");
  auto d1 = tmp.path / "a";
  auto d2 = tmp.path / "b";
  generate_dataset(d1.string(), 40, 8, 16, 16);
  generate_dataset(d2.string(), 40, 8, 16, 16);
  for (const auto& entry : fs::directory_iterator(d1)) {
    auto other = d2 / entry.path().filename();
    CHECK(slurp(entry.path()) == slurp(other));
  }
  Dataset ds = load_dataset(d1.string());
  CHECK(ds.samples.size() == 8);
  CHECK(ds.samples[0].views.size() == view_directions().size());
  auto tr = train_indices(ds);
  auto va = val_indices(ds);
  CHECK(tr.size() == 4);
  CHECK(va.size() == 4);
  for (int i : tr) CHECK(ds.samples[static_cast<size_t>(i)].seed % 2 == 0);
  for (int i : va) CHECK(ds.samples[static_cast<size_t>(i)].seed % 2 == 1);
}
