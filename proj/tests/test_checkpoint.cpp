#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "umif/checkpoint.hpp"
#include "umif/model.hpp"

using namespace umif;
namespace fs = std::filesystem;

namespace {
RunConfig tiny() {
  RunConfig cfg;
  cfg.image_size = 8;
  cfg.patch_size = 4;
  cfg.dim = 8;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.mlp_ratio = 2;
  cfg.ivdb_period = 1;
  cfg.k = 2;
  cfg.k_dpc = 3;
  cfg.g = 4;
  cfg.query_count = 8;
  cfg.decoder_depth = 1;
  cfg.voxel_size = 4;
  cfg.upsample_stages = 1;
  return cfg;
}

std::vector<uint8_t> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(is)),
                              std::istreambuf_iterator<char>());
}
}  // namespace

TEST_CASE("checkpoint round trip is byte exact and restores values") {
  auto dir = fs::temp_directory_path() / "umif_test_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);

  RunConfig cfg = tiny();
  Model<float> m1(cfg);
  Rng rng(5);
  m1.params.randomize(rng, 0.1);
  CheckpointTrailer tr;
  tr.config_text = cfg.serialize();
  tr.epochs_done = 7;
  tr.has_optimizer = true;
  tr.step_count = 123;
  for (auto& p : m1.params.all()) {
    tr.m.emplace_back(static_cast<size_t>(p.tensor.size()), 0.25f);
    tr.v.emplace_back(static_cast<size_t>(p.tensor.size()), 0.5f);
  }
  auto p1 = dir / "a.umif";
  save_checkpoint(p1.string(), m1.params, tr);

  Model<float> m2(cfg);
  CheckpointTrailer back = load_checkpoint(p1.string(), m2.params);
  for (size_t i = 0; i < m1.params.size(); ++i)
    CHECK(m2.params.at(i).tensor.value() == m1.params.at(i).tensor.value());
  CHECK(back.epochs_done == 7);
  CHECK(back.step_count == 123);
  CHECK(back.config_text == cfg.serialize());

  auto p2 = dir / "b.umif";
  save_checkpoint(p2.string(), m2.params, back);
  CHECK(slurp(p1) == slurp(p2));

  CHECK(read_checkpoint_config(p1.string()) == cfg.serialize());
  fs::remove_all(dir);
}

TEST_CASE("checkpoint header layout starts with magic and version") {
  auto dir = fs::temp_directory_path() / "umif_test_ckpt2";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RunConfig cfg = tiny();
  Model<float> m(cfg);
  CheckpointTrailer tr;
  tr.config_text = cfg.serialize();
  auto p = dir / "x.umif";
  save_checkpoint(p.string(), m.params, tr);
  auto bytes = slurp(p);
  REQUIRE(bytes.size() > 12);
  CHECK(bytes[0] == 'U');
  CHECK(bytes[1] == 'M');
  CHECK(bytes[2] == 'I');
  CHECK(bytes[3] == 'F');
  uint32_t version = uint32_t(bytes[4]) | (uint32_t(bytes[5]) << 8) |
                     (uint32_t(bytes[6]) << 16) | (uint32_t(bytes[7]) << 24);
  CHECK(version == 1);
  uint32_t count = uint32_t(bytes[8]) | (uint32_t(bytes[9]) << 8) |
                   (uint32_t(bytes[10]) << 16) | (uint32_t(bytes[11]) << 24);
  CHECK(count == m.params.size());

  // corrupting the magic is rejected
  bytes[0] = 'X';
  auto bad = dir / "bad.umif";
  std::ofstream os(bad, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  os.close();
  Model<float> m2(cfg);
  CHECK_THROWS_AS(load_checkpoint(bad.string(), m2.params), ParseError);
  fs::remove_all(dir);
}

TEST_CASE("shape mismatches are rejected by name") {
  auto dir = fs::temp_directory_path() / "umif_test_ckpt3";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RunConfig cfg = tiny();
  Model<float> m(cfg);
  CheckpointTrailer tr;
  tr.config_text = cfg.serialize();
  auto p = dir / "x.umif";
  save_checkpoint(p.string(), m.params, tr);

  RunConfig other = tiny();
  other.dim = 16;
  Model<float> m2(other);
  CHECK_THROWS_AS(load_checkpoint(p.string(), m2.params), ParseError);
  fs::remove_all(dir);
}
