#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "umif/runconfig.hpp"

using namespace umif;

TEST_CASE("defaults are the toy profile and serialize round trips") {
  RunConfig cfg;
  CHECK(cfg.profile == "toy");
  CHECK(cfg.image_size == 32);
  CHECK(cfg.patch_size == 8);
  CHECK(cfg.encoder_config().tokens_per_view() == 16);
  CHECK(cfg.dim == 64);
  CHECK(cfg.depth == 4);
  CHECK(cfg.ivdb_period == 2);
  CHECK(cfg.k == 3);
  CHECK(cfg.k_dpc == 5);
  CHECK(cfg.g == 16);
  CHECK(cfg.query_count == 512);
  CHECK(cfg.voxel_size == 16);
  CHECK(cfg.n_views_train == 3);
  cfg.validate();

  RunConfig back = RunConfig::deserialize(cfg.serialize());
  CHECK(back.serialize() == cfg.serialize());
}

TEST_CASE("paper profile carries the published values") {
  RunConfig p = RunConfig::paper();
  CHECK(p.image_size == 224);
  CHECK(p.patch_size == 16);
  CHECK(p.encoder_config().tokens_per_view() == 196);
  CHECK(p.dim == 768);
  CHECK(p.depth == 12);
  CHECK(p.ivdb_period == 3);
  CHECK(p.k == 5);
  CHECK(p.k_dpc == 15);
  CHECK(p.g == 196);
  CHECK(p.query_count == 64);
  CHECK(p.decoder_depth == 8);
  CHECK(p.voxel_size == 32);
  CHECK(p.threshold == 0.5);
  CHECK(p.lr == 1e-4);
  CHECK(p.lr_decay_epochs == std::vector<int>{50, 120});
  CHECK(p.batch_size == 32);
  CHECK(p.epochs == 150);
  CHECK(p.n_views_train == 3);
  p.validate();
}

TEST_CASE("unknown keys and malformed values are rejected") {
  RunConfig cfg;
  CHECK_THROWS_AS(cfg.set("not_a_key", "1"), UsageError);
  CHECK_THROWS_AS(cfg.set("dim", "abc"), UsageError);
  CHECK_THROWS_AS(cfg.set("ivdb_once", "definitely"), UsageError);
  CHECK_THROWS_AS(cfg.set("profile", "huge"), UsageError);
  CHECK_THROWS_AS(RunConfig::deserialize("dim 64\n"), UsageError);
}

TEST_CASE("config file loading and environment overrides") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "umif_test_cfg";
  fs::create_directories(dir);
  auto file = dir / "run.cfg";
  {
    std::ofstream os(file);
    os << "# comment line\n\ndim=32\nepochs=5\nlr_decay_epochs=2,4\n";
  }
  RunConfig cfg;
  cfg.load_file(file.string());
  CHECK(cfg.dim == 32);
  CHECK(cfg.epochs == 5);
  CHECK(cfg.lr_decay_epochs == std::vector<int>{2, 4});

  setenv("UMIF_DIM", "48", 1);
  cfg.apply_env();
  CHECK(cfg.dim == 48);
  unsetenv("UMIF_DIM");
  fs::remove_all(dir);
}

TEST_CASE("validation catches inconsistent geometry") {
  RunConfig cfg;
  cfg.image_size = 30;  // not divisible by 8
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = RunConfig();
  cfg.query_count = 9;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = RunConfig();
  cfg.threshold = 1.5;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = RunConfig();
  cfg.merger = "pbm";  // g=16 == T ok
  cfg.validate();
  cfg.g = 8;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
}
