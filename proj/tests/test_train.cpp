#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "umif/train.hpp"
#include "umif/verify.hpp"

using namespace umif;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_train_cfg(const fs::path& root) {
  RunConfig cfg;
  cfg.seed = 77;
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
  cfg.voxel_size = 8;
  cfg.upsample_stages = 2;
  cfg.n_views_train = 2;
  cfg.batch_size = 2;
  cfg.epochs = 2;
  cfg.lr = 1e-3;
  cfg.n_shapes = 6;
  cfg.fscore_points = 128;
  cfg.dataset_dir = (root / "data").string();
  cfg.checkpoint_dir = (root / "ckpt").string();
  cfg.report_dir = (root / "rep").string();
  return cfg;
}

std::vector<uint8_t> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(is)),
                              std::istreambuf_iterator<char>());
}

struct TempRoot {
  fs::path path;
  explicit TempRoot(const std::string& tag) {
    path = fs::temp_directory_path() / ("umif_train_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempRoot() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

}  // namespace

TEST_CASE("untrained model logs exactly the constant-half predictor loss") {
  TempRoot root("baseline");
  RunConfig cfg = tiny_train_cfg(root.path);
  cfg.epochs = 0;
  generate_dataset(cfg.dataset_dir, cfg.seed, cfg.n_shapes, cfg.voxel_size, cfg.image_size);
  Dataset ds = load_dataset(cfg.dataset_dir);
  TrainResult res = train_model(cfg, ds);
  REQUIRE(res.log.size() == 1);
  CHECK(res.log[0].epoch == 0);
  CHECK(res.log[0].val_dice ==
        doctest::Approx(constant_half_dice(ds, val_indices(ds))).epsilon(1e-12));
}

TEST_CASE("training is deterministic and resume reproduces the uninterrupted run") {
  TempRoot root("resume");
  RunConfig cfg = tiny_train_cfg(root.path);
  generate_dataset(cfg.dataset_dir, cfg.seed, cfg.n_shapes, cfg.voxel_size, cfg.image_size);
  Dataset ds = load_dataset(cfg.dataset_dir);

  // two identical runs through the same directories, capturing bytes between
  TrainResult full1 = train_model(cfg, ds);
  auto bytes1 = slurp(full1.last_checkpoint);
  auto log1 = slurp(fs::path(cfg.report_dir) / "train_log.csv");
  fs::remove_all(cfg.checkpoint_dir);
  fs::remove_all(cfg.report_dir);
  TrainResult full2 = train_model(cfg, ds);
  REQUIRE(full1.log.size() == full2.log.size());
  for (size_t i = 0; i < full1.log.size(); ++i) {
    CHECK(full1.log[i].train_dice == full2.log[i].train_dice);
    CHECK(full1.log[i].val_dice == full2.log[i].val_dice);
  }
  CHECK(slurp(full2.last_checkpoint) == bytes1);
  CHECK(slurp(fs::path(cfg.report_dir) / "train_log.csv") == log1);

  // interrupted: one epoch, then resume for the second, same directories
  fs::remove_all(cfg.checkpoint_dir);
  fs::remove_all(cfg.report_dir);
  RunConfig c1 = cfg;
  c1.epochs = 1;
  TrainResult part = train_model(c1, ds);
  TrainResult rest = train_model(cfg, ds, part.last_checkpoint);
  CHECK(rest.log.back().val_dice == full1.log.back().val_dice);
  CHECK(rest.log.back().train_dice == full1.log.back().train_dice);
  CHECK(slurp(rest.last_checkpoint) == bytes1);
}

TEST_CASE("loss log rows carry the scheduled learning rate") {
  TempRoot root("lr");
  RunConfig cfg = tiny_train_cfg(root.path);
  cfg.epochs = 4;
  cfg.lr = 1e-3;
  cfg.lr_decay_epochs = {1, 3};
  generate_dataset(cfg.dataset_dir, cfg.seed, cfg.n_shapes, cfg.voxel_size, cfg.image_size);
  Dataset ds = load_dataset(cfg.dataset_dir);
  TrainResult res = train_model(cfg, ds);
  REQUIRE(res.log.size() == 5);
  CHECK(res.log[1].lr == doctest::Approx(1e-3));
  CHECK(res.log[2].lr == doctest::Approx(1e-4));
  CHECK(res.log[3].lr == doctest::Approx(1e-4));
  CHECK(res.log[4].lr == doctest::Approx(1e-5));
  std::ifstream is(fs::path(cfg.report_dir) / "train_log.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header == "epoch,lr,train_dice,val_dice\r");
}

TEST_CASE("evaluation: ground truth as prediction scores perfectly") {
  TempRoot root("eval");
  RunConfig cfg = tiny_train_cfg(root.path);
  generate_dataset(cfg.dataset_dir, cfg.seed, cfg.n_shapes, cfg.voxel_size, cfg.image_size);
  Dataset ds = load_dataset(cfg.dataset_dir);
  // bypass the network: score each sample's own ground truth
  for (int i : val_indices(ds)) {
    const LoadedSample& s = ds.samples[static_cast<size_t>(i)];
    CHECK(iou(s.voxel, s.voxel, cfg.threshold) == 1.0);
    uint64_t cloud_seed = derive_seed(s.seed, kSurfaceTag);
    PointCloud a = extract_surface_points(s.voxel, cfg.fscore_points, cloud_seed);
    PointCloud b = extract_surface_points(s.voxel, cfg.fscore_points, cloud_seed);
    CHECK(f_score(a, b, cfg.fscore_distance) == 1.0);
    CHECK(dice_loss(s.voxel, s.voxel) == 0.0);
  }
}

TEST_CASE("evaluate_model emits per-sample rows plus a mean row per view count") {
  TempRoot root("evalrows");
  RunConfig cfg = tiny_train_cfg(root.path);
  generate_dataset(cfg.dataset_dir, cfg.seed, cfg.n_shapes, cfg.voxel_size, cfg.image_size);
  Dataset ds = load_dataset(cfg.dataset_dir);
  Model<float> model(cfg);
  auto va = val_indices(ds);
  auto rows = evaluate_model(model, ds, va, {1, 2});
  CHECK(rows.size() == 2 * (va.size() + 1));
  int means = 0;
  for (const auto& r : rows) means += r.sample_id == "mean";
  CHECK(means == 2);
  CHECK_THROWS_AS(evaluate_model(model, ds, va, {}), UsageError);
  CHECK_THROWS_AS(evaluate_model(model, ds, va, {99}), UsageError);

  write_eval_csv((root.path / "m.csv").string(), rows);
  std::ifstream is(root.path / "m.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header == "sample_id,n_views,iou,fscore,dice\r");
}

TEST_CASE("eval view orders are nested across view counts") {
  RunConfig cfg;
  auto o3 = eval_view_order(cfg, 42, 24);
  auto o5 = eval_view_order(cfg, 42, 24);
  CHECK(o3 == o5);
  CHECK(o3.size() == 24);
  std::vector<int> sorted = o3;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 24; ++i) CHECK(sorted[static_cast<size_t>(i)] == i);
}

TEST_CASE("non-finite activations abort with the offending op named") {
  TempRoot root("nan");
  RunConfig cfg = tiny_train_cfg(root.path);
  Model<float> model(cfg);
  for (auto& v : model.params.find("encoder.patch.w")->data()) v = 1e30f;
  Image im;
  im.h = cfg.image_size;
  im.w = cfg.image_size;
  im.values.assign(static_cast<size_t>(im.h * im.w), 1.0f);
  try {
    model.forward_probs({&im, &im});
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
  }
}
