// Acceptance runner: executes every release criterion at its stated
// tolerance and prints one PASS/FAIL line per criterion. Exit code 0 only if
// every criterion passes. Training-based criteria share one working
// directory (default ./acceptance_work) and reuse each other's runs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "umif/dataset.hpp"
#include "umif/model.hpp"
#include "umif/train.hpp"
#include "umif/verify.hpp"

namespace fs = std::filesystem;
using namespace umif;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Criterion {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<Criterion> g_results;
bool matches(const std::string& only, const std::string& name) {
  return only.empty() || name.find(only) != std::string::npos;
}

void report(const std::string& name, bool pass, const std::string& detail) {
  g_results.push_back({name, pass, detail});
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// ---------------------------------------------------------------------------

void criterion_oracle_equivalence() {
  auto t0 = Clock::now();
  SuiteReport rep = run_oracle_suite(500);
  double secs = seconds_since(t0);
  bool pass = secs < 60.0;
  std::string why;
  for (const auto& c : rep.checks)
    if (c.name == "oracle.inter_view_knn" || c.name == "oracle.dpc_knn_cluster") {
      pass = pass && c.pass;
      if (!c.pass) why += " " + c.name + " failed (" + c.detail + ");";
    }
  report("oracle_equivalence", pass,
         "inter_view_knn and dpc_knn_cluster exact on 500 random instances each, " + fmt(secs) +
             " s (limit 60)" + why);
}

void criterion_gradient_suite() {
  auto t0 = Clock::now();
  SuiteReport rep = run_gradcheck_suite(20);
  double secs = seconds_since(t0);
  bool pass = rep.all_pass() && secs < 300.0;
  report("gradient_suite", pass,
         std::to_string(rep.checks.size() - 1) +
             " op kinds plus the composed encoder+decoder+Dice pipeline, 20 seeds each, " +
             fmt(secs) + " s (limit 300)" +
             (rep.all_pass() ? "" : "; first failure: " + rep.first_failure()));
}

void criterion_analytic_cases() {
  Rng rng(404);
  VoxelGrid gt(4);
  for (auto& v : gt.values) v = rng.uniform() < 0.4 ? 1.0f : 0.0f;
  gt.values[0] = 1.0f;
  gt.values[1] = 0.0f;
  VoxelGrid flipped(4);
  for (size_t i = 0; i < gt.values.size(); ++i) flipped.values[i] = 1.0f - gt.values[i];
  bool dice_ok = dice_loss(gt, gt) == 0.0 && dice_loss(flipped, gt) == 1.0;

  bool iou_ok = iou(gt, gt, 0.5) == 1.0;

  PointCloud cloud = extract_surface_points(gt, 2048, 11);
  bool f_ok = f_score(cloud, cloud, 0.01) == 1.0;

  // additive identity of the weighted attention
  ParamStore<double> ps;
  ps.set_seed(405);
  MultiHeadAttention<double> mha(ps, "m", 16, 4);
  ps.randomize(rng, 0.4);
  std::vector<double> qv(6 * 16), kv(9 * 16);
  for (auto& v : qv) v = rng.uniform(-1, 1);
  for (auto& v : kv) v = rng.uniform(-1, 1);
  Tensor<double> q = Tensor<double>::leaf({6, 16}, qv, false);
  Tensor<double> k = Tensor<double>::leaf({9, 16}, kv, false);
  Tensor<double> zeros = Tensor<double>::zeros({9});
  auto a = mha.forward(q, k, nullptr).value();
  auto b = mha.forward(q, k, &zeros).value();
  double wdiff = 0;
  for (size_t i = 0; i < a.size(); ++i) wdiff = std::max(wdiff, std::abs(a[i] - b[i]));

  report("analytic_cases", dice_ok && iou_ok && f_ok && wdiff <= 1e-9,
         "dice(p==gt)=0, dice(p=1-gt)=1, iou(identical)=1, f_score(identical)=1 exact; "
         "W=0 attention diff " +
             fmt(wdiff) + " (limit 1e-9)");
}

RunConfig small_double_cfg() {
  RunConfig cfg;
  cfg.seed = 11;
  cfg.image_size = 16;
  cfg.patch_size = 4;
  cfg.dim = 16;
  cfg.depth = 2;
  cfg.heads = 2;
  cfg.mlp_ratio = 2;
  cfg.ivdb_period = 1;
  cfg.k = 2;
  cfg.k_dpc = 3;
  cfg.g = 8;
  cfg.query_count = 8;
  cfg.decoder_depth = 1;
  cfg.voxel_size = 8;
  cfg.upsample_stages = 2;
  return cfg;
}

std::vector<Image> random_images(Rng& rng, int n, int size) {
  std::vector<Image> out(static_cast<size_t>(n));
  for (auto& im : out) {
    im.h = size;
    im.w = size;
    im.values.resize(static_cast<size_t>(size) * static_cast<size_t>(size));
    for (auto& v : im.values) v = float(rng.uniform());
  }
  return out;
}

void criterion_architectural_invariants() {
  RunConfig cfg = small_double_cfg();
  Model<double> model(cfg);
  Rng rng(406);

  bool shape_ok = true;
  for (int n = 1; n <= 8; ++n) {
    auto imgs = random_images(rng, n, cfg.image_size);
    std::vector<const Image*> views;
    for (auto& im : imgs) views.push_back(&im);
    EncoderTrace trace;
    Tensor<double> probs = model.forward_probs(views, &trace);
    shape_ok = shape_ok && probs.shape() == Shape{8, 8, 8};
    if (n >= 2) shape_ok = shape_ok && !trace.ivdb_neighbors.empty();
  }

  auto imgs = random_images(rng, 4, cfg.image_size);
  std::vector<const Image*> base_views;
  for (auto& im : imgs) base_views.push_back(&im);
  auto base = model.forward_probs(base_views).value();
  double perm_worst = 0;
  std::vector<int> order = {0, 1, 2, 3};
  for (int t = 0; t < 20; ++t) {
    rng.shuffle(order);
    std::vector<const Image*> views;
    for (int i : order) views.push_back(&imgs[static_cast<size_t>(i)]);
    auto out = model.forward_probs(views).value();
    for (size_t i = 0; i < out.size(); ++i)
      perm_worst = std::max(perm_worst, std::abs(out[i] - base[i]));
  }

  RunConfig off = cfg;
  off.ivdb_period = 0;
  Model<double> plain(off);
  bool identity_ok = plain.forward_probs(base_views).value() == base ||
                     [&] {
                       auto v = plain.forward_probs(base_views).value();
                       double w = 0;
                       for (size_t i = 0; i < v.size(); ++i)
                         w = std::max(w, std::abs(v[i] - base[i]));
                       return w == 0.0;
                     }();

  ParamStore<double> ps;
  ps.set_seed(407);
  Ivdb<double> iv(ps, "iv", 8, 2, Rectification::OffsetWeight);
  ps.randomize(rng, 0.5);
  std::vector<double> vals(static_cast<size_t>(2 * 500 * 8));
  for (auto& v : vals) v = rng.uniform(-2, 2);
  Tensor<double> tokens = Tensor<double>::leaf({2, 500, 8}, vals, false);
  Tensor<double> out = iv.forward(tokens, nullptr);
  double excess = 0;
  for (size_t i = 0; i < vals.size(); ++i)
    excess = std::max(excess, std::abs(out.value()[i] - vals[i]) - std::abs(vals[i]));

  bool pass = shape_ok && perm_worst < 1e-6 && identity_ok && excess <= 1e-12;
  report("architectural_invariants", pass,
         "g x D for n in 1..8; view-permutation diff " + fmt(perm_worst) +
             " (limit 1e-6, 20 permutations); rectification identity at init; "
             "offset-weight excess " +
             fmt(excess) + " over 1000 tokens");
}

void criterion_format_roundtrips(const fs::path& work) {
  fs::create_directories(work / "formats");
  Rng rng(408);
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::vector<uint8_t>((std::istreambuf_iterator<char>(is)),
                                std::istreambuf_iterator<char>());
  };

  VoxelGrid g(8);
  for (auto& v : g.values) v = float(rng.uniform());
  write_voxg((work / "formats" / "a.voxg").string(), g);
  write_voxg((work / "formats" / "b.voxg").string(),
             read_voxg((work / "formats" / "a.voxg").string()));
  bool vox_ok = slurp(work / "formats" / "a.voxg") == slurp(work / "formats" / "b.voxg");

  Image im;
  im.h = 7;
  im.w = 5;
  im.values.resize(35);
  for (auto& v : im.values) v = float(rng.uniform());
  write_imgf((work / "formats" / "a.imgf").string(), im);
  write_imgf((work / "formats" / "b.imgf").string(),
             read_imgf((work / "formats" / "a.imgf").string()));
  bool img_ok = slurp(work / "formats" / "a.imgf") == slurp(work / "formats" / "b.imgf");

  VoxelGrid shape = gen_shape(77, 16).voxel;
  bool binvox_ok = read_binvox(write_binvox(shape)).values == shape.values;
  std::string hdr = "#binvox 1\ndim 2 2 2\ndata\n";
  std::vector<uint8_t> fx(hdr.begin(), hdr.end());
  fx.push_back(1);
  fx.push_back(8);
  VoxelGrid fixture = read_binvox(fx);
  binvox_ok = binvox_ok && fixture.occupied() == 8;

  RunConfig cfg = small_double_cfg();
  Model<float> m1(cfg);
  CheckpointTrailer tr;
  tr.config_text = cfg.serialize();
  tr.epochs_done = 5;
  save_checkpoint((work / "formats" / "a.umif").string(), m1.params, tr);
  Model<float> m2(cfg);
  CheckpointTrailer tr2 = load_checkpoint((work / "formats" / "a.umif").string(), m2.params);
  save_checkpoint((work / "formats" / "b.umif").string(), m2.params, tr2);
  bool ck_ok = slurp(work / "formats" / "a.umif") == slurp(work / "formats" / "b.umif");

  report("format_roundtrips", vox_ok && img_ok && binvox_ok && ck_ok,
         "checkpoint, VOXG, IMGF and binvox round trips byte-exact on fixtures");
}

// Shared training state across the slow criteria.
struct TrainedRuns {
  RunConfig base;                       // toy defaults with work-dir paths
  std::string dataset_dir;
  double baseline_val = 0;              // constant-0.5 dice on the val split
  std::vector<EpochLog> smoke_log;      // stm + rectification on
  std::string smoke_checkpoint;
  double smoke_secs = 0;
};

RunConfig ablation_cfg(const RunConfig& base, const std::string& merger, bool ivdb,
                       const fs::path& work) {
  RunConfig cfg = base;
  cfg.merger = merger;
  cfg.ivdb_period = ivdb ? cfg.ivdb_period : 0;
  std::string tag = merger + (ivdb ? "_ivdb" : "_plain");
  cfg.checkpoint_dir = (work / ("ckpt_" + tag)).string();
  cfg.report_dir = (work / ("rep_" + tag)).string();
  return cfg;
}

double mean_iou_at(const Model<float>& model, const Dataset& ds, const std::vector<int>& idx,
                   int n_views) {
  auto rows = evaluate_model(model, ds, idx, {n_views});
  for (const auto& r : rows)
    if (r.sample_id == "mean") return r.iou_v;
  return 0;
}

void criterion_training_smoke(TrainedRuns& runs, const fs::path& work) {
  auto t0 = Clock::now();
  generate_dataset(runs.dataset_dir, runs.base.seed, runs.base.n_shapes, runs.base.voxel_size,
                   runs.base.image_size);
  Dataset ds = load_dataset(runs.dataset_dir);
  runs.baseline_val = constant_half_dice(ds, val_indices(ds));

  RunConfig cfg = ablation_cfg(runs.base, "stm", true, work);
  TrainResult res = train_model(cfg, ds);
  runs.smoke_log = res.log;
  runs.smoke_checkpoint = res.last_checkpoint;

  CheckpointTrailer tr;
  Model<float> model = load_model_from_checkpoint(res.last_checkpoint, &tr);
  double iou3 = mean_iou_at(model, ds, val_indices(ds), 3);
  runs.smoke_secs = seconds_since(t0);

  double final_val = res.log.back().val_dice;
  bool halved = final_val <= 0.5 * runs.baseline_val;
  bool pass = halved && iou3 >= 0.5 && runs.smoke_secs < 1200.0;
  report("training_smoke", pass,
         "val dice " + fmt(final_val) + " vs constant-0.5 baseline " + fmt(runs.baseline_val) +
             " (need <= " + fmt(0.5 * runs.baseline_val) + "); mean 3-view IoU " + fmt(iou3) +
             " (need >= 0.5); " + fmt(runs.smoke_secs) + " s (limit 1200)");
}

void criterion_ablation_trend(TrainedRuns& runs, const fs::path& work) {
  auto t0 = Clock::now();
  Dataset ds = load_dataset(runs.dataset_dir);
  auto va = val_indices(ds);

  // {ivdb off, on} x {pbm, abm, stm}; the stm+ivdb run is reused from the
  // smoke criterion. pbm/abm natively emit T x D, and the toy profile has
  // g == T.
  double iou[2][3];
  const char* mergers[3] = {"pbm", "abm", "stm"};
  for (int iv = 0; iv < 2; ++iv)
    for (int mi = 0; mi < 3; ++mi) {
      RunConfig cfg = ablation_cfg(runs.base, mergers[mi], iv == 1, work);
      std::string ckpt;
      if (iv == 1 && std::string(mergers[mi]) == "stm" && !runs.smoke_checkpoint.empty()) {
        ckpt = runs.smoke_checkpoint;
      } else {
        TrainResult res = train_model(cfg, ds);
        ckpt = res.last_checkpoint;
      }
      Model<float> model = load_model_from_checkpoint(ckpt, nullptr);
      iou[iv][mi] = mean_iou_at(model, ds, va, 3);
      std::printf("  ablation %s ivdb=%d mean 3-view IoU %.4f\n", mergers[mi], iv, iou[iv][mi]);
      std::fflush(stdout);
    }
  double secs = seconds_since(t0);

  const double margin = -0.005;
  bool order_off = (iou[0][2] - iou[0][1] >= margin) && (iou[0][1] - iou[0][0] >= margin);
  bool order_on = (iou[1][2] - iou[1][1] >= margin) && (iou[1][1] - iou[1][0] >= margin);
  bool ivdb_helps = (iou[1][2] - iou[0][2] >= margin);
  bool pass = order_off && order_on && ivdb_helps && secs < 7200.0;
  std::string detail = "stm/abm/pbm IoU off=[" + fmt(iou[0][2]) + "," + fmt(iou[0][1]) + "," +
                       fmt(iou[0][0]) + "] on=[" + fmt(iou[1][2]) + "," + fmt(iou[1][1]) + "," +
                       fmt(iou[1][0]) + "]; margins allow -0.005; " + fmt(secs) +
                       " s (limit 7200)";
  report("ablation_trend", pass, detail);
}

void criterion_eval_trend(TrainedRuns& runs) {
  Dataset ds = load_dataset(runs.dataset_dir);
  Model<float> model = load_model_from_checkpoint(runs.smoke_checkpoint, nullptr);
  std::vector<int> ns = {1, 2, 3, 5, 8};
  std::vector<double> ious;
  for (int n : ns) ious.push_back(mean_iou_at(model, ds, val_indices(ds), n));
  int inversions = 0;
  double worst_drop = 0;
  for (size_t i = 1; i < ious.size(); ++i)
    if (ious[i] < ious[i - 1]) {
      ++inversions;
      worst_drop = std::max(worst_drop, ious[i - 1] - ious[i]);
    }
  bool pass = inversions <= 1 && worst_drop <= 0.005;
  std::string detail = "mean IoU over n=1,2,3,5,8: ";
  for (size_t i = 0; i < ious.size(); ++i) detail += (i ? "," : "") + fmt(ious[i]);
  detail += "; " + std::to_string(inversions) + " inversion(s), worst drop " + fmt(worst_drop) +
            " (allow 1 of <= 0.005)";
  report("eval_trend", pass, detail);
}

}  // namespace

int main(int argc, char** argv) {
  std::string only;
  fs::path work = "acceptance_work";
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) only = argv[++i];
    else if (a == "--work-dir" && i + 1 < argc) work = argv[++i];
  }
  fs::create_directories(work);

  std::printf(
      "NOTE published_dataset_numbers: ShapeNet-scale results are out of scope by design; the "
      "property suite below replaces them on synthetic data.\n");

  try {
    if (matches(only, "format_roundtrips")) criterion_format_roundtrips(work);
    if (matches(only, "analytic_cases")) criterion_analytic_cases();
    if (matches(only, "oracle_equivalence")) criterion_oracle_equivalence();
    if (matches(only, "architectural_invariants")) criterion_architectural_invariants();
    if (matches(only, "gradient_suite")) criterion_gradient_suite();

    bool want_smoke = matches(only, "training_smoke");
    bool want_ablation = matches(only, "ablation_trend");
    bool want_trend = matches(only, "eval_trend");
    if (want_smoke || want_ablation || want_trend) {
      TrainedRuns runs;
      runs.base = RunConfig();  // toy defaults
      runs.base.dataset_dir = (work / "data").string();
      runs.dataset_dir = runs.base.dataset_dir;
      criterion_training_smoke(runs, work);
      if (want_ablation) criterion_ablation_trend(runs, work);
      if (want_trend) criterion_eval_trend(runs);
    }
  } catch (const std::exception& e) {
    report("acceptance_runner", false, std::string("unhandled error: ") + e.what());
  }

  int failed = 0;
  for (const auto& c : g_results) failed += c.pass ? 0 : 1;
  std::printf("%zu criteria run, %d failed\n", g_results.size(), failed);
  return failed == 0 ? 0 : 1;
}
