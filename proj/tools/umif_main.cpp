// Command-line surface: dataset generation, training, evaluation,
// verification suites, and inspection reports.
//
// Exit codes: 0 success, 1 failure (verification or runtime), 2 usage error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "umif/csv.hpp"
#include "umif/dataset.hpp"
#include "umif/model.hpp"
#include "umif/train.hpp"
#include "umif/verify.hpp"

namespace fs = std::filesystem;
using umif::UsageError;

namespace {

const char* kUsage =
    "umif <command> [options]\n"
    "\n"
    "commands:\n"
    "  gen-data   generate the synthetic multi-view dataset\n"
    "  train      train a model on a generated dataset\n"
    "  eval       evaluate a checkpoint over view counts (--checkpoint, --views 1,3,8)\n"
    "  verify     run a verification suite: gradcheck | oracles | invariants | all\n"
    "  inspect    dump neighbor/cluster CSVs for one sample (--checkpoint, --sample)\n"
    "\n"
    "options:\n"
    "  --config <file>      load key=value config file\n"
    "  --<key> <value>      override any config key (see `umif config`)\n"
    "  UMIF_<KEY> env vars override the file, command line overrides both\n";

struct Args {
  std::vector<std::pair<std::string, std::string>> kv;  // flag name (no --) -> value
  std::vector<std::string> positional;
};

Args parse_args(int argc, char** argv, int from) {
  Args a;
  for (int i = from; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg.rfind("--", 0) == 0) {
      std::string key = arg.substr(2);
      std::replace(key.begin(), key.end(), '-', '_');
      if (key == "inject_tanh_grad_bug") {  // boolean fault-injection flag
        a.kv.emplace_back(key, "1");
        continue;
      }
      if (i + 1 >= argc) throw UsageError("flag --" + key + " expects a value");
      a.kv.emplace_back(key, argv[++i]);
    } else {
      a.positional.push_back(arg);
    }
  }
  return a;
}

// defaults < --config file < environment < remaining --key overrides
umif::RunConfig build_config(const Args& a,
                             std::vector<std::pair<std::string, std::string>>* extra = nullptr) {
  umif::RunConfig cfg;
  for (const auto& [k, v] : a.kv)
    if (k == "config") cfg.load_file(v);
  cfg.apply_env();
  static const std::vector<std::string> tool_flags = {
      "config", "checkpoint", "views", "sample", "n_views", "resume", "op", "seeds",
      "instances", "json", "inject_tanh_grad_bug"};
  for (const auto& [k, v] : a.kv) {
    if (std::find(tool_flags.begin(), tool_flags.end(), k) != tool_flags.end()) {
      if (extra && k != "config") extra->emplace_back(k, v);
      continue;
    }
    cfg.set(k, v);
  }
  cfg.validate();
  return cfg;
}

std::string flag_of(const std::vector<std::pair<std::string, std::string>>& kv,
                    const std::string& key, const std::string& fallback = "") {
  for (const auto& [k, v] : kv)
    if (k == key) return v;
  return fallback;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  std::string cur;
  auto push = [&]() {
    if (cur.empty()) return;
    try {
      out.push_back(std::stoi(cur));
    } catch (const std::exception&) {
      throw UsageError(what + ": bad integer '" + cur + "'");
    }
    cur.clear();
  };
  for (char c : s) {
    if (c == ',') push();
    else cur += c;
  }
  push();
  return out;
}

int cmd_gen_data(const Args& a) {
  umif::RunConfig cfg = build_config(a);
  if (cfg.voxel_size != 8 && cfg.voxel_size != 16 && cfg.voxel_size != 32)
    throw UsageError("gen-data: voxel_size must be one of {8,16,32}, got " +
                     std::to_string(cfg.voxel_size));
  umif::generate_dataset(cfg.dataset_dir, cfg.seed, cfg.n_shapes, cfg.voxel_size,
                         cfg.image_size);
  std::cout << "wrote " << cfg.n_shapes << " shapes (side " << cfg.voxel_size << ", "
            << umif::view_directions().size() << " views at " << cfg.image_size << "^2) to "
            << cfg.dataset_dir << "\n";
  return 0;
}

int cmd_train(const Args& a) {
  std::vector<std::pair<std::string, std::string>> extra;
  umif::RunConfig cfg = build_config(a, &extra);
  if (!fs::exists(fs::path(cfg.dataset_dir) / "manifest.txt"))
    throw UsageError("train: no dataset at " + cfg.dataset_dir + " (run gen-data first)");
  umif::Dataset ds = umif::load_dataset(cfg.dataset_dir);
  std::string resume = flag_of(extra, "resume");
  umif::TrainResult res = umif::train_model(cfg, ds, resume, &std::cout);
  std::cout << "final checkpoint: " << res.last_checkpoint << "\n";
  return 0;
}

int cmd_eval(const Args& a) {
  std::vector<std::pair<std::string, std::string>> extra;
  umif::RunConfig file_cfg = build_config(a, &extra);
  std::string ckpt = flag_of(extra, "checkpoint");
  if (ckpt.empty()) throw UsageError("eval: --checkpoint is required");
  std::string views = flag_of(extra, "views");
  if (views.empty()) throw UsageError("eval: --views is required (e.g. --views 1,2,3,5,8)");
  std::vector<int> n_list = parse_int_list(views, "eval --views");
  if (n_list.empty()) throw UsageError("eval: empty view-count list");

  umif::CheckpointTrailer tr;
  umif::Model<float> model = umif::load_model_from_checkpoint(ckpt, &tr);
  if (!fs::exists(fs::path(file_cfg.dataset_dir) / "manifest.txt"))
    throw UsageError("eval: no dataset at " + file_cfg.dataset_dir);
  umif::Dataset ds = umif::load_dataset(file_cfg.dataset_dir);
  auto rows = umif::evaluate_model(model, ds, umif::val_indices(ds), n_list);
  fs::create_directories(file_cfg.report_dir);
  std::string out = (fs::path(file_cfg.report_dir) / "eval_metrics.csv").string();
  umif::write_eval_csv(out, rows);
  for (const auto& r : rows)
    if (r.sample_id == "mean")
      std::cout << "n=" << r.n_views << " mean iou " << r.iou_v << " fscore " << r.fscore_v
                << " dice " << r.dice_v << "\n";
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_verify(const Args& a) {
  std::vector<std::pair<std::string, std::string>> extra;
  for (const auto& [k, v] : a.kv) extra.emplace_back(k, v);
  if (a.positional.empty())
    throw UsageError("verify: expected a suite name: gradcheck | oracles | invariants | all");
  std::string suite = a.positional[0];
  if (suite != "gradcheck" && suite != "oracles" && suite != "invariants" && suite != "all")
    throw UsageError("verify: unknown suite '" + suite +
                     "' (valid: gradcheck, oracles, invariants, all)");
  if (flag_of(extra, "inject_tanh_grad_bug") == "1")
    umif::detail::tanh_grad_sign_flip() = true;

  int seeds = 20;
  if (!flag_of(extra, "seeds").empty()) seeds = std::stoi(flag_of(extra, "seeds"));
  int instances = 500;
  if (!flag_of(extra, "instances").empty()) instances = std::stoi(flag_of(extra, "instances"));
  std::string only_op = flag_of(extra, "op");

  std::vector<umif::SuiteReport> reports;
  if (suite == "gradcheck" || suite == "all")
    reports.push_back(umif::run_gradcheck_suite(seeds, only_op));
  if (suite == "oracles" || suite == "all")
    reports.push_back(umif::run_oracle_suite(instances));
  if (suite == "invariants" || suite == "all")
    reports.push_back(umif::run_invariant_suite());

  bool all_pass = true;
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& rep : reports) {
    nlohmann::json js;
    js["suite"] = rep.suite;
    js["passed"] = rep.all_pass();
    js["seconds"] = rep.seconds;
    js["checks"] = nlohmann::json::array();
    for (const auto& c : rep.checks) {
      std::cerr << (c.pass ? "PASS " : "FAIL ") << rep.suite << "/" << c.name << ": " << c.detail
                << "\n";
      js["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
      all_pass = all_pass && c.pass;
    }
    summary.push_back(js);
  }
  std::string json_path = flag_of(extra, "json");
  if (!json_path.empty()) {
    std::ofstream os(json_path);
    os << summary.dump(2) << "\n";
  } else {
    std::cout << summary.dump(2) << "\n";
  }
  return all_pass ? 0 : 1;
}

int cmd_inspect(const Args& a) {
  std::vector<std::pair<std::string, std::string>> extra;
  umif::RunConfig file_cfg = build_config(a, &extra);
  std::string ckpt = flag_of(extra, "checkpoint");
  if (ckpt.empty()) throw UsageError("inspect: --checkpoint is required");
  std::string sample_s = flag_of(extra, "sample");
  if (sample_s.empty()) throw UsageError("inspect: --sample is required");
  int sample = std::stoi(sample_s);

  umif::Model<float> model = umif::load_model_from_checkpoint(ckpt, nullptr);
  umif::Dataset ds = umif::load_dataset(file_cfg.dataset_dir);
  if (sample < 0 || sample >= int(ds.samples.size()))
    throw UsageError("inspect: sample " + std::to_string(sample) + " not in dataset of " +
                     std::to_string(ds.samples.size()));
  const umif::LoadedSample& s = ds.samples[size_t(sample)];
  int n_views = model.cfg.n_views_train;
  if (!flag_of(extra, "n_views").empty()) n_views = std::stoi(flag_of(extra, "n_views"));
  if (n_views < 1 || n_views > int(s.views.size()))
    throw UsageError("inspect: --n-views out of range");

  auto order = umif::eval_view_order(model.cfg, s.seed, int(s.views.size()));
  order.resize(size_t(n_views));
  std::vector<const umif::Image*> views;
  for (int v : order) views.push_back(&s.views[size_t(v)]);

  umif::EncoderTrace trace;
  model.forward_probs(views, &trace);

  fs::create_directories(file_cfg.report_dir);
  std::string prefix =
      (fs::path(file_cfg.report_dir) / ("inspect_sample" + std::to_string(sample))).string();
  for (size_t j = 0; j < trace.ivdb_neighbors.size(); ++j) {
    const umif::NeighborIndex& ni = trace.ivdb_neighbors[j];
    umif::CsvWriter csv(prefix + "_ivdb" + std::to_string(j) + "_knn.csv",
                        {"anchor_view", "anchor_token", "neighbor_view", "neighbor_token",
                         "distance"});
    for (int v = 0; v < ni.views; ++v)
      for (int t = 0; t < ni.tokens_per_view; ++t) {
        const umif::NeighborEntry* e = ni.anchor(v, t);
        for (int i = 0; i < ni.per_anchor(); ++i)
          csv.row({std::to_string(v), std::to_string(t), std::to_string(e[i].view),
                   std::to_string(e[i].token), umif::fmt_g(std::sqrt(e[i].dist2))});
      }
  }
  if (trace.has_clusters) {
    int T = model.cfg.encoder_config().tokens_per_view();
    int cols = model.cfg.image_size / model.cfg.patch_size;
    umif::CsvWriter csv(prefix + "_stm_clusters.csv",
                        {"token", "view", "row", "col", "group", "rho", "delta", "importance"});
    const umif::ClusterAssignment& ca = trace.stm_clusters;
    for (size_t i = 0; i < ca.assignment.size(); ++i) {
      int view = int(i) / T, tok = int(i) % T;
      csv.row({std::to_string(i), std::to_string(view), std::to_string(tok / cols),
               std::to_string(tok % cols), std::to_string(ca.assignment[i]),
               umif::fmt_g(ca.rho[i]), umif::fmt_g(ca.delta[i]), umif::fmt_g(ca.importance[i])});
    }
  }
  std::cout << "wrote " << trace.ivdb_neighbors.size() << " neighbor reports and "
            << (trace.has_clusters ? 1 : 0) << " cluster report under " << file_cfg.report_dir
            << "\n";
  return 0;
}

int cmd_config(const Args& a) {
  umif::RunConfig cfg = build_config(a);
  std::cout << cfg.serialize();
  return 0;
}

int run(int argc, char** argv) {
  if (argc < 2) throw UsageError(std::string("missing command\n") + kUsage);
  std::string cmd = argv[1];
  Args a = parse_args(argc, argv, 2);
  if (cmd == "gen-data") return cmd_gen_data(a);
  if (cmd == "train") return cmd_train(a);
  if (cmd == "eval") return cmd_eval(a);
  if (cmd == "verify") return cmd_verify(a);
  if (cmd == "inspect") return cmd_inspect(a);
  if (cmd == "config") return cmd_config(a);
  if (cmd == "help" || cmd == "--help" || cmd == "-h") {
    std::cout << kUsage;
    return 0;
  }
  throw UsageError("unknown command '" + cmd + "'\n" + kUsage);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
