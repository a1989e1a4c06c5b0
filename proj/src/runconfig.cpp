#include "umif/runconfig.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace umif {

namespace {

struct Field {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

int64_t to_int(const std::string& key, const std::string& v) {
  int64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw UsageError("config: " + key + " expects an integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw UsageError("config: " + key + " expects a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw UsageError("config: " + key + " expects a boolean (0/1/true/false), got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto add = [&](std::string name, auto set, auto get) {
      f.push_back({std::move(name), set, get});
    };
    auto int_field = [&](std::string name, int RunConfig::* m) {
      add(name,
          [name, m](RunConfig& c, const std::string& v) { c.*m = int(to_int(name, v)); },
          [m](const RunConfig& c) { return std::to_string(c.*m); });
    };
    auto dbl_field = [&](std::string name, double RunConfig::* m) {
      add(name, [name, m](RunConfig& c, const std::string& v) { c.*m = to_double(name, v); },
          [m](const RunConfig& c) { return fmt(c.*m); });
    };
    auto str_field = [&](std::string name, std::string RunConfig::* m) {
      add(name, [m](RunConfig& c, const std::string& v) { c.*m = v; },
          [m](const RunConfig& c) { return c.*m; });
    };

    // `profile` swaps in a whole preset, so it must come first in serialized
    // configs (serialize() keeps table order).
    add("profile",
        [](RunConfig& c, const std::string& v) {
          if (v == "toy")
            c = RunConfig::toy();
          else if (v == "paper")
            c = RunConfig::paper();
          else
            throw UsageError("config: unknown profile '" + v + "' (toy|paper)");
        },
        [](const RunConfig& c) { return c.profile; });
    add("seed",
        [](RunConfig& c, const std::string& v) {
          c.seed = uint64_t(to_int("seed", v));
        },
        [](const RunConfig& c) { return std::to_string(c.seed); });
    int_field("image_size", &RunConfig::image_size);
    int_field("patch_size", &RunConfig::patch_size);
    int_field("channels", &RunConfig::channels);
    int_field("dim", &RunConfig::dim);
    int_field("depth", &RunConfig::depth);
    int_field("heads", &RunConfig::heads);
    int_field("mlp_ratio", &RunConfig::mlp_ratio);
    int_field("ivdb_period", &RunConfig::ivdb_period);
    add("ivdb_once",
        [](RunConfig& c, const std::string& v) { c.ivdb_once = to_bool("ivdb_once", v); },
        [](const RunConfig& c) { return c.ivdb_once ? "1" : "0"; });
    int_field("k", &RunConfig::k);
    int_field("k_dpc", &RunConfig::k_dpc);
    int_field("g", &RunConfig::g);
    str_field("rectification", &RunConfig::rectification);
    str_field("merger", &RunConfig::merger);
    int_field("query_count", &RunConfig::query_count);
    int_field("decoder_depth", &RunConfig::decoder_depth);
    int_field("voxel_size", &RunConfig::voxel_size);
    int_field("upsample_stages", &RunConfig::upsample_stages);
    dbl_field("threshold", &RunConfig::threshold);
    int_field("n_views_train", &RunConfig::n_views_train);
    int_field("batch_size", &RunConfig::batch_size);
    int_field("epochs", &RunConfig::epochs);
    dbl_field("lr", &RunConfig::lr);
    add("lr_decay_epochs",
        [](RunConfig& c, const std::string& v) {
          c.lr_decay_epochs.clear();
          if (v.empty()) return;
          std::stringstream ss(v);
          std::string part;
          while (std::getline(ss, part, ','))
            c.lr_decay_epochs.push_back(int(to_int("lr_decay_epochs", part)));
        },
        [](const RunConfig& c) {
          std::string out;
          for (size_t i = 0; i < c.lr_decay_epochs.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(c.lr_decay_epochs[i]);
          }
          return out;
        });
    dbl_field("weight_decay", &RunConfig::weight_decay);
    dbl_field("beta1", &RunConfig::beta1);
    dbl_field("beta2", &RunConfig::beta2);
    dbl_field("adam_eps", &RunConfig::adam_eps);
    int_field("n_shapes", &RunConfig::n_shapes);
    int_field("fscore_points", &RunConfig::fscore_points);
    dbl_field("fscore_distance", &RunConfig::fscore_distance);
    str_field("dataset_dir", &RunConfig::dataset_dir);
    str_field("checkpoint_dir", &RunConfig::checkpoint_dir);
    str_field("report_dir", &RunConfig::report_dir);
    return f;
  }();
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.name == key) return &f;
  return nullptr;
}

}  // namespace

RunConfig RunConfig::toy() { return RunConfig{}; }

RunConfig RunConfig::paper() {
  RunConfig c;
  c.profile = "paper";
  c.image_size = 224;
  c.patch_size = 16;
  c.channels = 3;
  c.dim = 768;
  c.depth = 12;
  c.heads = 12;
  c.mlp_ratio = 4;
  c.ivdb_period = 3;
  c.ivdb_once = false;
  c.k = 5;
  c.k_dpc = 15;
  c.g = 196;
  c.rectification = "offset_weight";
  c.merger = "stm";
  c.query_count = 64;
  c.decoder_depth = 8;
  c.voxel_size = 32;
  c.upsample_stages = 3;
  c.threshold = 0.5;
  c.n_views_train = 3;
  c.batch_size = 32;
  c.epochs = 150;
  c.lr = 1e-4;
  c.lr_decay_epochs = {50, 120};
  c.fscore_points = 8192;
  return c;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.name);
    return out;
  }();
  return names;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw UsageError("config: unknown key '" + key + "'");
  f->set(*this, value);
}

std::string RunConfig::get(const std::string& key) const {
  const Field* f = find_field(key);
  if (!f) throw UsageError("config: unknown key '" + key + "'");
  return f->get(*this);
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& f : fields()) out += f.name + "=" + f.get(*this) + "\n";
  return out;
}

RunConfig RunConfig::deserialize(const std::string& text) {
  RunConfig c;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(lineno) + ": expected key=value, got '" +
                       line + "'");
    c.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return c;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("config: cannot open file " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  std::string text = buf.str();
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value, got '" +
                       line + "'");
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

void RunConfig::apply_env() {
  for (const auto& key : keys()) {
    std::string env_name = "UMIF_";
    for (char ch : key) env_name += char(std::toupper(ch));
    if (const char* v = std::getenv(env_name.c_str())) set(key, v);
  }
}

EncoderConfig RunConfig::encoder_config() const {
  EncoderConfig e;
  e.image_size = image_size;
  e.patch_size = patch_size;
  e.channels = channels;
  e.dim = dim;
  e.depth = depth;
  e.heads = heads;
  e.mlp_ratio = mlp_ratio;
  e.ivdb_period = ivdb_period;
  e.ivdb_once = ivdb_once;
  e.k = k;
  e.k_dpc = k_dpc;
  e.g = g;
  if (rectification == "fc_mapping")
    e.rectification = Rectification::FcMapping;
  else if (rectification == "offset")
    e.rectification = Rectification::Offset;
  else if (rectification == "offset_weight")
    e.rectification = Rectification::OffsetWeight;
  else
    throw UsageError("config: unknown rectification '" + rectification + "'");
  if (merger == "pbm")
    e.merger = Merger::Pbm;
  else if (merger == "abm")
    e.merger = Merger::Abm;
  else if (merger == "stm")
    e.merger = Merger::Stm;
  else
    throw UsageError("config: unknown merger '" + merger + "'");
  return e;
}

DecoderConfig RunConfig::decoder_config() const {
  DecoderConfig d;
  d.query_count = query_count;
  d.decoder_depth = decoder_depth;
  d.dim = dim;
  d.heads = heads;
  d.mlp_ratio = mlp_ratio;
  d.voxel_size = voxel_size;
  d.upsample_stages = upsample_stages;
  return d;
}

void RunConfig::validate() const {
  try {
    encoder_config().validate();
    decoder_config().validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  if (!(threshold > 0.0 && threshold < 1.0))
    throw UsageError("config: threshold must lie in (0,1)");
  if (n_views_train < 1 || n_views_train > 24)
    throw UsageError("config: n_views_train must lie in [1,24]");
  if (batch_size < 1) throw UsageError("config: batch_size must be positive");
  if (epochs < 0) throw UsageError("config: epochs must be non-negative");
  if (lr <= 0) throw UsageError("config: lr must be positive");
  if (n_shapes < 1) throw UsageError("config: n_shapes must be positive");
  if (fscore_points < 1) throw UsageError("config: fscore_points must be positive");
  if (!(fscore_distance > 0)) throw UsageError("config: fscore_distance must be positive");
}

}  // namespace umif
