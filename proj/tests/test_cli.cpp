#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace std;
namespace fs = std::filesystem;

namespace {

struct TempRoot {
  fs::path path;
  explicit TempRoot(const std::string& tag) {
    path = fs::temp_directory_path() / ("umif_cli_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempRoot() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

int run_cli(const std::string& args) {
  std::string cmd = std::string(UMIF_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::vector<uint8_t> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(is)),
                              std::istreambuf_iterator<char>());
}

// tiny profile shared by the CLI round trips
std::string tiny_flags(const fs::path& root) {
  return " --seed 5 --image_size 8 --patch_size 4 --dim 8 --depth 1 --heads 2 --mlp_ratio 2"
         " --ivdb_period 1 --k 2 --k_dpc 3 --g 4 --query_count 8 --decoder_depth 1"
         " --voxel_size 8 --upsample_stages 2 --n_views_train 2 --batch_size 2 --epochs 1"
         " --n_shapes 4 --fscore_points 64"
         " --dataset_dir " + (root / "data").string() +
         " --checkpoint_dir " + (root / "ckpt").string() +
         " --report_dir " + (root / "rep").string();
}

size_t count_lines(const fs::path& p) {
  std::ifstream is(p);
  size_t n = 0;
  std::string line;
  while (std::getline(is, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("exit code contract: usage errors are 2") {
  CHECK(run_cli("") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("verify bogus-suite") == 2);
  CHECK(run_cli("gen-data --voxel_size 12") == 2);
  CHECK(run_cli("gen-data --no_such_key 1") == 2);
  CHECK(run_cli("eval --views 1,2") == 2);  // missing --checkpoint
  CHECK(run_cli("help") == 0);
}

TEST_CASE("gen-data is byte-idempotent") {
  TempRoot root("gen");
  std::string flags = tiny_flags(root.path);
  REQUIRE(run_cli("gen-data" + flags) == 0);
  fs::path d1 = root.path / "data";
  fs::path d2 = root.path / "data2";
  std::string flags2 = flags;
  auto pos = flags2.find((root.path / "data").string());
  flags2.replace(pos, (root.path / "data").string().size(), d2.string());
  REQUIRE(run_cli("gen-data" + flags2) == 0);
  for (const auto& e : fs::directory_iterator(d1))
    CHECK(slurp(e.path()) == slurp(d2 / e.path().filename()));
}

TEST_CASE("train, eval and inspect round trip through the CLI") {
  TempRoot root("e2e");
  std::string flags = tiny_flags(root.path);
  REQUIRE(run_cli("gen-data" + flags) == 0);
  REQUIRE(run_cli("train" + flags) == 0);
  fs::path ckpt = root.path / "ckpt" / "epoch_001.umif";
  REQUIRE(fs::exists(ckpt));
  CHECK(fs::exists(root.path / "rep" / "train_log.csv"));
  CHECK(count_lines(root.path / "rep" / "train_log.csv") == 3);  // header + epoch 0 + epoch 1

  CHECK(run_cli("eval" + flags + " --checkpoint " + ckpt.string() + " --views ") == 2);
  CHECK(run_cli("eval" + flags + " --checkpoint " + ckpt.string() + " --views 99") == 2);
  REQUIRE(run_cli("eval" + flags + " --checkpoint " + ckpt.string() + " --views 1,2") == 0);
  fs::path metrics = root.path / "rep" / "eval_metrics.csv";
  REQUIRE(fs::exists(metrics));
  // 2 val samples + 1 mean row per view count, plus header
  CHECK(count_lines(metrics) == 1 + 2 * 3);

  REQUIRE(run_cli("inspect" + flags + " --checkpoint " + ckpt.string() + " --sample 0") == 0);
  // n = 2 views, depth 1, period 1 -> one rectification block
  fs::path knn = root.path / "rep" / "inspect_sample0_ivdb0_knn.csv";
  REQUIRE(fs::exists(knn));
  // T anchors per view, k(n-1) = 2 neighbor rows per anchor, 2 views, + header
  CHECK(count_lines(knn) == 1 + 2 * 4 * 2);
  fs::path clusters = root.path / "rep" / "inspect_sample0_stm_clusters.csv";
  REQUIRE(fs::exists(clusters));
  CHECK(count_lines(clusters) == 1 + 2 * 4);  // n*T tokens + header

  // group ids cover exactly g distinct groups
  std::ifstream is(clusters);
  std::string line;
  std::getline(is, line);  // header
  std::vector<int> groups;
  while (std::getline(is, line)) {
    size_t c1 = 0;
    int field = 0;
    std::string g;
    for (char ch : line) {
      if (ch == ',') {
        ++field;
        continue;
      }
      if (field == 4) g += ch;
      (void)c1;
    }
    groups.push_back(std::stoi(g));
  }
  std::sort(groups.begin(), groups.end());
  groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
  CHECK(groups.size() == 4);

  CHECK(run_cli("inspect" + flags + " --checkpoint " + ckpt.string() + " --sample 999") == 2);
}

TEST_CASE("train on a missing dataset is a usage error") {
  TempRoot root("nods");
  CHECK(run_cli("train" + tiny_flags(root.path)) == 2);
}

TEST_CASE("config subcommand prints the resolved configuration") {
  CHECK(run_cli("config --dim 32") == 0);
  CHECK(run_cli("config --dim x") == 2);
}
