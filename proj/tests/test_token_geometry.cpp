#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "umif/common.hpp"
#include "umif/token_geometry.hpp"

using namespace umif;

namespace {
std::vector<double> random_tokens(Rng& rng, int64_t count, double lo = -1, double hi = 1) {
  std::vector<double> t(static_cast<size_t>(count));
  for (auto& v : t) v = rng.uniform(lo, hi);
  return t;
}
}  // namespace

TEST_CASE("knn preconditions") {
  std::vector<double> t = {0, 0, 1, 1};
  CHECK_THROWS_AS(inter_view_knn(1, 2, 2, t, 1), ContractError);
  CHECK_THROWS_AS(inter_view_knn(2, 1, 2, t, 2), ContractError);
}

TEST_CASE("two identical single-token views pair at distance zero") {
  std::vector<double> t = {0.5, -0.25, 0.5, -0.25};
  NeighborIndex ni = inter_view_knn(2, 1, 2, t, 1);
  CHECK(ni.per_anchor() == 1);
  CHECK(ni.anchor(0, 0)[0].view == 1);
  CHECK(ni.anchor(0, 0)[0].token == 0);
  CHECK(ni.anchor(0, 0)[0].dist2 == 0.0);
  CHECK(ni.anchor(1, 0)[0].view == 0);
}

TEST_CASE("knn ties break toward the lower token index") {
  // anchor 0 of view 0 sits equidistant from both tokens of view 1
  std::vector<double> anchors = {0.0, 5.0, 1.0, -1.0};
  NeighborIndex ni = inter_view_knn(2, 2, 1, anchors, 1);
  CHECK(ni.anchor(0, 0)[0].token == 0);
}

TEST_CASE("knn matches the exhaustive oracle on random instances") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 2 + int(rng.uniform_int(0, 2));
    int T = 1 + int(rng.uniform_int(0, 31));
    int D = 1 + int(rng.uniform_int(0, 15));
    int k = 1 + int(rng.uniform_int(0, T - 1));
    auto tokens = random_tokens(rng, int64_t(n) * T * D);
    CHECK(same_neighbors(inter_view_knn(n, T, D, tokens, k),
                         inter_view_knn_oracle(n, T, D, tokens, k)));
  }
}

TEST_CASE("dpc: every token its own center when g equals the token count") {
  Rng rng(3);
  int64_t N = 12;
  auto tokens = random_tokens(rng, N * 4);
  std::vector<double> imp(static_cast<size_t>(N), 0.0);
  auto ca = dpc_knn_cluster(N, 4, tokens, 3, int(N), imp);
  for (int64_t i = 0; i < N; ++i) {
    CHECK(ca.centers[static_cast<size_t>(i)] == int(i));
    CHECK(ca.assignment[static_cast<size_t>(i)] == int(i));
  }
}

TEST_CASE("dpc separates two well-separated blobs") {
  Rng rng(5);
  int64_t N = 40;
  int D = 3;
  std::vector<double> tokens(static_cast<size_t>(N * D));
  for (int64_t i = 0; i < N; ++i)
    for (int d = 0; d < D; ++d)
      tokens[static_cast<size_t>(i * D + d)] = rng.uniform(-0.1, 0.1) + (i < N / 2 ? 0.0 : 10.0);
  std::vector<double> imp(static_cast<size_t>(N), 0.0);
  auto ca = dpc_knn_cluster(N, D, tokens, 5, 2, imp);
  auto orac = dpc_knn_cluster_oracle(N, D, tokens, 5, 2, imp);
  CHECK(same_clustering(ca, orac));
  for (int64_t i = 1; i < N / 2; ++i)
    CHECK(ca.assignment[static_cast<size_t>(i)] == ca.assignment[0]);
  for (int64_t i = N / 2; i < N; ++i)
    CHECK(ca.assignment[static_cast<size_t>(i)] == ca.assignment[static_cast<size_t>(N / 2)]);
  CHECK(ca.assignment[0] != ca.assignment[static_cast<size_t>(N / 2)]);
}

TEST_CASE("dpc degenerate identical tokens select the lowest indices") {
  int64_t N = 9;
  std::vector<double> tokens(static_cast<size_t>(N * 2), 0.25);
  std::vector<double> imp(static_cast<size_t>(N), 0.0);
  auto ca = dpc_knn_cluster(N, 2, tokens, 3, 4, imp);
  CHECK(ca.centers == std::vector<int>{0, 1, 2, 3});
  for (double r : ca.rho) CHECK(r == 1.0);
  for (double d : ca.delta) CHECK(d == 0.0);
  for (int64_t i = 0; i < N; ++i) {
    CHECK(ca.assignment[static_cast<size_t>(i)] >= 0);
    CHECK(ca.assignment[static_cast<size_t>(i)] < 4);
  }
  CHECK(same_clustering(ca, dpc_knn_cluster_oracle(N, 2, tokens, 3, 4, imp)));
}

TEST_CASE("dpc matches the oracle on random instances including tie-rich ones") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    int64_t N = 2 + rng.uniform_int(0, 62);
    int D = 1 + int(rng.uniform_int(0, 7));
    int k_dpc = 1 + int(rng.uniform_int(0, N - 2));
    int g = 1 + int(rng.uniform_int(0, N - 1));
    auto tokens = random_tokens(rng, N * D);
    if (trial % 3 == 0)
      for (auto& v : tokens) v = std::round(v * 4.0) / 4.0;  // quantize to force ties
    std::vector<double> imp(static_cast<size_t>(N));
    for (auto& v : imp) v = rng.uniform(-1, 1);
    auto prod = dpc_knn_cluster(N, D, tokens, k_dpc, g, imp);
    auto orac = dpc_knn_cluster_oracle(N, D, tokens, k_dpc, g, imp);
    CHECK(same_clustering(prod, orac));
    CHECK(prod.importance == imp);
  }
}

TEST_CASE("dpc preconditions") {
  std::vector<double> t(8, 0.0);
  std::vector<double> imp(4, 0.0);
  CHECK_THROWS_AS(dpc_knn_cluster(4, 2, t, 4, 2, imp), ContractError);  // k_dpc > N-1
  CHECK_THROWS_AS(dpc_knn_cluster(4, 2, t, 2, 5, imp), ContractError);  // g > N
  CHECK_THROWS_AS(dpc_knn_cluster(4, 2, t, 2, 2, {0.0}), ContractError);
}

TEST_CASE("neighbor distances are recomputable from the tokens") {
  Rng rng(13);
  int n = 3, T = 8, D = 5;
  auto tokens = random_tokens(rng, int64_t(n) * T * D);
  auto ni = inter_view_knn(n, T, D, tokens, 3);
  for (int v = 0; v < n; ++v)
    for (int t = 0; t < T; ++t) {
      const NeighborEntry* e = ni.anchor(v, t);
      for (int i = 0; i < ni.per_anchor(); ++i) {
        double d = 0;
        for (int c = 0; c < D; ++c) {
          double diff = tokens[static_cast<size_t>((v * T + t) * D + c)] -
                        tokens[static_cast<size_t>((e[i].view * T + e[i].token) * D + c)];
          d += diff * diff;
        }
        CHECK(std::abs(d - e[i].dist2) < 1e-9);
      }
    }
}
