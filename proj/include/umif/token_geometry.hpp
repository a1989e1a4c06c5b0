#pragma once

// Similarity machinery: inter-view k-nearest-neighbor matching and DPC-KNN
// clustering, plus brute-force oracles for both. Distances are squared
// Euclidean internally and accumulated in double regardless of the token
// scalar type; delta is reported as true Euclidean. Ties break toward the
// lower flat token index everywhere so results are bit-reproducible.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "umif/common.hpp"

namespace umif {

struct NeighborEntry {
  int view;
  int token;
  double dist2;
};

// For every anchor token (view v, token t): its k nearest tokens from each
// other view, grouped by neighbor view in ascending view order, sorted by
// (distance, token index) within a view.
struct NeighborIndex {
  int views = 0;
  int tokens_per_view = 0;
  int k = 0;
  std::vector<NeighborEntry> entries;

  int per_anchor() const { return k * (views - 1); }
  const NeighborEntry* anchor(int v, int t) const {
    return entries.data() + (size_t(v) * size_t(tokens_per_view) + size_t(t)) *
                                size_t(per_anchor());
  }
};

struct ClusterAssignment {
  int g = 0;
  std::vector<int> assignment;  // per-token group id in [0, g)
  std::vector<int> centers;     // g token indices, ascending; group id = rank here
  std::vector<double> rho;      // KNN density
  std::vector<double> delta;    // distance to nearest better-ranked token (true Euclidean)
  std::vector<double> importance;  // carried through for reporting / Eq-7 reuse
};

namespace detail {

template <class S>
inline double dist2(const S* a, const S* b, int dim) {
  double d = 0;
  for (int c = 0; c < dim; ++c) {
    double diff = double(a[c]) - double(b[c]);
    d += diff * diff;
  }
  return d;
}

}  // namespace detail

// tokens: row-major n x T x D block.
template <class S>
NeighborIndex inter_view_knn(int n, int T, int D, const S* tokens, int k) {
  if (n < 2)
    throw ContractError("inter_view_knn: need at least 2 views, got " + std::to_string(n));
  if (k < 1 || k > T)
    throw ContractError("inter_view_knn: k=" + std::to_string(k) +
                        " out of range for T=" + std::to_string(T));
  NeighborIndex out;
  out.views = n;
  out.tokens_per_view = T;
  out.k = k;
  out.entries.reserve(size_t(n) * size_t(T) * size_t(out.per_anchor()));
  std::vector<std::pair<double, int>> cand(static_cast<size_t>(T));
  for (int v = 0; v < n; ++v) {
    for (int t = 0; t < T; ++t) {
      const S* a = tokens + (size_t(v) * size_t(T) + size_t(t)) * size_t(D);
      for (int u = 0; u < n; ++u) {
        if (u == v) continue;
        for (int s = 0; s < T; ++s) {
          const S* b = tokens + (size_t(u) * size_t(T) + size_t(s)) * size_t(D);
          cand[size_t(s)] = {detail::dist2(a, b, D), s};
        }
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        for (int i = 0; i < k; ++i)
          out.entries.push_back({u, cand[size_t(i)].second, cand[size_t(i)].first});
      }
    }
  }
  return out;
}

template <class S>
NeighborIndex inter_view_knn(int n, int T, int D, const std::vector<S>& tokens, int k) {
  if (int64_t(tokens.size()) != int64_t(n) * T * D)
    throw ContractError("inter_view_knn: token buffer size mismatch");
  return inter_view_knn(n, T, D, tokens.data(), k);
}

// First-principles oracle: materializes the full distance matrix and sorts
// each anchor's candidate list naively.
template <class S>
NeighborIndex inter_view_knn_oracle(int n, int T, int D, const std::vector<S>& tokens, int k) {
  if (n < 2) throw ContractError("inter_view_knn_oracle: need at least 2 views");
  if (k < 1 || k > T) throw ContractError("inter_view_knn_oracle: bad k");
  int64_t N = int64_t(n) * T;
  std::vector<double> dm(size_t(N) * size_t(N), 0.0);
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = 0; j < N; ++j) {
      double d = 0;
      for (int c = 0; c < D; ++c) {
        double diff = double(tokens[size_t(i) * size_t(D) + size_t(c)]) -
                      double(tokens[size_t(j) * size_t(D) + size_t(c)]);
        d += diff * diff;
      }
      dm[size_t(i * N + j)] = d;
    }
  NeighborIndex out;
  out.views = n;
  out.tokens_per_view = T;
  out.k = k;
  for (int v = 0; v < n; ++v) {
    for (int t = 0; t < T; ++t) {
      int64_t a = int64_t(v) * T + t;
      for (int u = 0; u < n; ++u) {
        if (u == v) continue;
        std::vector<int> idx(static_cast<size_t>(T));
        for (int s = 0; s < T; ++s) idx[size_t(s)] = s;
        // stable sort on distance keeps token order ascending among ties
        std::stable_sort(idx.begin(), idx.end(), [&](int x, int y) {
          return dm[size_t(a * N + int64_t(u) * T + x)] < dm[size_t(a * N + int64_t(u) * T + y)];
        });
        for (int i = 0; i < k; ++i)
          out.entries.push_back({u, idx[size_t(i)], dm[size_t(a * N + int64_t(u) * T + idx[size_t(i)])]});
      }
    }
  }
  return out;
}

inline bool operator==(const NeighborEntry& a, const NeighborEntry& b) {
  return a.view == b.view && a.token == b.token && a.dist2 == b.dist2;
}

inline bool same_neighbors(const NeighborIndex& a, const NeighborIndex& b) {
  return a.views == b.views && a.tokens_per_view == b.tokens_per_view && a.k == b.k &&
         a.entries.size() == b.entries.size() &&
         std::equal(a.entries.begin(), a.entries.end(), b.entries.begin());
}

namespace detail {

// Shared post-processing: given per-token rho and the distance matrix row
// accessor, derive delta / centers / assignment. Token j outranks i when its
// density is strictly higher, or equal with a lower index; exactly one token
// is unranked and takes the global max distance as its delta.
struct DpcDerived {
  std::vector<double> delta;
  std::vector<double> gamma;
  std::vector<int> centers;
  std::vector<int> assignment;
};

template <class DistFn>
DpcDerived dpc_derive(int64_t N, int g, const std::vector<double>& rho, DistFn&& d2) {
  DpcDerived out;
  out.delta.assign(size_t(N), 0.0);
  out.gamma.assign(size_t(N), 0.0);
  auto outranks = [&](int64_t j, int64_t i) {
    return rho[size_t(j)] > rho[size_t(i)] || (rho[size_t(j)] == rho[size_t(i)] && j < i);
  };
  for (int64_t i = 0; i < N; ++i) {
    bool found = false;
    double best = 0.0;
    double maxd = 0.0;
    for (int64_t j = 0; j < N; ++j) {
      if (j == i) continue;
      double d = d2(i, j);
      maxd = std::max(maxd, d);
      if (outranks(j, i) && (!found || d < best)) {
        found = true;
        best = d;
      }
    }
    out.delta[size_t(i)] = std::sqrt(found ? best : maxd);
    out.gamma[size_t(i)] = rho[size_t(i)] * out.delta[size_t(i)];
  }
  std::vector<int> order(static_cast<size_t>(N));
  for (int64_t i = 0; i < N; ++i) order[size_t(i)] = int(i);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return out.gamma[size_t(x)] > out.gamma[size_t(y)];
  });
  out.centers.assign(order.begin(), order.begin() + g);
  std::sort(out.centers.begin(), out.centers.end());

  out.assignment.assign(size_t(N), -1);
  std::vector<char> is_center(size_t(N), 0);
  for (int gi = 0; gi < g; ++gi) {
    is_center[size_t(out.centers[size_t(gi)])] = 1;
    out.assignment[size_t(out.centers[size_t(gi)])] = gi;
  }
  for (int64_t i = 0; i < N; ++i) {
    if (is_center[size_t(i)]) continue;
    int bestg = 0;
    double bestd = d2(i, out.centers[0]);
    for (int gi = 1; gi < g; ++gi) {
      double d = d2(i, out.centers[size_t(gi)]);
      if (d < bestd) {
        bestd = d;
        bestg = gi;
      }
    }
    out.assignment[size_t(i)] = bestg;
  }
  return out;
}

}  // namespace detail

// DPC-KNN over N tokens of dimension D (flattened across views):
//   rho_i   = exp(-(1/k_dpc) * sum of squared distances to the k_dpc nearest
//             other tokens)
//   delta_i = Euclidean distance to the nearest token that outranks i in
//             density (global peak: max distance to any token)
//   centers = top-g tokens by rho*delta (ties: lower index), listed in
//             ascending token order; group id is the position in that list
//   every non-center joins the nearest center (ties: lower center index)
template <class S>
ClusterAssignment dpc_knn_cluster(int64_t N, int D, const S* tokens, int k_dpc, int g,
                                  const std::vector<double>& importance) {
  if (g < 1 || int64_t(g) > N)
    throw ContractError("dpc_knn_cluster: g=" + std::to_string(g) + " out of range for N=" +
                        std::to_string(N));
  if (k_dpc < 1 || int64_t(k_dpc) > N - 1)
    throw ContractError("dpc_knn_cluster: k_dpc=" + std::to_string(k_dpc) +
                        " out of range for N=" + std::to_string(N));
  if (int64_t(importance.size()) != N)
    throw ContractError("dpc_knn_cluster: importance size " + std::to_string(importance.size()) +
                        " != N=" + std::to_string(N));

  std::vector<double> dm(size_t(N) * size_t(N), 0.0);
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = i + 1; j < N; ++j) {
      double d = detail::dist2(tokens + size_t(i) * size_t(D), tokens + size_t(j) * size_t(D), D);
      dm[size_t(i * N + j)] = d;
      dm[size_t(j * N + i)] = d;
    }

  std::vector<double> rho(static_cast<size_t>(N));
  std::vector<std::pair<double, int64_t>> cand(static_cast<size_t>(N - 1));
  for (int64_t i = 0; i < N; ++i) {
    size_t c = 0;
    for (int64_t j = 0; j < N; ++j)
      if (j != i) cand[c++] = {dm[size_t(i * N + j)], j};
    std::partial_sort(cand.begin(), cand.begin() + k_dpc, cand.end());
    double sum = 0;
    for (int q = 0; q < k_dpc; ++q) sum += cand[size_t(q)].first;
    rho[size_t(i)] = std::exp(-sum / double(k_dpc));
  }

  auto derived = detail::dpc_derive(N, g, rho, [&](int64_t i, int64_t j) {
    return dm[size_t(i * N + j)];
  });

  ClusterAssignment out;
  out.g = g;
  out.assignment = std::move(derived.assignment);
  out.centers = std::move(derived.centers);
  out.rho = std::move(rho);
  out.delta = std::move(derived.delta);
  out.importance = importance;
  return out;
}

template <class S>
ClusterAssignment dpc_knn_cluster(int64_t N, int D, const std::vector<S>& tokens, int k_dpc,
                                  int g, const std::vector<double>& importance) {
  if (int64_t(tokens.size()) != N * D)
    throw ContractError("dpc_knn_cluster: token buffer size mismatch");
  return dpc_knn_cluster(N, D, tokens.data(), k_dpc, g, importance);
}

// Oracle variant: identical definitions, re-derived as a naive transcription
// with its own distance matrix, full sorts and linear scans. It shares no
// selection or derivation code with the production path.
template <class S>
ClusterAssignment dpc_knn_cluster_oracle(int64_t N, int D, const std::vector<S>& tokens,
                                         int k_dpc, int g, const std::vector<double>& importance) {
  if (g < 1 || int64_t(g) > N) throw ContractError("dpc_knn_cluster_oracle: bad g");
  if (k_dpc < 1 || int64_t(k_dpc) > N - 1) throw ContractError("dpc_knn_cluster_oracle: bad k_dpc");
  std::vector<double> dm(size_t(N) * size_t(N), 0.0);
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = 0; j < N; ++j) {
      double d = 0;
      for (int c = 0; c < D; ++c) {
        double diff = double(tokens[size_t(i) * size_t(D) + size_t(c)]) -
                      double(tokens[size_t(j) * size_t(D) + size_t(c)]);
        d += diff * diff;
      }
      dm[size_t(i * N + j)] = d;
    }

  std::vector<double> rho(static_cast<size_t>(N));
  for (int64_t i = 0; i < N; ++i) {
    std::vector<std::pair<double, int64_t>> all;
    for (int64_t j = 0; j < N; ++j)
      if (j != i) all.emplace_back(dm[size_t(i * N + j)], j);
    std::sort(all.begin(), all.end());
    double sum = 0;
    for (int q = 0; q < k_dpc; ++q) sum += all[size_t(q)].first;
    rho[size_t(i)] = std::exp(-sum / double(k_dpc));
  }

  // Rank tokens by (rho desc, index asc); delta looks at strictly better
  // ranked tokens only.
  std::vector<int> rank(static_cast<size_t>(N));
  for (int64_t i = 0; i < N; ++i) rank[size_t(i)] = int(i);
  std::sort(rank.begin(), rank.end(), [&](int x, int y) {
    if (rho[size_t(x)] != rho[size_t(y)]) return rho[size_t(x)] > rho[size_t(y)];
    return x < y;
  });
  std::vector<double> delta(size_t(N), 0.0);
  std::vector<double> gamma(size_t(N), 0.0);
  for (int64_t pos = 0; pos < N; ++pos) {
    int i = rank[size_t(pos)];
    if (pos == 0) {
      double maxd = 0;
      for (int64_t j = 0; j < N; ++j) maxd = std::max(maxd, dm[size_t(int64_t(i) * N + j)]);
      delta[size_t(i)] = std::sqrt(maxd);
    } else {
      double best = dm[size_t(int64_t(i) * N + rank[0])];
      for (int64_t q = 1; q < pos; ++q)
        best = std::min(best, dm[size_t(int64_t(i) * N + rank[size_t(q)])]);
      delta[size_t(i)] = std::sqrt(best);
    }
    gamma[size_t(i)] = rho[size_t(i)] * delta[size_t(i)];
  }

  std::vector<int> by_gamma(static_cast<size_t>(N));
  for (int64_t i = 0; i < N; ++i) by_gamma[size_t(i)] = int(i);
  std::sort(by_gamma.begin(), by_gamma.end(), [&](int x, int y) {
    if (gamma[size_t(x)] != gamma[size_t(y)]) return gamma[size_t(x)] > gamma[size_t(y)];
    return x < y;
  });
  std::vector<int> centers(by_gamma.begin(), by_gamma.begin() + g);
  std::sort(centers.begin(), centers.end());

  std::vector<int> assignment(size_t(N), -1);
  for (int gi = 0; gi < g; ++gi) assignment[size_t(centers[size_t(gi)])] = gi;
  for (int64_t i = 0; i < N; ++i) {
    if (assignment[size_t(i)] >= 0) continue;
    int bestg = 0;
    double bestd = dm[size_t(int64_t(i) * N + centers[0])];
    for (int gi = 1; gi < g; ++gi) {
      double d = dm[size_t(int64_t(i) * N + centers[size_t(gi)])];
      if (d < bestd) {
        bestd = d;
        bestg = gi;
      }
    }
    assignment[size_t(i)] = bestg;
  }

  ClusterAssignment out;
  out.g = g;
  out.assignment = std::move(assignment);
  out.centers = std::move(centers);
  out.rho = std::move(rho);
  out.delta = std::move(delta);
  out.importance = importance;
  return out;
}

inline bool same_clustering(const ClusterAssignment& a, const ClusterAssignment& b) {
  return a.g == b.g && a.assignment == b.assignment && a.centers == b.centers && a.rho == b.rho &&
         a.delta == b.delta;
}

}  // namespace umif
