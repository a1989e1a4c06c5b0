#pragma once

// Feature extractor: patch embedding, per-view transformer blocks, periodic
// inter-view token rectification, and one of three mergers that compress a
// variable number of views into a fixed g x D feature.

#include <string>
#include <vector>

#include "umif/layers.hpp"
#include "umif/token_geometry.hpp"

namespace umif {

enum class Rectification { FcMapping, Offset, OffsetWeight };
enum class Merger { Pbm, Abm, Stm };

struct EncoderConfig {
  int image_size = 32;
  int patch_size = 8;
  int channels = 1;
  int64_t dim = 64;
  int depth = 4;
  int heads = 4;
  int64_t mlp_ratio = 4;
  int ivdb_period = 2;  // insert after every ivdb_period-th block; 0 = never
  bool ivdb_once = false;
  int k = 3;
  int k_dpc = 5;
  int g = 16;
  Rectification rectification = Rectification::OffsetWeight;
  Merger merger = Merger::Stm;

  int tokens_per_view() const {
    int side = image_size / patch_size;
    return side * side;
  }
  int patch_dim() const { return patch_size * patch_size * channels; }

  // 1-based block indices after which a rectification block runs.
  std::vector<int> ivdb_positions() const {
    std::vector<int> pos;
    if (ivdb_period > 0) {
      for (int b = ivdb_period; b <= depth; b += ivdb_period) {
        pos.push_back(b);
        if (ivdb_once) break;
      }
    }
    return pos;
  }

  void validate() const {
    if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
      throw ContractError("encoder config: image_size " + std::to_string(image_size) +
                          " not divisible by patch_size " + std::to_string(patch_size));
    if (depth < 1) throw ContractError("encoder config: depth must be >= 1");
    if (dim % heads != 0)
      throw ContractError("encoder config: dim " + std::to_string(dim) +
                          " not divisible by heads " + std::to_string(heads));
    if (k < 1 || k > tokens_per_view())
      throw ContractError("encoder config: k must be in [1, T]");
    if (g < 1) throw ContractError("encoder config: g must be positive");
    if (k_dpc < 1) throw ContractError("encoder config: k_dpc must be positive");
    if ((merger == Merger::Pbm || merger == Merger::Abm) && g != tokens_per_view())
      throw ContractError("encoder config: pbm/abm require g == T (got g=" + std::to_string(g) +
                          ", T=" + std::to_string(tokens_per_view()) + ")");
  }
};

// Per-forward instrumentation for the inspect report.
struct EncoderTrace {
  std::vector<NeighborIndex> ivdb_neighbors;
  ClusterAssignment stm_clusters;
  std::vector<int> stm_group_order;
  bool has_clusters = false;
};

// Cut images into non-overlapping patches: [n, H, W, C] pixels to a
// [n, T, P*P*C] leaf (patches row-major over the patch grid, pixels
// row-major within a patch).
template <class S>
Tensor<S> patchify(int n, int H, int W, int C, const std::vector<float>& pixels, int patch) {
  if (int64_t(pixels.size()) != int64_t(n) * H * W * C)
    throw ContractError("patchify: pixel buffer size mismatch");
  if (H % patch != 0 || W % patch != 0)
    throw ContractError("patchify: image " + std::to_string(H) + "x" + std::to_string(W) +
                        " not divisible by patch " + std::to_string(patch));
  int gh = H / patch, gw = W / patch;
  int64_t T = int64_t(gh) * gw;
  int64_t P = int64_t(patch) * patch * C;
  std::vector<S> out(size_t(n * T * P));
  for (int v = 0; v < n; ++v)
    for (int pr = 0; pr < gh; ++pr)
      for (int pc = 0; pc < gw; ++pc)
        for (int i = 0; i < patch; ++i)
          for (int j = 0; j < patch; ++j)
            for (int c = 0; c < C; ++c) {
              int64_t src = ((int64_t(v) * H + pr * patch + i) * W + pc * patch + j) * C + c;
              int64_t dst = (int64_t(v) * T + pr * gw + pc) * P + (int64_t(i) * patch + j) * C + c;
              out[size_t(dst)] = S(pixels[size_t(src)]);
            }
  return Tensor<S>::leaf(Shape{n, T, P}, std::move(out), false);
}

// Inter-view-decoupled rectification. Each anchor gathers its k nearest
// tokens from every other view, embeds the difference vectors, fuses them,
// and predicts an update in one of three ways:
//   offset:        x' = x + MLP_os([x, r])
//   offset_weight: x' = x + tanh(MLP_ow([x, r])) * x
//   fc_mapping:    x' = FC([x, r])
// The offset MLPs' final layers start at zero, so rectification is the
// identity at initialization.
template <class S>
struct Ivdb {
  Mlp<S> edge_mlp;
  AttentionFusion<S> fusion;
  Mlp<S> offset_mlp;
  Linear<S> fc_map;
  Rectification strategy = Rectification::OffsetWeight;
  int k = 1;

  Ivdb() = default;
  Ivdb(ParamStore<S>& ps, const std::string& name, int64_t dim, int k_, Rectification strat)
      : strategy(strat), k(k_) {
    edge_mlp = Mlp<S>(ps, name + ".edge", dim, dim, dim);
    fusion = AttentionFusion<S>(ps, name + ".fusion", dim);
    if (strategy == Rectification::FcMapping) {
      fc_map = Linear<S>(ps, name + ".fc", 2 * dim, dim);
    } else {
      offset_mlp = Mlp<S>(ps, name + ".offset", 2 * dim, dim, dim, Init::Zeros);
    }
  }

  // tokens: [n, T, D], n >= 2.
  Tensor<S> forward(const Tensor<S>& tokens, NeighborIndex* trace) const {
    int n = int(tokens.shape()[0]);
    int T = int(tokens.shape()[1]);
    int D = int(tokens.shape()[2]);
    if (n < 2) throw ContractError("ivdb: need at least 2 views");
    NeighborIndex knn = inter_view_knn(n, T, D, tokens.value().data(), k);
    int64_t N = int64_t(n) * T;
    int64_t K = knn.per_anchor();

    Tensor<S> flat = reshape(tokens, Shape{N, D});
    std::vector<int64_t> idx(size_t(N * K));
    for (int64_t a = 0; a < N; ++a)
      for (int64_t e = 0; e < K; ++e) {
        const NeighborEntry& ne = knn.entries[size_t(a * K + e)];
        idx[size_t(a * K + e)] = int64_t(ne.view) * T + ne.token;
      }
    Tensor<S> neighbors = reshape(gather(flat, 0, std::move(idx)), Shape{N, K, D});
    Tensor<S> anchors = broadcast_to(reshape(flat, Shape{N, 1, D}), Shape{N, K, D});
    Tensor<S> edges = edge_mlp.forward(sub(neighbors, anchors));
    Tensor<S> related = fusion.forward(edges).fused;  // [N, D]

    Tensor<S> xr = concat<S>({flat, related}, 1);  // [N, 2D]
    Tensor<S> out;
    switch (strategy) {
      case Rectification::Offset:
        out = add(flat, offset_mlp.forward(xr));
        break;
      case Rectification::OffsetWeight:
        out = add(flat, mul(tanh(offset_mlp.forward(xr)), flat));
        break;
      case Rectification::FcMapping:
        out = fc_map.forward(xr);
        break;
    }
    if (trace) *trace = std::move(knn);
    return reshape(out, tokens.shape());
  }
};

// Similar-token merger: cluster all views' tokens into g groups, fuse each
// group into a query, attend back over every token with an additive
// per-key importance bias, then run one transformer block.
template <class S>
struct Stm {
  Linear<S> scorer;  // importance branch, zero-initialized
  MultiHeadAttention<S> mha;
  TransformerBlock<S> block;
  int k_dpc = 5;
  int g = 16;

  Stm() = default;
  Stm(ParamStore<S>& ps, const std::string& name, int64_t dim, int heads, int64_t mlp_ratio,
      int k_dpc_, int g_)
      : scorer(ps, name + ".score", dim, dim, Init::Zeros),
        mha(ps, name + ".mha", dim, heads),
        block(ps, name + ".block", dim, heads, mlp_ratio),
        k_dpc(k_dpc_),
        g(g_) {}

  // Everything up to and including the importance-weighted cross attention;
  // the final transformer block is applied by forward().
  Tensor<S> forward_weighted(const Tensor<S>& tokens, EncoderTrace* trace) const {
    int n = int(tokens.shape()[0]);
    int T = int(tokens.shape()[1]);
    int D = int(tokens.shape()[2]);
    int64_t N = int64_t(n) * T;
    if (N < g)
      throw ContractError("stm: g=" + std::to_string(g) + " exceeds token count " +
                          std::to_string(N));

    Tensor<S> flat = reshape(tokens, Shape{N, D});
    Tensor<S> logits = scorer.forward(flat);          // [N, D]
    Tensor<S> key_bias = reduce_mean(logits, -1);     // [N] importance per token

    std::vector<double> importance(static_cast<size_t>(N));
    for (int64_t i = 0; i < N; ++i) importance[size_t(i)] = double(key_bias.value()[size_t(i)]);
    ClusterAssignment ca = dpc_knn_cluster(N, D, flat.value().data(), k_dpc, g, importance);

    // Group order is canonicalized by the centers' rho*delta (descending,
    // then center index) so the output rows do not depend on the order the
    // views were flattened in.
    std::vector<int> order(static_cast<size_t>(g));
    for (int i = 0; i < g; ++i) order[size_t(i)] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      double ga = ca.rho[size_t(ca.centers[size_t(a)])] * ca.delta[size_t(ca.centers[size_t(a)])];
      double gb = ca.rho[size_t(ca.centers[size_t(b)])] * ca.delta[size_t(ca.centers[size_t(b)])];
      if (ga != gb) return ga > gb;
      return ca.centers[size_t(a)] < ca.centers[size_t(b)];
    });

    std::vector<std::vector<int64_t>> members(static_cast<size_t>(g));
    for (int64_t i = 0; i < N; ++i) members[size_t(ca.assignment[size_t(i)])].push_back(i);

    std::vector<Tensor<S>> fused_rows;
    fused_rows.reserve(size_t(g));
    for (int gi = 0; gi < g; ++gi) {
      const auto& idx = members[size_t(order[size_t(gi)])];
      Tensor<S> e = gather(flat, 0, idx);        // [m, D]
      Tensor<S> l = gather(logits, 0, idx);      // [m, D]
      Tensor<S> w = softmax(l, 0);
      Tensor<S> fused = reduce_sum(mul(w, e), 0);  // [D]
      fused_rows.push_back(reshape(fused, Shape{1, D}));
    }
    Tensor<S> queries = concat(fused_rows, 0);  // [g, D]

    Tensor<S> merged = mha.forward(queries, flat, &key_bias);
    if (trace) {
      trace->stm_clusters = std::move(ca);
      trace->stm_group_order = std::move(order);
      trace->has_clusters = true;
    }
    return merged;
  }

  Tensor<S> forward(const Tensor<S>& tokens, EncoderTrace* trace) const {
    return block.forward(forward_weighted(tokens, trace));
  }
};

template <class S>
struct Encoder {
  EncoderConfig cfg;
  Linear<S> patch_proj;
  Tensor<S> pos_embed;  // [T, D], shared by every view
  std::vector<TransformerBlock<S>> blocks;
  std::vector<Ivdb<S>> ivdbs;
  Stm<S> stm;
  AttentionFusion<S> abm;

  Encoder() = default;
  Encoder(ParamStore<S>& ps, const EncoderConfig& config) : cfg(config) {
    cfg.validate();
    int64_t T = cfg.tokens_per_view();
    patch_proj = Linear<S>(ps, "encoder.patch", cfg.patch_dim(), cfg.dim);
    pos_embed = ps.add("encoder.pos_embed", Shape{T, cfg.dim}, Init::Normal002);
    for (int b = 0; b < cfg.depth; ++b)
      blocks.emplace_back(ps, "encoder.block" + std::to_string(b), cfg.dim, cfg.heads,
                          cfg.mlp_ratio);
    auto positions = cfg.ivdb_positions();
    for (size_t i = 0; i < positions.size(); ++i)
      ivdbs.emplace_back(ps, "encoder.ivdb" + std::to_string(i), cfg.dim, cfg.k,
                         cfg.rectification);
    if (cfg.merger == Merger::Stm)
      stm = Stm<S>(ps, "encoder.stm", cfg.dim, cfg.heads, cfg.mlp_ratio, cfg.k_dpc, cfg.g);
    else if (cfg.merger == Merger::Abm)
      abm = AttentionFusion<S>(ps, "encoder.abm", cfg.dim);
  }

  // patches: [n, T, P*P*C] leaf from patchify().
  Tensor<S> patch_embed(const Tensor<S>& patches) const {
    int64_t T = patches.shape()[1];
    if (T != cfg.tokens_per_view())
      throw ContractError("patch_embed: expected T=" + std::to_string(cfg.tokens_per_view()) +
                          ", got " + std::to_string(T));
    if (patches.shape()[2] != cfg.patch_dim())
      throw ContractError("patch_embed: expected patch dim " + std::to_string(cfg.patch_dim()) +
                          ", got " + std::to_string(patches.shape()[2]));
    Tensor<S> tok = patch_proj.forward(patches);
    Tensor<S> pos = broadcast_to(reshape(pos_embed, Shape{1, T, cfg.dim}), tok.shape());
    return add(tok, pos);
  }

  // Pooling-based merger: elementwise max over the view axis.
  Tensor<S> pbm(const Tensor<S>& tokens) const { return reduce_max(tokens, 0); }

  // Attention-based merger: fuse across views independently at each token
  // position.
  Tensor<S> abm_merge(const Tensor<S>& tokens) const {
    Tensor<S> per_pos = transpose(tokens, {1, 0, 2});  // [T, n, D]
    return abm.forward(per_pos).fused;                 // [T, D]
  }

  Tensor<S> forward(const Tensor<S>& patches, EncoderTrace* trace = nullptr) const {
    int64_t n = patches.shape()[0];
    Tensor<S> tok = patch_embed(patches);
    auto positions = cfg.ivdb_positions();
    size_t next_ivdb = 0;
    for (int b = 1; b <= cfg.depth; ++b) {
      tok = blocks[size_t(b - 1)].forward(tok);
      if (next_ivdb < positions.size() && positions[next_ivdb] == b) {
        if (n >= 2) {
          NeighborIndex* ni = nullptr;
          if (trace) {
            trace->ivdb_neighbors.emplace_back();
            ni = &trace->ivdb_neighbors.back();
          }
          tok = ivdbs[next_ivdb].forward(tok, ni);
        }
        ++next_ivdb;
      }
    }
    switch (cfg.merger) {
      case Merger::Pbm:
        return pbm(tok);
      case Merger::Abm:
        return abm_merge(tok);
      case Merger::Stm:
        return stm.forward(tok, trace);
    }
    throw ContractError("encoder: unknown merger");
  }
};

}  // namespace umif
