#pragma once

// Shape reconstruction: learned query tokens attend over the encoder feature
// through a stack of decoder blocks, then a cube reshape and nearest-neighbor
// upsampling stages with pointwise 3D convolutions produce the S^3 occupancy
// probabilities.

#include <cmath>
#include <string>
#include <vector>

#include "umif/layers.hpp"
#include "umif/voxel.hpp"

namespace umif {

struct DecoderConfig {
  int64_t query_count = 8;  // must be a perfect cube
  int decoder_depth = 8;
  int64_t dim = 64;
  int heads = 4;
  int64_t mlp_ratio = 4;
  int voxel_size = 16;
  int upsample_stages = 3;

  int base_side() const {
    int s = int(std::lround(std::cbrt(double(query_count))));
    return s;
  }

  void validate() const {
    int s = base_side();
    if (int64_t(s) * s * s != query_count)
      throw ContractError("decoder config: query_count " + std::to_string(query_count) +
                          " is not a perfect cube");
    if ((s << upsample_stages) != voxel_size)
      throw ContractError("decoder config: cbrt(query_count)=" + std::to_string(s) + " * 2^" +
                          std::to_string(upsample_stages) + " != voxel_size " +
                          std::to_string(voxel_size));
    if (decoder_depth < 1) throw ContractError("decoder config: decoder_depth must be >= 1");
    if (dim % heads != 0) throw ContractError("decoder config: dim not divisible by heads");
  }

  // Channel widths after each upsample stage: halved per stage, floored at 8.
  std::vector<int64_t> stage_channels() const {
    std::vector<int64_t> ch;
    int64_t c = dim;
    for (int i = 0; i < upsample_stages; ++i) {
      c = std::max<int64_t>(c / 2, 8);
      ch.push_back(c);
    }
    return ch;
  }
};

template <class S>
struct DecoderBlock {
  LayerNorm<S> ln1, ln2, ln3;
  MultiHeadAttention<S> self_attn, cross_attn;
  Mlp<S> mlp;

  DecoderBlock() = default;
  DecoderBlock(ParamStore<S>& ps, const std::string& name, int64_t dim, int heads,
               int64_t mlp_ratio)
      : ln1(ps, name + ".ln1", dim),
        ln2(ps, name + ".ln2", dim),
        ln3(ps, name + ".ln3", dim),
        self_attn(ps, name + ".self", dim, heads),
        cross_attn(ps, name + ".cross", dim, heads),
        mlp(ps, name + ".mlp", dim, dim * mlp_ratio, dim) {}

  Tensor<S> forward(const Tensor<S>& u, const Tensor<S>& feature) const {
    Tensor<S> n1 = ln1.forward(u);
    Tensor<S> h = add(u, self_attn.forward(n1, n1));
    h = add(h, cross_attn.forward(ln2.forward(h), feature));
    return add(h, mlp.forward(ln3.forward(h)));
  }
};

template <class S>
struct Decoder {
  DecoderConfig cfg;
  Tensor<S> queries;  // [query_count, dim], learned
  LayerNorm<S> ln_feature, ln_out;
  std::vector<DecoderBlock<S>> blocks;
  std::vector<Tensor<S>> stage_w, stage_b;  // pointwise conv per upsample stage
  Tensor<S> final_w, final_b;               // 1-channel head, zero-initialized

  Decoder() = default;
  Decoder(ParamStore<S>& ps, const DecoderConfig& config) : cfg(config) {
    cfg.validate();
    queries = ps.add("decoder.queries", Shape{cfg.query_count, cfg.dim}, Init::Normal002);
    ln_feature = LayerNorm<S>(ps, "decoder.ln_feature", cfg.dim);
    ln_out = LayerNorm<S>(ps, "decoder.ln_out", cfg.dim);
    for (int b = 0; b < cfg.decoder_depth; ++b)
      blocks.emplace_back(ps, "decoder.block" + std::to_string(b), cfg.dim, cfg.heads,
                          cfg.mlp_ratio);
    int64_t cin = cfg.dim;
    auto ch = cfg.stage_channels();
    for (int i = 0; i < cfg.upsample_stages; ++i) {
      stage_w.push_back(ps.add("decoder.up" + std::to_string(i) + ".w", Shape{ch[size_t(i)], cin},
                               Init::Normal002));
      stage_b.push_back(
          ps.add("decoder.up" + std::to_string(i) + ".b", Shape{ch[size_t(i)]}, Init::Zeros));
      cin = ch[size_t(i)];
    }
    // Zero head: the untrained decoder outputs exactly 0.5 everywhere.
    final_w = ps.add("decoder.head.w", Shape{1, cin}, Init::Zeros);
    final_b = ps.add("decoder.head.b", Shape{1}, Init::Zeros);
  }

  // feature: [g, dim]. Returns occupancy probabilities [S, S, S].
  Tensor<S> forward(const Tensor<S>& feature) const {
    if (feature.rank() != 2 || feature.shape()[1] != cfg.dim)
      throw ContractError("decode: feature must be [g," + std::to_string(cfg.dim) + "], got " +
                          shape_str(feature.shape()));
    Tensor<S> f = ln_feature.forward(feature);
    Tensor<S> u = queries;
    for (const auto& b : blocks) u = b.forward(u, f);
    u = ln_out.forward(u);

    int64_t s = cfg.base_side();
    Tensor<S> v = reshape(transpose(u, {1, 0}), Shape{cfg.dim, s, s, s});
    for (int i = 0; i < cfg.upsample_stages; ++i) {
      v = upsample_nearest3d(v);
      v = conv3d_pointwise(v, stage_w[size_t(i)]);
      Shape bshape{stage_b[size_t(i)].shape()[0], 1, 1, 1};
      v = add(v, broadcast_to(reshape(stage_b[size_t(i)], bshape), v.shape()));
      v = gelu(v);
    }
    Tensor<S> logits = conv3d_pointwise(v, final_w);
    Shape fbshape{1, 1, 1, 1};
    logits = add(logits, broadcast_to(reshape(final_b, fbshape), logits.shape()));
    Tensor<S> probs = sigmoid(logits);
    int64_t S3 = cfg.voxel_size;
    return reshape(probs, Shape{S3, S3, S3});
  }
};

// Copy a probability tensor into a VoxelGrid.
template <class S>
VoxelGrid to_voxel_grid(const Tensor<S>& probs) {
  if (probs.rank() != 3 || probs.shape()[0] != probs.shape()[1] ||
      probs.shape()[1] != probs.shape()[2])
    throw ContractError("to_voxel_grid: expected cubic [S,S,S], got " + shape_str(probs.shape()));
  VoxelGrid g(int(probs.shape()[0]));
  for (size_t i = 0; i < g.values.size(); ++i) g.values[i] = float(probs.value()[i]);
  return g;
}

}  // namespace umif
