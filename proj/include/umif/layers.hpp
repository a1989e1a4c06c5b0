#pragma once

#include <string>
#include <vector>

#include "umif/optim.hpp"
#include "umif/tensor.hpp"

namespace umif {

// y = x @ W + b for x of shape [..., in]. The bias is reshaped to rank(y)
// with leading 1s and explicitly broadcast.
template <class S>
struct Linear {
  Tensor<S> w, b;

  Linear() = default;
  Linear(ParamStore<S>& ps, const std::string& name, int64_t in, int64_t out,
         Init weight_init = Init::Normal002) {
    w = ps.add(name + ".w", Shape{in, out}, weight_init);
    b = ps.add(name + ".b", Shape{out}, Init::Zeros);
  }

  Tensor<S> forward(const Tensor<S>& x) const {
    Tensor<S> y = matmul(x, w);
    Shape bshape(y.shape().size(), 1);
    bshape.back() = b.shape()[0];
    return add(y, broadcast_to(reshape(b, bshape), y.shape()));
  }
};

// Affine layer normalization over the last axis; the normalization itself is
// the primitive layernorm op, gamma/beta are composed on top.
template <class S>
struct LayerNorm {
  Tensor<S> gamma, beta;
  double eps = 1e-5;

  LayerNorm() = default;
  LayerNorm(ParamStore<S>& ps, const std::string& name, int64_t dim) {
    gamma = ps.add(name + ".gamma", Shape{dim}, Init::Ones);
    beta = ps.add(name + ".beta", Shape{dim}, Init::Zeros);
  }

  Tensor<S> forward(const Tensor<S>& x) const {
    Tensor<S> h = layernorm(x, -1, eps);
    Shape bshape(x.shape().size(), 1);
    bshape.back() = gamma.shape()[0];
    Tensor<S> g = broadcast_to(reshape(gamma, bshape), x.shape());
    Tensor<S> b = broadcast_to(reshape(beta, bshape), x.shape());
    return add(mul(h, g), b);
  }
};

// Two-layer MLP with GELU between.
template <class S>
struct Mlp {
  Linear<S> fc1, fc2;

  Mlp() = default;
  Mlp(ParamStore<S>& ps, const std::string& name, int64_t in, int64_t hidden, int64_t out,
      Init out_init = Init::Normal002)
      : fc1(ps, name + ".fc1", in, hidden),
        fc2(ps, name + ".fc2", hidden, out, out_init) {}

  Tensor<S> forward(const Tensor<S>& x) const { return fc2.forward(gelu(fc1.forward(x))); }
};

// Multi-head attention with optional additive logit bias per key token
// (one scalar per key, shared across heads and query rows). Query and
// key/value sources may differ (cross attention); inputs are [T, D] or
// [B, T, D].
template <class S>
struct MultiHeadAttention {
  Linear<S> wq, wk, wv, wo;
  int heads = 1;
  int64_t dim = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<S>& ps, const std::string& name, int64_t d, int h)
      : wq(ps, name + ".wq", d, d),
        wk(ps, name + ".wk", d, d),
        wv(ps, name + ".wv", d, d),
        wo(ps, name + ".wo", d, d),
        heads(h),
        dim(d) {
    if (d % h != 0)
      throw ContractError("attention: dim " + std::to_string(d) + " not divisible by heads " +
                          std::to_string(h));
  }

  Tensor<S> forward(const Tensor<S>& q_in, const Tensor<S>& kv_in,
                    const Tensor<S>* key_bias = nullptr) const {
    bool batched = q_in.rank() == 3;
    Tensor<S> q = batched ? q_in : reshape(q_in, Shape{1, q_in.shape()[0], q_in.shape()[1]});
    Tensor<S> kv = kv_in.rank() == 3
                       ? kv_in
                       : reshape(kv_in, Shape{1, kv_in.shape()[0], kv_in.shape()[1]});
    int64_t B = q.shape()[0], Tq = q.shape()[1], Tk = kv.shape()[1];
    int64_t hd = dim / heads;

    auto split = [&](const Tensor<S>& x, int64_t t) {
      return transpose(reshape(x, Shape{x.shape()[0], t, heads, hd}), {0, 2, 1, 3});
    };
    Tensor<S> qh = split(wq.forward(q), Tq);   // [B, H, Tq, hd]
    Tensor<S> kh = split(wk.forward(kv), Tk);  // [B, H, Tk, hd]
    Tensor<S> vh = split(wv.forward(kv), Tk);

    Tensor<S> scores = matmul(qh, transpose(kh, {0, 1, 3, 2}));  // [B, H, Tq, Tk]
    scores = scalar_mul(scores, S(1.0 / std::sqrt(double(hd))));
    if (key_bias != nullptr) {
      if (key_bias->rank() != 1 || key_bias->shape()[0] != Tk)
        throw ContractError("attention: key bias must be [Tk], got " +
                            shape_str(key_bias->shape()));
      Tensor<S> kb = broadcast_to(reshape(*key_bias, Shape{1, 1, 1, Tk}), scores.shape());
      scores = add(scores, kb);
    }
    Tensor<S> attn = softmax(scores, -1);
    Tensor<S> ctx = matmul(attn, vh);                       // [B, H, Tq, hd]
    ctx = reshape(transpose(ctx, {0, 2, 1, 3}), Shape{B, Tq, dim});
    Tensor<S> out = wo.forward(ctx);
    return batched ? out : reshape(out, Shape{Tq, dim});
  }
};

// Pre-norm transformer block: x + MHA(LN(x)) then + MLP(LN(.)).
template <class S>
struct TransformerBlock {
  LayerNorm<S> ln1, ln2;
  MultiHeadAttention<S> attn;
  Mlp<S> mlp;

  TransformerBlock() = default;
  TransformerBlock(ParamStore<S>& ps, const std::string& name, int64_t dim, int heads,
                   int64_t mlp_ratio)
      : ln1(ps, name + ".ln1", dim),
        ln2(ps, name + ".ln2", dim),
        attn(ps, name + ".mha", dim, heads),
        mlp(ps, name + ".mlp", dim, dim * mlp_ratio, dim) {}

  Tensor<S> forward(const Tensor<S>& x) const {
    Tensor<S> n1 = ln1.forward(x);
    Tensor<S> h = add(x, attn.forward(n1, n1));
    return add(h, mlp.forward(ln2.forward(h)));
  }
};

// Attention-based set fusion. A learned scoring map produces per-element,
// per-channel logits; softmax over the set axis weights a sum. The exported
// per-element score is the channel mean of the logits (the pre-softmax
// importance reused downstream).
template <class S>
struct AttentionFusion {
  Linear<S> scorer;

  AttentionFusion() = default;
  AttentionFusion(ParamStore<S>& ps, const std::string& name, int64_t dim,
                  Init weight_init = Init::Normal002)
      : scorer(ps, name + ".score", dim, dim, weight_init) {}

  struct Result {
    Tensor<S> fused;   // [..., D]
    Tensor<S> scores;  // [..., m]
  };

  // set: [m, D] or [B, m, D]; fuses over the m axis.
  Result forward(const Tensor<S>& set) const {
    if (set.rank() != 2 && set.rank() != 3)
      throw ContractError("attention_fusion: expected [m,D] or [B,m,D], got " +
                          shape_str(set.shape()));
    int64_t m = set.shape()[set.rank() - 2];
    if (m < 1) throw ContractError("attention_fusion: empty set");
    int set_axis = set.rank() - 2;
    Tensor<S> logits = scorer.forward(set);
    Tensor<S> weights = softmax(logits, set_axis);
    Tensor<S> fused = reduce_sum(mul(weights, set), set_axis);
    Tensor<S> scores = reduce_mean(logits, -1);
    return {fused, scores};
  }
};

}  // namespace umif
