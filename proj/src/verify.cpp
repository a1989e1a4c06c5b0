#include "umif/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "umif/checkpoint.hpp"
#include "umif/csv.hpp"
#include "umif/dataset.hpp"
#include "umif/model.hpp"
#include "umif/train.hpp"

namespace umif {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor<double> rand_leaf(Rng& rng, Shape shape, double lo, double hi, bool rg = true) {
  std::vector<double> d(size_t(numel(shape)));
  for (auto& v : d) v = rng.uniform(lo, hi);
  return Tensor<double>::leaf(std::move(shape), std::move(d), rg);
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor<double>()>& loss_fn,
                           std::vector<Tensor<double>> leaves, const GradCheckOptions& opts) {
  for (auto& l : leaves) l.zero_grad();
  Tensor<double> loss = loss_fn();
  if (loss.size() != 1) throw ContractError("grad_check: loss is not scalar");
  backward(loss);

  std::vector<std::vector<double>> analytic(leaves.size());
  for (size_t i = 0; i < leaves.size(); ++i)
    analytic[i] = leaves[i].has_grad() ? leaves[i].grad()
                                       : std::vector<double>(size_t(leaves[i].size()), 0.0);

  Rng pick(opts.component_seed);
  double max_abs_diff = 0, max_mag = 0;
  std::string worst;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& data = leaves[li].data();
    std::vector<size_t> comps;
    if (opts.max_components_per_leaf < 0 ||
        int64_t(data.size()) <= opts.max_components_per_leaf) {
      comps.resize(data.size());
      for (size_t i = 0; i < data.size(); ++i) comps[i] = i;
    } else {
      for (int i = 0; i < opts.max_components_per_leaf; ++i)
        comps.push_back(size_t(pick.uniform_int(0, int64_t(data.size()) - 1)));
    }
    for (size_t ci : comps) {
      double x0 = data[ci];
      double h = 6.0554544523933395e-06 * std::max(1.0, std::abs(x0));
      data[ci] = x0 + h;
      double lp = loss_fn().item();
      data[ci] = x0 - h;
      double lm = loss_fn().item();
      data[ci] = x0;
      double fd = (lp - lm) / (2.0 * h);
      double an = analytic[li][ci];
      double diff = std::abs(an - fd);
      max_mag = std::max({max_mag, std::abs(an), std::abs(fd)});
      if (diff > max_abs_diff) {
        max_abs_diff = diff;
        worst = "leaf " + std::to_string(li) + "[" + std::to_string(ci) + "] analytic " +
                fmt_g(an) + " vs fd " + fmt_g(fd);
      }
    }
  }
  GradCheckResult res;
  res.rel_error = max_abs_diff / std::max(1e-3, max_mag);
  res.pass = res.rel_error < opts.tolerance;
  res.detail = "rel " + fmt_g(res.rel_error) + (worst.empty() ? "" : " (" + worst + ")");
  return res;
}

namespace {

struct OpCase {
  std::vector<Tensor<double>> leaves;
  std::function<Tensor<double>()> fn;
};

// A randomized instance per op kind; `variant` cycles sub-forms.
OpCase make_op_case(const std::string& op, Rng& rng, int variant) {
  OpCase c;
  auto finish = [&](std::function<Tensor<double>()> build) {
    // freeze loss coefficients against the first output shape
    Tensor<double> probe = build();
    std::vector<double> coefs(size_t(probe.size()));
    for (auto& v : coefs) v = rng.uniform(0.5, 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    Tensor<double> coef_leaf = Tensor<double>::leaf(probe.shape(), std::move(coefs), false);
    c.fn = [build, coef_leaf]() { return sum_all(mul(build(), coef_leaf)); };
  };

  if (op == "matmul") {
    if (variant % 3 == 0) {
      auto a = rand_leaf(rng, {3, 4}, -1, 1), b = rand_leaf(rng, {4, 2}, -1, 1);
      c.leaves = {a, b};
      finish([a, b] { return matmul(a, b); });
    } else if (variant % 3 == 1) {
      auto a = rand_leaf(rng, {2, 3, 4}, -1, 1), b = rand_leaf(rng, {2, 4, 2}, -1, 1);
      c.leaves = {a, b};
      finish([a, b] { return matmul(a, b); });
    } else {
      auto a = rand_leaf(rng, {2, 3, 4}, -1, 1), b = rand_leaf(rng, {4, 2}, -1, 1);
      c.leaves = {a, b};
      finish([a, b] { return matmul(a, b); });
    }
  } else if (op == "add" || op == "sub" || op == "mul") {
    auto a = rand_leaf(rng, {2, 3}, -1, 1), b = rand_leaf(rng, {2, 3}, -1, 1);
    c.leaves = {a, b};
    if (op == "add") finish([a, b] { return add(a, b); });
    if (op == "sub") finish([a, b] { return sub(a, b); });
    if (op == "mul") finish([a, b] { return mul(a, b); });
  } else if (op == "scalar_mul") {
    auto a = rand_leaf(rng, {2, 3}, -1, 1);
    double k = rng.uniform(-2, 2);
    c.leaves = {a};
    finish([a, k] { return scalar_mul(a, k); });
  } else if (op == "div") {
    auto a = rand_leaf(rng, {2, 3}, -1, 1);
    auto b = rand_leaf(rng, {2, 3}, 0.5, 2.0);
    if (variant % 2) for (auto& v : b.data()) v = -v;
    c.leaves = {a, b};
    finish([a, b] { return div(a, b); });
  } else if (op == "exp") {
    auto a = rand_leaf(rng, {2, 3}, -1, 1);
    c.leaves = {a};
    finish([a] { return exp(a); });
  } else if (op == "log") {
    auto a = rand_leaf(rng, {2, 3}, 0.5, 2.0);
    c.leaves = {a};
    finish([a] { return log(a); });
  } else if (op == "tanh") {
    auto a = rand_leaf(rng, {2, 3}, -2, 2);
    c.leaves = {a};
    finish([a] { return tanh(a); });
  } else if (op == "gelu") {
    auto a = rand_leaf(rng, {2, 3}, -2, 2);
    c.leaves = {a};
    finish([a] { return gelu(a); });
  } else if (op == "softmax") {
    auto a = rand_leaf(rng, {2, 5}, -2, 2);
    int axis = variant % 2;
    c.leaves = {a};
    finish([a, axis] { return softmax(a, axis); });
  } else if (op == "layernorm") {
    auto a = rand_leaf(rng, {3, 6}, -1, 1);
    c.leaves = {a};
    finish([a] { return layernorm(a, -1, 1e-5); });
  } else if (op == "reduce_sum" || op == "reduce_mean" || op == "reduce_max") {
    auto a = rand_leaf(rng, {2, 3, 4}, -1, 1);
    int axis = variant % 3;
    c.leaves = {a};
    if (op == "reduce_sum") finish([a, axis] { return reduce_sum(a, axis); });
    if (op == "reduce_mean") finish([a, axis] { return reduce_mean(a, axis); });
    if (op == "reduce_max") finish([a, axis] { return reduce_max(a, axis); });
  } else if (op == "reshape") {
    auto a = rand_leaf(rng, {2, 6}, -1, 1);
    c.leaves = {a};
    finish([a] { return reshape(a, {4, 3}); });
  } else if (op == "transpose") {
    auto a = rand_leaf(rng, {2, 3, 4}, -1, 1);
    static const std::vector<std::vector<int>> perms = {{1, 2, 0}, {2, 0, 1}, {0, 2, 1}};
    auto perm = perms[size_t(variant % 3)];
    c.leaves = {a};
    finish([a, perm] { return transpose(a, perm); });
  } else if (op == "concat") {
    if (variant % 2 == 0) {
      auto a = rand_leaf(rng, {2, 3}, -1, 1), b = rand_leaf(rng, {2, 2}, -1, 1);
      c.leaves = {a, b};
      finish([a, b] { return concat<double>({a, b}, 1); });
    } else {
      auto a = rand_leaf(rng, {2, 3}, -1, 1), b = rand_leaf(rng, {1, 3}, -1, 1);
      c.leaves = {a, b};
      finish([a, b] { return concat<double>({a, b}, 0); });
    }
  } else if (op == "gather") {
    auto a = rand_leaf(rng, {5, 3}, -1, 1);
    c.leaves = {a};
    if (variant % 2 == 0) {
      finish([a] { return gather(a, 0, {2, 0, 2, 4}); });  // duplicate rows scatter-add
    } else {
      finish([a] { return gather(a, 1, {1, 1, 0}); });
    }
  } else if (op == "broadcast") {
    if (variant % 2 == 0) {
      auto a = rand_leaf(rng, {3}, -1, 1);
      c.leaves = {a};
      finish([a] { return broadcast_to(a, {2, 4, 3}); });
    } else {
      auto a = rand_leaf(rng, {2, 1, 3}, -1, 1);
      c.leaves = {a};
      finish([a] { return broadcast_to(a, {2, 4, 3}); });
    }
  } else if (op == "upsample_nearest3d") {
    auto a = rand_leaf(rng, {2, 2, 2, 2}, -1, 1);
    c.leaves = {a};
    finish([a] { return upsample_nearest3d(a); });
  } else if (op == "conv3d_pointwise") {
    auto x = rand_leaf(rng, {3, 2, 2, 2}, -1, 1);
    auto w = rand_leaf(rng, {2, 3}, -1, 1);
    c.leaves = {x, w};
    finish([x, w] { return conv3d_pointwise(x, w); });
  } else {
    throw ContractError("no gradient-check generator for op kind '" + op + "'");
  }
  return c;
}

RunConfig composed_tiny_cfg(int variant) {
  RunConfig cfg;
  cfg.seed = 100 + uint64_t(variant);
  cfg.image_size = 8;
  cfg.patch_size = 4;  // T = 4
  cfg.channels = 1;
  cfg.dim = 8;
  cfg.depth = 2;
  cfg.heads = 2;
  cfg.mlp_ratio = 2;
  cfg.ivdb_period = 1;
  cfg.k = 2;
  cfg.k_dpc = 3;
  cfg.g = 2;
  cfg.rectification =
      variant % 3 == 0 ? "offset_weight" : (variant % 3 == 1 ? "offset" : "fc_mapping");
  cfg.merger = "stm";
  cfg.query_count = 8;
  cfg.decoder_depth = 1;
  cfg.voxel_size = 4;
  cfg.upsample_stages = 1;
  return cfg;
}

std::vector<Image> random_images(Rng& rng, int n, int size, bool binary = false) {
  std::vector<Image> out(static_cast<size_t>(n));
  for (auto& img : out) {
    img.h = size;
    img.w = size;
    img.values.resize(size_t(size) * size_t(size));
    for (auto& v : img.values)
      v = binary ? float(rng.uniform() < 0.5 ? 0.0 : 1.0) : float(rng.uniform());
  }
  return out;
}

std::vector<const Image*> image_ptrs(const std::vector<Image>& imgs,
                                     const std::vector<int>* order = nullptr) {
  std::vector<const Image*> out;
  for (size_t i = 0; i < imgs.size(); ++i)
    out.push_back(&imgs[order ? size_t((*order)[i]) : i]);
  return out;
}

VoxelGrid random_binary_grid(Rng& rng, int side, double fill = 0.3) {
  VoxelGrid g(side);
  for (auto& v : g.values) v = rng.uniform() < fill ? 1.0f : 0.0f;
  return g;
}

GradCheckResult composed_grad_check(int variant) {
  RunConfig cfg = composed_tiny_cfg(variant);
  Model<double> model(cfg);
  Rng rng(derive_seed(9000, uint64_t(variant)));
  // Perturb every parameter (including zero-initialized heads) so no branch
  // is gradient-dead at the checked point.
  model.params.randomize(rng, 0.05);
  auto images = random_images(rng, 2, cfg.image_size);
  VoxelGrid gt = random_binary_grid(rng, cfg.voxel_size);

  std::vector<Tensor<double>> leaves;
  for (auto& p : model.params.all()) leaves.push_back(p.tensor);
  auto views = image_ptrs(images);
  auto loss_fn = [&model, views, gt]() {
    return model.loss_against(model.forward_probs(views), gt);
  };
  GradCheckOptions opts;
  opts.tolerance = 1e-3;
  opts.max_components_per_leaf = 4;
  opts.component_seed = derive_seed(9100, uint64_t(variant));
  return grad_check(loss_fn, leaves, opts);
}

}  // namespace

SuiteReport run_gradcheck_suite(int seeds_per_op, const std::string& only_op) {
  auto t0 = Clock::now();
  SuiteReport report;
  report.suite = "gradcheck";
  for (const auto& op : registered_op_kinds()) {
    if (!only_op.empty() && only_op != op) continue;
    Check ch;
    ch.name = "gradcheck." + op;
    ch.pass = true;
    double worst = 0;
    for (int s = 0; s < seeds_per_op; ++s) {
      Rng rng(derive_seed(4242, fnv1a64(op), uint64_t(s)));
      OpCase oc = make_op_case(op, rng, s);
      GradCheckOptions opts;
      opts.tolerance = 1e-4;
      opts.component_seed = uint64_t(s + 1);
      GradCheckResult r = grad_check(oc.fn, oc.leaves, opts);
      worst = std::max(worst, r.rel_error);
      if (!r.pass) {
        ch.pass = false;
        ch.detail = "seed " + std::to_string(s) + ": " + r.detail;
        break;
      }
    }
    if (ch.pass) ch.detail = "worst rel " + fmt_g(worst) + " over " +
                             std::to_string(seeds_per_op) + " instances";
    report.checks.push_back(std::move(ch));
  }
  if (only_op.empty() || only_op == "composed") {
    Check ch;
    ch.name = "gradcheck.composed_pipeline";
    ch.pass = true;
    double worst = 0;
    int runs = std::max(1, seeds_per_op);
    for (int s = 0; s < runs; ++s) {
      GradCheckResult r = composed_grad_check(s);
      worst = std::max(worst, r.rel_error);
      if (!r.pass) {
        ch.pass = false;
        ch.detail = "variant " + std::to_string(s) + ": " + r.detail;
        break;
      }
    }
    if (ch.pass)
      ch.detail = "worst rel " + fmt_g(worst) + " over " + std::to_string(runs) + " pipelines";
    report.checks.push_back(std::move(ch));
  }
  report.seconds = elapsed(t0);
  return report;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> random_tokens(Rng& rng, int64_t count, bool quantized) {
  std::vector<double> t(static_cast<size_t>(count));
  for (auto& v : t) {
    v = rng.uniform(-1, 1);
    if (quantized) v = std::round(v * 5.0) / 5.0;  // coarse grid forces distance ties
  }
  return t;
}

}  // namespace

SuiteReport run_oracle_suite(int instances, uint64_t seed) {
  auto t0 = Clock::now();
  SuiteReport report;
  report.suite = "oracles";

  {
    Check ch;
    ch.name = "oracle.inter_view_knn";
    Rng rng(derive_seed(seed, 1));
    int failures = 0;
    auto tk = Clock::now();
    for (int i = 0; i < instances; ++i) {
      int n = 2 + int(rng.uniform_int(0, 2));
      int T = 1 + int(rng.uniform_int(0, 31));
      int D = 1 + int(rng.uniform_int(0, 15));
      int k = 1 + int(rng.uniform_int(0, T - 1));
      auto tokens = random_tokens(rng, int64_t(n) * T * D, i % 3 == 2);
      auto prod = inter_view_knn(n, T, D, tokens, k);
      auto orac = inter_view_knn_oracle(n, T, D, tokens, k);
      if (!same_neighbors(prod, orac)) ++failures;
    }
    ch.pass = failures == 0;
    ch.detail = std::to_string(instances) + " instances, " + std::to_string(failures) +
                " mismatches, " + fmt_g(elapsed(tk)) + " s";
    report.checks.push_back(std::move(ch));
  }

  {
    Check ch;
    ch.name = "oracle.dpc_knn_cluster";
    Rng rng(derive_seed(seed, 2));
    int failures = 0;
    auto tk = Clock::now();
    for (int i = 0; i < instances; ++i) {
      int64_t N = 2 + rng.uniform_int(0, 126);
      int D = 1 + int(rng.uniform_int(0, 15));
      int k_dpc = 1 + int(rng.uniform_int(0, N - 2));
      int g = 1 + int(rng.uniform_int(0, N - 1));
      auto tokens = random_tokens(rng, N * D, i % 3 == 2);
      std::vector<double> imp(static_cast<size_t>(N));
      for (auto& v : imp) v = rng.uniform(-1, 1);
      auto prod = dpc_knn_cluster(N, D, tokens, k_dpc, g, imp);
      auto orac = dpc_knn_cluster_oracle(N, D, tokens, k_dpc, g, imp);
      if (!same_clustering(prod, orac)) ++failures;
    }
    ch.pass = failures == 0;
    ch.detail = std::to_string(instances) + " instances, " + std::to_string(failures) +
                " mismatches, " + fmt_g(elapsed(tk)) + " s";
    report.checks.push_back(std::move(ch));
  }

  {
    // Attention fusion against a hand-rolled softmax-weighted sum.
    Check ch;
    ch.name = "oracle.attention_fusion";
    Rng rng(derive_seed(seed, 3));
    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
      int m = 1 + int(rng.uniform_int(0, 5));
      int D = 1 + int(rng.uniform_int(0, 4));
      ParamStore<double> ps;
      ps.set_seed(derive_seed(seed, 30, uint64_t(trial)));
      AttentionFusion<double> fusion(ps, "f", D);
      ps.randomize(rng, 0.7);
      Tensor<double> set = rand_leaf(rng, {m, D}, -1, 1, false);
      auto res = fusion.forward(set);

      const auto& W = ps.find("f.score.w")->value();
      const auto& B = ps.find("f.score.b")->value();
      std::vector<double> logits(size_t(m * D), 0.0);
      for (int i = 0; i < m; ++i)
        for (int c = 0; c < D; ++c) {
          double acc = B[size_t(c)];
          for (int d = 0; d < D; ++d)
            acc += set.value()[size_t(i * D + d)] * W[size_t(d * D + c)];
          logits[size_t(i * D + c)] = acc;
        }
      for (int c = 0; c < D; ++c) {
        double mx = logits[size_t(c)];
        for (int i = 1; i < m; ++i) mx = std::max(mx, logits[size_t(i * D + c)]);
        double Z = 0;
        for (int i = 0; i < m; ++i) Z += std::exp(logits[size_t(i * D + c)] - mx);
        double fused = 0;
        for (int i = 0; i < m; ++i)
          fused += std::exp(logits[size_t(i * D + c)] - mx) / Z * set.value()[size_t(i * D + c)];
        worst = std::max(worst, std::abs(fused - res.fused.value()[size_t(c)]));
      }
      for (int i = 0; i < m; ++i) {
        double mean = 0;
        for (int c = 0; c < D; ++c) mean += logits[size_t(i * D + c)];
        mean /= double(D);
        worst = std::max(worst, std::abs(mean - res.scores.value()[size_t(i)]));
      }
    }
    ch.pass = worst < 1e-9;
    ch.detail = "max |diff| " + fmt_g(worst);
    report.checks.push_back(std::move(ch));
  }

  {
    // Weighted merger attention against straight-line loops
    // (cluster + per-group fusion + softmax(QK^T/sqrt(d)+W)V).
    Check ch;
    ch.name = "oracle.stm_weighted_attention";
    double worst = 0;
    for (int trial = 0; trial < 10; ++trial) {
      Rng rng(derive_seed(seed, 4, uint64_t(trial)));
      int n = 2, T = 8, D = 6, heads = 2, g = 4, k_dpc = 3;
      int64_t N = int64_t(n) * T;
      int hd = D / heads;
      ParamStore<double> ps;
      ps.set_seed(derive_seed(seed, 40, uint64_t(trial)));
      Stm<double> stm(ps, "stm", D, heads, 2, k_dpc, g);
      ps.randomize(rng, 0.4);
      Tensor<double> tokens = rand_leaf(rng, {n, T, D}, -1, 1, false);
      Tensor<double> got = stm.forward_weighted(tokens, nullptr);

      auto matvec = [&](const std::string& wname, const std::string& bname,
                        const std::vector<double>& x, int64_t rows) {
        const auto& W = ps.find(wname)->value();
        const auto& B = ps.find(bname)->value();
        std::vector<double> y(size_t(rows * D), 0.0);
        for (int64_t i = 0; i < rows; ++i)
          for (int c = 0; c < D; ++c) {
            double acc = B[size_t(c)];
            for (int d = 0; d < D; ++d)
              acc += x[size_t(i * D + d)] * W[size_t(int64_t(d) * D + c)];
            y[size_t(i * D + c)] = acc;
          }
        return y;
      };

      std::vector<double> flat(tokens.value());
      auto logits = matvec("stm.score.w", "stm.score.b", flat, N);
      std::vector<double> wkey(size_t(N), 0.0);
      for (int64_t i = 0; i < N; ++i) {
        double mean = 0;
        for (int c = 0; c < D; ++c) mean += logits[size_t(i * D + c)];
        wkey[size_t(i)] = mean / double(D);
      }
      auto ca = dpc_knn_cluster_oracle(N, D, flat, k_dpc, g, wkey);
      std::vector<int> order(static_cast<size_t>(g));
      for (int i = 0; i < g; ++i) order[size_t(i)] = i;
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        double ga = ca.rho[size_t(ca.centers[size_t(a)])] * ca.delta[size_t(ca.centers[size_t(a)])];
        double gb = ca.rho[size_t(ca.centers[size_t(b)])] * ca.delta[size_t(ca.centers[size_t(b)])];
        if (ga != gb) return ga > gb;
        return ca.centers[size_t(a)] < ca.centers[size_t(b)];
      });
      std::vector<double> fused(size_t(g * D), 0.0);
      for (int gi = 0; gi < g; ++gi) {
        std::vector<int64_t> mem;
        for (int64_t i = 0; i < N; ++i)
          if (ca.assignment[size_t(i)] == order[size_t(gi)]) mem.push_back(i);
        for (int c = 0; c < D; ++c) {
          double mx = logits[size_t(mem[0] * D + c)];
          for (int64_t i : mem) mx = std::max(mx, logits[size_t(i * D + c)]);
          double Z = 0;
          for (int64_t i : mem) Z += std::exp(logits[size_t(i * D + c)] - mx);
          double acc = 0;
          for (int64_t i : mem)
            acc += std::exp(logits[size_t(i * D + c)] - mx) / Z * flat[size_t(i * D + c)];
          fused[size_t(gi * D + c)] = acc;
        }
      }
      auto Q = matvec("stm.mha.wq.w", "stm.mha.wq.b", fused, g);
      auto K = matvec("stm.mha.wk.w", "stm.mha.wk.b", flat, N);
      auto V = matvec("stm.mha.wv.w", "stm.mha.wv.b", flat, N);
      std::vector<double> ctx(size_t(g * D), 0.0);
      for (int h = 0; h < heads; ++h) {
        for (int qi = 0; qi < g; ++qi) {
          std::vector<double> sc(static_cast<size_t>(N));
          for (int64_t kj = 0; kj < N; ++kj) {
            double dot = 0;
            for (int d = 0; d < hd; ++d)
              dot += Q[size_t(qi * D + h * hd + d)] * K[size_t(kj * D + h * hd + d)];
            sc[size_t(kj)] = dot / std::sqrt(double(hd)) + wkey[size_t(kj)];
          }
          double mx = sc[0];
          for (int64_t kj = 1; kj < N; ++kj) mx = std::max(mx, sc[size_t(kj)]);
          double Z = 0;
          for (int64_t kj = 0; kj < N; ++kj) Z += std::exp(sc[size_t(kj)] - mx);
          for (int d = 0; d < hd; ++d) {
            double acc = 0;
            for (int64_t kj = 0; kj < N; ++kj)
              acc += std::exp(sc[size_t(kj)] - mx) / Z * V[size_t(kj * D + h * hd + d)];
            ctx[size_t(qi * D + h * hd + d)] = acc;
          }
        }
      }
      auto out = matvec("stm.mha.wo.w", "stm.mha.wo.b", ctx, g);
      for (size_t i = 0; i < out.size(); ++i)
        worst = std::max(worst, std::abs(out[i] - got.value()[i]));
    }
    ch.pass = worst < 1e-9;
    ch.detail = "max |diff| " + fmt_g(worst);
    report.checks.push_back(std::move(ch));
  }

  {
    // Dice graph vs direct triple-loop summation.
    Check ch;
    ch.name = "oracle.dice_direct_sum";
    Rng rng(derive_seed(seed, 5));
    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
      int side = 4;
      VoxelGrid p(side), gt(side);
      for (auto& v : p.values) v = float(rng.uniform());
      for (auto& v : gt.values) v = rng.uniform() < 0.5 ? 1.0f : 0.0f;
      double direct;
      {
        double n1 = 0, d1 = 0, n2 = 0, d2 = 0;
        for (int x = 0; x < side; ++x)
          for (int y = 0; y < side; ++y)
            for (int z = 0; z < side; ++z) {
              double pv = p.at(x, y, z), gv = gt.at(x, y, z);
              n1 += pv * gv;
              d1 += pv + gv;
              n2 += (1 - pv) * (1 - gv);
              d2 += 2 - pv - gv;
            }
        direct = 1.0 - n1 / std::max(d1, 1e-8) - n2 / std::max(d2, 1e-8);
      }
      worst = std::max(worst, std::abs(direct - dice_loss(p, gt)));
      std::vector<double> pd(p.values.begin(), p.values.end());
      std::vector<double> gd(gt.values.begin(), gt.values.end());
      Tensor<double> pt = Tensor<double>::leaf({side * side * side}, std::move(pd), false);
      Tensor<double> gtt = Tensor<double>::leaf({side * side * side}, std::move(gd), false);
      worst = std::max(worst, std::abs(direct - dice_loss_graph(pt, gtt).item()));
    }
    ch.pass = worst < 1e-12;
    ch.detail = "max |diff| " + fmt_g(worst);
    report.checks.push_back(std::move(ch));
  }

  {
    // F-Score cell hash vs all-pairs scan.
    Check ch;
    ch.name = "oracle.f_score_all_pairs";
    Rng rng(derive_seed(seed, 6));
    int failures = 0;
    for (int trial = 0; trial < 100; ++trial) {
      PointCloud a, b;
      int ma = 1 + int(rng.uniform_int(0, 63)), mb = 1 + int(rng.uniform_int(0, 63));
      for (int i = 0; i < ma; ++i) a.points.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
      for (int i = 0; i < mb; ++i) b.points.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
      double d = std::vector<double>{0.01, 0.05, 0.3}[size_t(trial % 3)];
      if (f_score(a, b, d) != f_score_oracle(a, b, d)) ++failures;
    }
    ch.pass = failures == 0;
    ch.detail = std::to_string(failures) + " mismatches over 100 cloud pairs";
    report.checks.push_back(std::move(ch));
  }

  report.seconds = elapsed(t0);
  return report;
}

}  // namespace umif
