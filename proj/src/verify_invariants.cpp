#include <unistd.h>

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
#include "umif/verify.hpp"

namespace umif {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

RunConfig small_cfg() {
  RunConfig cfg;
  cfg.seed = 11;
  cfg.image_size = 16;
  cfg.patch_size = 4;  // T = 16
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

Tensor<double> rand_leaf_helper(Rng& rng, Shape shape) {
  std::vector<double> d(size_t(numel(shape)));
  for (auto& v : d) v = rng.uniform(-1, 1);
  return Tensor<double>::leaf(std::move(shape), std::move(d), false);
}

std::vector<Image> random_images(Rng& rng, int n, int size) {
  std::vector<Image> out(static_cast<size_t>(n));
  for (auto& img : out) {
    img.h = size;
    img.w = size;
    img.values.resize(size_t(size) * size_t(size));
    for (auto& v : img.values) v = float(rng.uniform());
  }
  return out;
}

std::vector<const Image*> ptrs(const std::vector<Image>& imgs,
                               const std::vector<int>* order = nullptr) {
  std::vector<const Image*> out;
  size_t n = order ? order->size() : imgs.size();
  for (size_t i = 0; i < n; ++i) out.push_back(&imgs[order ? size_t((*order)[i]) : i]);
  return out;
}

std::vector<uint8_t> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(is)),
                              std::istreambuf_iterator<char>());
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("umif_verify_" + std::to_string(uint64_t(::getpid())));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

}  // namespace

SuiteReport run_invariant_suite(uint64_t seed) {
  auto t0 = Clock::now();
  SuiteReport report;
  report.suite = "invariants";
  auto add_check = [&](const std::string& name, bool pass, const std::string& detail) {
    report.checks.push_back({name, pass, detail});
  };

  // --- core op properties ---
  {
    Rng rng(derive_seed(seed, 10));
    double worst_sum = 0, worst_mean = 0, worst_var = 0;
    for (int t = 0; t < 20; ++t) {
      Tensor<double> x = Tensor<double>::leaf(
          {4, 7}, [&] {
            std::vector<double> d(28);
            for (auto& v : d) v = rng.uniform(-3, 3);
            return d;
          }(), false);
      Tensor<double> sm = softmax(x, 1);
      for (int r = 0; r < 4; ++r) {
        double s = 0;
        for (int c = 0; c < 7; ++c) s += sm.value()[size_t(r * 7 + c)];
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      }
      Tensor<double> ln = layernorm(x, 1, 1e-5);
      for (int r = 0; r < 4; ++r) {
        double mean = 0, var = 0;
        for (int c = 0; c < 7; ++c) mean += ln.value()[size_t(r * 7 + c)];
        mean /= 7;
        for (int c = 0; c < 7; ++c) {
          double d = ln.value()[size_t(r * 7 + c)] - mean;
          var += d * d;
        }
        var /= 7;
        worst_mean = std::max(worst_mean, std::abs(mean));
        worst_var = std::max(worst_var, std::abs(var - 1.0));
      }
    }
    add_check("ops.softmax_rows_sum_one", worst_sum < 1e-9, "max |sum-1| " + fmt_g(worst_sum));
    add_check("ops.layernorm_moments", worst_mean < 1e-6 && worst_var < 1e-4,
        "max |mean| " + fmt_g(worst_mean) + ", max |var-1| " + fmt_g(worst_var));
  }
  {
    Tensor<double> z = Tensor<double>::leaf({3}, {0, 0, 0}, false);
    auto sm = softmax(z, 0);
    bool ok = true;
    for (double v : sm.value()) ok = ok && std::abs(v - 1.0 / 3.0) < 1e-15;
    ok = ok && tanh(Tensor<double>::scalar(0.0)).item() == 0.0;
    add_check("ops.uniform_softmax_and_tanh0", ok, "softmax([0,0,0]) = 1/3 each; tanh(0) = 0");
  }
  {
    // backward basics: d/dx sum(x) = 1, d/dx sum(x*x) = 2x, accumulation,
    // gather scatter-add with duplicate indices.
    Tensor<double> x = Tensor<double>::leaf({2}, {1, 2}, true);
    backward(sum_all(x));
    bool ones_ok = x.grad()[0] == 1.0 && x.grad()[1] == 1.0;
    x.zero_grad();
    backward(sum_all(mul(x, x)));
    bool sq_ok = x.grad()[0] == 2.0 && x.grad()[1] == 4.0;
    backward(sum_all(mul(x, x)));  // second call accumulates
    bool acc_ok = x.grad()[0] == 4.0 && x.grad()[1] == 8.0;
    Tensor<double> y = Tensor<double>::leaf({3, 1}, {5, 6, 7}, true);
    backward(sum_all(gather(y, 0, {0, 0, 2})));
    bool gather_ok = y.grad()[0] == 2.0 && y.grad()[1] == 0.0 && y.grad()[2] == 1.0;
    add_check("autodiff.basic_rules", ones_ok && sq_ok && acc_ok && gather_ok,
        "sum, square, repeated-backward accumulation, duplicate-index scatter-add");
  }
  {
    // Forward/backward determinism: identical seeds give identical bits.
    auto run = [&](std::vector<double>* grads) {
      RunConfig cfg = small_cfg();
      Model<double> model(cfg);
      Rng rng(derive_seed(seed, 11));
      auto imgs = random_images(rng, 3, cfg.image_size);
      Tensor<double> probs = model.forward_probs(ptrs(imgs));
      VoxelGrid gt(cfg.voxel_size);
      for (size_t i = 0; i < gt.values.size(); ++i) gt.values[i] = (i % 3 == 0) ? 1.0f : 0.0f;
      Tensor<double> loss = model.loss_against(probs, gt);
      backward(loss);
      if (grads)
        for (auto& p : model.params.all())
          grads->insert(grads->end(), p.tensor.grad().begin(), p.tensor.grad().end());
      return probs.value();
    };
    std::vector<double> g1, g2;
    auto v1 = run(&g1);
    auto v2 = run(&g2);
    add_check("autodiff.determinism_bitexact", v1 == v2 && g1 == g2,
        "two identically seeded runs agree bit-for-bit in values and gradients");
  }
  {
    // AdamW: zero gradient and zero decay leave the parameter unchanged;
    // one hand-computed step matches to 1e-12; step-decay schedule values.
    ParamStore<double> ps;
    ps.set_seed(1);
    Tensor<double> p = ps.add("p", {1}, Init::Ones);
    p.zero_grad();
    OptimizerState<double> st;
    st.weight_decay = 0;
    st.learning_rate = 0.1;
    adamw_step(ps, st);
    bool nochange = p.value()[0] == 1.0;

    ParamStore<double> ps2;
    ps2.set_seed(1);
    Tensor<double> q = ps2.add("q", {1}, Init::Ones);
    q.zero_grad();
    q.node()->grad[0] = 0.3;
    OptimizerState<double> st2;
    st2.learning_rate = 1e-2;
    st2.weight_decay = 0.04;
    adamw_step(ps2, st2);
    double m = 0.1 * 0.3, v = 0.001 * 0.09;
    double mhat = m / (1 - 0.9), vhat = v / (1 - 0.999);
    double expect = 1.0 - 1e-2 * (mhat / (std::sqrt(vhat) + 1e-8) + 0.04 * 1.0);
    bool step_ok = std::abs(q.value()[0] - expect) < 1e-12;

    bool lr_ok = lr_at_epoch(1e-4, {50, 120}, 49) == 1e-4 &&
                 std::abs(lr_at_epoch(1e-4, {50, 120}, 50) - 1e-5) < 1e-20 &&
                 std::abs(lr_at_epoch(1e-4, {50, 120}, 120) - 1e-6) < 1e-21;
    add_check("adamw.update_and_schedule", nochange && step_ok && lr_ok,
        "zero-grad no-op, hand-computed step, decay at epochs 50/120");
  }

  // --- token geometry ---
  {
    Rng rng(derive_seed(seed, 20));
    int n = 3, T = 10, D = 8;
    std::vector<double> tokens(size_t(n * T * D));
    for (auto& v : tokens) v = rng.uniform(-1, 1);
    auto base = inter_view_knn(n, T, D, tokens, 4);
    bool sets_ok = true;
    for (double c : {0.5, 2.0, 17.0}) {
      std::vector<double> scaled(tokens);
      for (auto& v : scaled) v *= c;
      auto s = inter_view_knn(n, T, D, scaled, 4);
      for (size_t i = 0; i < base.entries.size(); ++i)
        sets_ok = sets_ok && base.entries[i].view == s.entries[i].view &&
                  base.entries[i].token == s.entries[i].token;
    }
    add_check("geometry.knn_scale_invariant_sets", sets_ok,
        "neighbor (view, token) sets unchanged under c in {0.5, 2, 17}");

    std::vector<double> imp(size_t(n * T), 0.0);
    auto base_c = dpc_knn_cluster(int64_t(n) * T, D, tokens, 4, 6, imp);
    bool order_ok = true, assign_note = true;
    std::string note;
    for (double c : {0.5, 2.0}) {
      std::vector<double> scaled(tokens);
      for (auto& v : scaled) v *= c;
      auto sc = dpc_knn_cluster(int64_t(n) * T, D, scaled, 4, 6, imp);
      auto ranking = [](const std::vector<double>& v) {
        std::vector<int> idx(v.size());
        for (size_t i = 0; i < v.size(); ++i) idx[i] = int(i);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](int a, int b) { return v[size_t(a)] > v[size_t(b)]; });
        return idx;
      };
      order_ok = order_ok && ranking(base_c.rho) == ranking(sc.rho) &&
                 ranking(base_c.delta) == ranking(sc.delta);
      if (base_c.centers == sc.centers)
        assign_note = assign_note && base_c.assignment == sc.assignment;
      else
        note = " (center set shifted at c, assignment compared only on equal centers)";
    }
    // rho*delta mixes an exponential with a linear scale, so the center
    // selection itself is not scale-free; the orderings and the
    // assignment-given-centers are.
    add_check("geometry.dpc_scale_order_invariant", order_ok && assign_note,
        "rho/delta rankings stable under scaling; assignment stable when centers agree" + note);
  }
  {
    // Partition properties on random instances.
    Rng rng(derive_seed(seed, 21));
    bool ok = true;
    for (int t = 0; t < 30 && ok; ++t) {
      int64_t N = 3 + rng.uniform_int(0, 60);
      int D = 1 + int(rng.uniform_int(0, 7));
      int g = 1 + int(rng.uniform_int(0, N - 1));
      int k_dpc = 1 + int(rng.uniform_int(0, N - 2));
      std::vector<double> tokens(size_t(N * D));
      for (auto& v : tokens) v = rng.uniform(-1, 1);
      std::vector<double> imp(size_t(N), 0.0);
      auto ca = dpc_knn_cluster(N, D, tokens, k_dpc, g, imp);
      std::vector<int64_t> count(size_t(g), 0);
      for (int64_t i = 0; i < N; ++i) {
        if (ca.assignment[size_t(i)] < 0 || ca.assignment[size_t(i)] >= g) ok = false;
        else ++count[size_t(ca.assignment[size_t(i)])];
      }
      for (int gi = 0; gi < g; ++gi) {
        ok = ok && count[size_t(gi)] > 0;
        ok = ok && ca.assignment[size_t(ca.centers[size_t(gi)])] == gi;
      }
      ok = ok && std::is_sorted(ca.centers.begin(), ca.centers.end());
    }
    add_check("geometry.dpc_partition", ok, "cover, non-empty groups, centers own their group");
  }
  {
    // View-permutation equivariance of the neighbor index (tie-free inputs).
    Rng rng(derive_seed(seed, 22));
    int n = 4, T = 6, D = 5, k = 3;
    std::vector<double> tokens(size_t(n * T * D));
    for (auto& v : tokens) v = rng.uniform(-1, 1);
    std::vector<int> perm = {2, 0, 3, 1};
    std::vector<double> permuted(tokens.size());
    for (int v = 0; v < n; ++v)
      std::copy(tokens.begin() + perm[size_t(v)] * T * D,
                tokens.begin() + (perm[size_t(v)] + 1) * T * D, permuted.begin() + v * T * D);
    auto a = inter_view_knn(n, T, D, tokens, k);
    auto b = inter_view_knn(n, T, D, permuted, k);
    // anchor (v,t) in the original equals anchor (pos(v),t) in the permuted
    std::vector<int> pos(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) pos[size_t(perm[size_t(i)])] = i;
    bool ok = true;
    for (int v = 0; v < n && ok; ++v)
      for (int t = 0; t < T && ok; ++t) {
        const NeighborEntry* ea = a.anchor(v, t);
        const NeighborEntry* eb = b.anchor(pos[size_t(v)], t);
        std::vector<std::pair<int, int>> sa, sb;
        for (int i = 0; i < a.per_anchor(); ++i) {
          sa.emplace_back(ea[i].view, ea[i].token);
          sb.emplace_back(perm[size_t(eb[i].view)], eb[i].token);
        }
        std::sort(sa.begin(), sa.end());
        std::sort(sb.begin(), sb.end());
        ok = sa == sb;
      }
    add_check("geometry.knn_view_permutation_equivariant", ok,
        "neighbor sets relabel correctly under view permutation");
  }

  // --- encoder ---
  {
    RunConfig cfg = small_cfg();
    Model<double> model(cfg);
    Rng rng(derive_seed(seed, 30));
    bool ok = true;
    for (int n = 1; n <= 8; ++n) {
      auto imgs = random_images(rng, n, cfg.image_size);
      Tensor<double> patches =
          patchify<double>(n, cfg.image_size, cfg.image_size, 1,
                           [&] {
                             std::vector<float> px;
                             for (auto& im : imgs)
                               px.insert(px.end(), im.values.begin(), im.values.end());
                             return px;
                           }(),
                           cfg.patch_size);
      Tensor<double> f = model.encoder.forward(patches);
      ok = ok && f.shape() == Shape{cfg.g, cfg.dim};
    }
    add_check("encoder.fixed_output_shape", ok, "g x D output for n in 1..8");
  }
  {
    // View-permutation invariance (double precision, tie-free random input).
    RunConfig cfg = small_cfg();
    Model<double> model(cfg);
    Rng rng(derive_seed(seed, 31));
    auto imgs = random_images(rng, 4, cfg.image_size);
    Tensor<double> base = model.forward_probs(ptrs(imgs));
    double worst = 0;
    std::vector<int> order = {0, 1, 2, 3};
    for (int t = 0; t < 20; ++t) {
      rng.shuffle(order);
      Tensor<double> out = model.forward_probs(ptrs(imgs, &order));
      for (size_t i = 0; i < out.value().size(); ++i)
        worst = std::max(worst, std::abs(out.value()[i] - base.value()[i]));
    }
    add_check("encoder.view_permutation_invariance", worst < 1e-6,
        "max |diff| " + fmt_g(worst) + " over 20 permutations");
  }
  {
    // Rectification is the identity at init: scheduling it changes nothing.
    RunConfig on = small_cfg();
    RunConfig off = small_cfg();
    off.ivdb_period = 0;
    Model<double> a(on), b(off);
    Rng rng(derive_seed(seed, 32));
    auto imgs = random_images(rng, 3, on.image_size);
    auto va = a.forward_probs(ptrs(imgs)).value();
    auto vb = b.forward_probs(ptrs(imgs)).value();
    add_check("encoder.ivdb_identity_at_init", va == vb,
        "zero-initialized offset heads leave the per-view pipeline bit-identical");
  }
  {
    // Offset-weight rectification moves each channel by at most |x| (tanh
    // gate), checked on 1000 random tokens with randomized heads.
    ParamStore<double> ps;
    ps.set_seed(derive_seed(seed, 33));
    int D = 8;
    Ivdb<double> iv(ps, "iv", D, 2, Rectification::OffsetWeight);
    Rng rng(derive_seed(seed, 34));
    ps.randomize(rng, 0.5);
    int n = 2, T = 500;
    std::vector<double> vals(size_t(n * T * D));
    for (auto& v : vals) v = rng.uniform(-2, 2);
    Tensor<double> tokens = Tensor<double>::leaf({n, T, D}, vals, false);
    Tensor<double> out = iv.forward(tokens, nullptr);
    double worst_excess = 0;
    for (size_t i = 0; i < vals.size(); ++i) {
      double o = out.value()[i] - vals[i];
      worst_excess = std::max(worst_excess, std::abs(o) - std::abs(vals[i]));
    }
    add_check("encoder.offset_weight_bound", worst_excess <= 1e-12,
        "max(|o|-|x|) = " + fmt_g(worst_excess) + " over 1000 tokens");
  }
  {
    // Identical views: every anchor's nearest other-view token is its own
    // position at distance zero.
    RunConfig cfg = small_cfg();
    cfg.k = 1;
    Model<double> model(cfg);
    Rng rng(derive_seed(seed, 35));
    auto one = random_images(rng, 1, cfg.image_size);
    std::vector<Image> both = {one[0], one[0]};
    EncoderTrace trace;
    model.forward_probs(ptrs(both), &trace);
    bool ok = !trace.ivdb_neighbors.empty();
    for (const auto& ni : trace.ivdb_neighbors)
      for (int v = 0; v < 2 && ok; ++v)
        for (int t = 0; t < ni.tokens_per_view && ok; ++t) {
          const NeighborEntry* e = ni.anchor(v, t);
          ok = e[0].token == t && e[0].dist2 == 0.0;
        }
    add_check("encoder.identical_views_matched_tokens", ok,
        "k=1 neighbors are the mirrored positions at distance 0");
  }
  {
    // Intra-view blocks: perturbing one view leaves the other bit-identical.
    ParamStore<double> ps;
    ps.set_seed(derive_seed(seed, 36));
    TransformerBlock<double> block(ps, "b", 8, 2, 2);
    Rng rng(derive_seed(seed, 37));
    std::vector<double> v1(size_t(2 * 5 * 8)), v2;
    for (auto& v : v1) v = rng.uniform(-1, 1);
    v2 = v1;
    for (size_t i = size_t(5 * 8); i < v2.size(); ++i) v2[i] += 0.5;
    auto o1 = block.forward(Tensor<double>::leaf({2, 5, 8}, v1, false)).value();
    auto o2 = block.forward(Tensor<double>::leaf({2, 5, 8}, v2, false)).value();
    bool ok = std::equal(o1.begin(), o1.begin() + 5 * 8, o2.begin());
    add_check("encoder.cross_view_independence", ok, "view-0 rows unchanged when view 1 is perturbed");
  }
  {
    // Weighted attention: zero bias equals no bias; a -1e6 bias floors the
    // attention weight below 1e-30 in every row.
    ParamStore<double> ps;
    ps.set_seed(derive_seed(seed, 38));
    MultiHeadAttention<double> mha(ps, "m", 8, 2);
    Rng rng(derive_seed(seed, 39));
    ps.randomize(rng, 0.4);
    Tensor<double> q = rand_leaf_helper(rng, {4, 8});
    Tensor<double> kv = rand_leaf_helper(rng, {6, 8});
    Tensor<double> zero_bias = Tensor<double>::zeros({6});
    auto a = mha.forward(q, kv, nullptr).value();
    auto b = mha.forward(q, kv, &zero_bias).value();
    double diff = 0;
    for (size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));

    Tensor<double> scores = rand_leaf_helper(rng, {4, 6});
    std::vector<double> bias_v(6, 0.0);
    bias_v[3] = -1e6;
    Tensor<double> bias = Tensor<double>::leaf({6}, bias_v, false);
    Tensor<double> weights =
        softmax(add(scores, broadcast_to(reshape(bias, {1, 6}), {4, 6})), 1);
    double worst_w = 0;
    for (int r = 0; r < 4; ++r) worst_w = std::max(worst_w, weights.value()[size_t(r * 6 + 3)]);
    add_check("encoder.weighted_attention_bias", diff < 1e-9 && worst_w < 1e-30,
        "W=0 equals unweighted (max diff " + fmt_g(diff) + "); saturated key weight " +
            fmt_g(worst_w));
  }
  {
    // Mergers: identical views collapse to a single view for pbm/abm;
    // single-view inputs are identities.
    RunConfig cfg = small_cfg();
    cfg.g = cfg.encoder_config().tokens_per_view();
    cfg.merger = "pbm";
    Model<double> mp(cfg);
    Rng rng(derive_seed(seed, 40));
    auto one = random_images(rng, 1, cfg.image_size);
    std::vector<Image> rep = {one[0], one[0], one[0]};
    auto rep_out = mp.forward_probs(ptrs(rep)).value();
    auto one_out = mp.forward_probs(ptrs(one)).value();
    bool pbm_ok = rep_out == one_out;
    cfg.merger = "abm";
    Model<double> ma(cfg);
    bool abm_ok = ma.forward_probs(ptrs(rep)).value() == ma.forward_probs(ptrs(one)).value();
    add_check("encoder.merger_identity_cases", pbm_ok && abm_ok,
        "pbm/abm over identical views equal the single-view result");
  }
  {
    // Schedule arithmetic and paper-profile geometry.
    EncoderConfig e;
    e.image_size = 224;
    e.patch_size = 16;
    e.depth = 12;
    e.ivdb_period = 3;
    bool t_ok = e.tokens_per_view() == 196;
    bool sched_ok = e.ivdb_positions() == std::vector<int>({3, 6, 9, 12});
    e.ivdb_once = true;
    bool once_ok = e.ivdb_positions() == std::vector<int>({3});
    RunConfig paper = RunConfig::paper();
    bool paper_ok = paper.k == 5 && paper.k_dpc == 15 && paper.g == 196 &&
                    paper.query_count == 64 && paper.decoder_depth == 8 &&
                    paper.voxel_size == 32 && paper.lr == 1e-4 && paper.batch_size == 32 &&
                    paper.epochs == 150 && paper.n_views_train == 3;
    DecoderConfig d = paper.decoder_config();
    bool cube_ok = d.base_side() == 4;
    d.validate();
    RunConfig toy;
    bool toy_ok = toy.encoder_config().tokens_per_view() == 16 && toy.query_count == 512 &&
                  toy.decoder_config().base_side() == 8;
    add_check("config.schedule_and_profiles", t_ok && sched_ok && once_ok && paper_ok && cube_ok && toy_ok,
        "T=196, IVDB after blocks 3/6/9/12 (once: 3), 64 queries -> 4^3 -> 32^3");
  }

  // --- decoder ---
  {
    RunConfig cfg = small_cfg();
    Model<double> model(cfg);
    Rng rng(derive_seed(seed, 50));
    std::vector<double> fv(size_t(cfg.g * cfg.dim));
    for (auto& v : fv) v = rng.uniform(-1, 1);
    Tensor<double> feature = Tensor<double>::leaf({cfg.g, cfg.dim}, fv, false);
    Tensor<double> probs = model.decoder.forward(feature);
    bool range_ok = true;
    for (double v : probs.value()) range_ok = range_ok && v > 0.0 && v < 1.0;

    std::vector<int> rowperm(static_cast<size_t>(cfg.g));
    for (int i = 0; i < cfg.g; ++i) rowperm[size_t(i)] = (i * 5 + 3) % cfg.g;
    std::vector<double> fp(fv.size());
    for (int i = 0; i < cfg.g; ++i)
      std::copy(fv.begin() + rowperm[size_t(i)] * cfg.dim,
                fv.begin() + (rowperm[size_t(i)] + 1) * cfg.dim, fp.begin() + i * cfg.dim);
    Tensor<double> probs_p =
        model.decoder.forward(Tensor<double>::leaf({cfg.g, cfg.dim}, fp, false));
    double worst = 0;
    for (size_t i = 0; i < probs.value().size(); ++i)
      worst = std::max(worst, std::abs(probs.value()[i] - probs_p.value()[i]));
    add_check("decoder.range_and_key_permutation", range_ok && worst < 1e-6,
        "probabilities in (0,1); feature-row permutation max diff " + fmt_g(worst));
  }
  {
    VoxelGrid p(3);
    Rng rng(derive_seed(seed, 51));
    for (auto& v : p.values) v = float(rng.uniform());
    bool boundary_ok = true;
    VoxelGrid all_t(2);
    for (auto& v : all_t.values) v = 0.5f;
    for (float v : binarize(all_t, 0.5).values) boundary_ok = boundary_ok && v == 0.0f;
    bool mono_ok = true;
    auto b1 = binarize(p, 0.3), b2 = binarize(p, 0.6);
    for (size_t i = 0; i < p.values.size(); ++i)
      if (b1.values[i] == 0.0f && b2.values[i] == 1.0f) mono_ok = false;
    add_check("decoder.binarize_strict_and_monotone", boundary_ok && mono_ok,
        "values equal to t map to 0; raising t never adds voxels");
  }

  // --- loss & metrics ---
  {
    Rng rng(derive_seed(seed, 60));
    VoxelGrid gt(4);
    for (auto& v : gt.values) v = rng.uniform() < 0.4 ? 1.0f : 0.0f;
    gt.values[0] = 1.0f;
    gt.values[1] = 0.0f;  // mixed
    VoxelGrid flipped(4);
    for (size_t i = 0; i < gt.values.size(); ++i) flipped.values[i] = 1.0f - gt.values[i];
    bool exact0 = dice_loss(gt, gt) == 0.0;
    bool exact1 = dice_loss(flipped, gt) == 1.0;
    bool in_range = true, symmetric = true;
    for (int t = 0; t < 20; ++t) {
      VoxelGrid p(4), g2(4);
      // dyadic probabilities so the complement 1-p is exact in float
      for (auto& v : p.values) v = float(rng.uniform_int(0, 256)) / 256.0f;
      for (auto& v : g2.values) v = rng.uniform() < 0.5 ? 1.0f : 0.0f;
      double L = dice_loss(p, g2);
      in_range = in_range && L >= 0.0 && L <= 1.0;
      VoxelGrid pc(4), gc(4);
      for (size_t i = 0; i < p.values.size(); ++i) {
        pc.values[i] = 1.0f - p.values[i];
        gc.values[i] = 1.0f - g2.values[i];
      }
      symmetric = symmetric && std::abs(L - dice_loss(pc, gc)) < 1e-12;
    }
    add_check("metrics.dice_analytic_cases", exact0 && exact1 && in_range && symmetric,
        "dice(p==gt)=0 and dice(p=1-gt)=1 exactly; range [0,1]; complement symmetry");
  }
  {
    Rng rng(derive_seed(seed, 61));
    VoxelGrid gt(4);
    int64_t half = gt.count() / 2;
    for (int64_t i = 0; i < gt.count(); ++i) gt.values[size_t(i)] = i < half ? 1.0f : 0.0f;
    VoxelGrid full(4);
    for (auto& v : full.values) v = 1.0f;
    bool iou_ok = iou(gt, gt, 0.5) == 1.0 && iou(full, gt, 0.5) == 0.5;
    VoxelGrid empty_p(4), empty_g(4);
    bool empty_ok = iou(empty_p, empty_g, 0.5) == 1.0;

    // simultaneous rigid reindex (axis permutation) leaves iou unchanged
    VoxelGrid p(4);
    for (auto& v : p.values) v = float(rng.uniform());
    VoxelGrid pr(4), gr(4);
    for (int x = 0; x < 4; ++x)
      for (int y = 0; y < 4; ++y)
        for (int z = 0; z < 4; ++z) {
          pr.at(z, x, y) = p.at(x, y, z);
          gr.at(z, x, y) = gt.at(x, y, z);
        }
    bool rigid_ok = iou(p, gt, 0.5) == iou(pr, gr, 0.5);
    add_check("metrics.iou_cases", iou_ok && empty_ok && rigid_ok,
        "identity, half-full, empty-union and rigid-reindex cases");
  }
  {
    VoxelGrid one(5);
    one.at(2, 2, 2) = 1.0f;
    auto f1 = exposed_faces(one);
    VoxelGrid full(4);
    for (auto& v : full.values) v = 1.0f;
    auto f2 = exposed_faces(full);
    VoxelGrid bar(4);
    bar.at(0, 0, 0) = 1.0f;
    bar.at(1, 0, 0) = 1.0f;
    auto f3 = exposed_faces(bar);
    PointCloud pc = extract_surface_points(one, 500, 99);
    bool on_boundary = true;
    for (const auto& p : pc.points) {
      bool on_face = false;
      for (int a = 0; a < 3; ++a)
        on_face = on_face || std::abs(p[a] - 2.0 / 5.0) < 1e-12 ||
                  std::abs(p[a] - 3.0 / 5.0) < 1e-12;
      bool inside_box = true;
      for (int a = 0; a < 3; ++a)
        inside_box = inside_box && p[a] >= 2.0 / 5.0 - 1e-12 && p[a] <= 3.0 / 5.0 + 1e-12;
      on_boundary = on_boundary && on_face && inside_box;
    }
    add_check("metrics.surface_faces", f1.size() == 6 && f2.size() == 6 * 16 && f3.size() == 10 &&
                                     on_boundary,
        "single voxel 6, full 4-grid shell 96, 2x1x1 bar 10; samples on the voxel boundary");
  }
  {
    Rng rng(derive_seed(seed, 62));
    PointCloud a;
    for (int i = 0; i < 40; ++i) a.points.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    bool ident = f_score(a, a, 0.01) == 1.0;
    PointCloud far;
    for (auto p : a.points) far.points.push_back({p[0] * 0.2, p[1] * 0.2, p[2] * 0.2 + 0.7});
    bool zero = f_score(a, far, 1e-6) == 0.0;
    bool mono = true;
    PointCloud b;
    for (int i = 0; i < 40; ++i) b.points.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    double prev = 0;
    for (double d : {0.001, 0.01, 0.05, 0.2, 0.8}) {
      double f = f_score(a, b, d);
      mono = mono && f >= prev;
      prev = f;
    }
    add_check("metrics.f_score_cases", ident && zero && mono,
        "identical clouds 1, distant clouds 0, monotone in d");
  }

  // --- data harness ---
  {
    bool det = true, bounds = true;
    for (uint64_t s : {1ull, 2ull, 3ull, 44ull}) {
      auto a = gen_shape(s, 16);
      auto b = gen_shape(s, 16);
      det = det && a.voxel.values == b.voxel.values &&
            recipe_to_string(a.recipe) == recipe_to_string(b.recipe);
      double frac = double(a.voxel.occupied()) / double(a.voxel.count());
      bounds = bounds && frac >= 0.01 && frac <= 0.90;
      auto reparsed = voxelize(parse_recipe(recipe_to_string(a.recipe)), 16);
      det = det && reparsed.values == a.voxel.values;
    }
    Recipe sphere;
    Primitive pr;
    pr.kind = Primitive::Kind::Sphere;
    pr.p = {8, 8, 8, 4, 0, 0};
    sphere.push_back(pr);
    auto g = voxelize(sphere, 16);
    double analytic = 4.0 / 3.0 * 3.14159265358979323846 * 64.0;
    double err = std::abs(double(g.occupied()) - analytic) / analytic;
    add_check("data.shape_determinism_and_volume", det && bounds && err < 0.10,
        "bit-identical regeneration; sphere voxelization within " + fmt_g(err * 100) +
            "% of analytic volume");
  }
  {
    VoxelGrid cube(8);
    for (auto& v : cube.values) v = 1.0f;
    Image im = render_view(cube, {0, 0, 1}, 8, 8);
    bool ones = true;
    for (float v : im.values) ones = ones && v == 1.0f;
    VoxelGrid empty(8);
    empty.at(1, 1, 1) = 1.0f;
    Image im2 = render_view(empty, {0, 0, 1}, 8, 8);
    bool spot = im2.at(1, 1) == 1.0f && im2.values[0] == 0.0f;
    int64_t lit = 0;
    for (float v : im2.values) lit += v != 0.0f ? 1 : 0;
    add_check("data.render_axis_cases", ones && spot && lit == 1,
        "full cube projects to all-ones; single voxel lights exactly its pixel");
  }
  {
    // Antipodal mirror property, exact across the stored direction set.
    Rng rng(derive_seed(seed, 70));
    VoxelGrid g = gen_shape(123, 16).voxel;
    bool ok = true;
    for (const auto& d : view_directions()) {
      Image a = render_view(g, d, 32, 32);
      Image b = render_view(g, {-d[0], -d[1], -d[2]}, 32, 32);
      for (int r = 0; r < 32 && ok; ++r)
        for (int c = 0; c < 32 && ok; ++c) ok = a.at(r, c) == b.at(r, 31 - c);
    }
    bool count_ok = view_directions().size() == 24;
    add_check("data.render_antipodal_mirror", ok && count_ok,
        "24 stored directions; opposite views are exact column mirrors");
  }
  {
    // Axis-aligned silhouettes match the occupancy columns exactly.
    VoxelGrid g = gen_shape(321, 16).voxel;
    Image im = render_view(g, {0, 0, 1}, 16, 16);
    bool ok = true;
    for (int x = 0; x < 16 && ok; ++x)
      for (int y = 0; y < 16 && ok; ++y) {
        bool col = false;
        for (int z = 0; z < 16; ++z) col = col || g.at(x, y, z) != 0.0f;
        ok = (im.at(x, y) != 0.0f) == col;
      }
    add_check("data.silhouette_ray_consistency", ok,
        "lit pixel iff an occupied voxel lies on the axis-aligned ray");
  }
  {
    // binvox: hand fixture, malformed input, round trip.
    std::string hdr = "#binvox 1\ndim 2 2 2\ndata\n";
    std::vector<uint8_t> fx(hdr.begin(), hdr.end());
    fx.push_back(1);
    fx.push_back(8);
    VoxelGrid g = read_binvox(fx);
    bool ones = g.side == 2;
    for (float v : g.values) ones = ones && v == 1.0f;
    bool odd_throws = false;
    try {
      std::vector<uint8_t> bad(hdr.begin(), hdr.end());
      bad.push_back(1);
      read_binvox(bad);
    } catch (const ParseError&) {
      odd_throws = true;
    }
    VoxelGrid shape = gen_shape(55, 16).voxel;
    VoxelGrid rt = read_binvox(write_binvox(shape));
    add_check("data.binvox_fixture_and_roundtrip", ones && odd_throws && rt.values == shape.values,
        "(1,8) fixture fills a 2^3 grid; odd RLE rejected; write/read inverse");
  }
  {
    // File format byte round trips in a temp dir.
    TempDir tmp;
    Rng rng(derive_seed(seed, 71));
    VoxelGrid g(8);
    for (auto& v : g.values) v = float(rng.uniform());
    std::string vp = (tmp.path / "a.voxg").string();
    write_voxg(vp, g);
    VoxelGrid g2 = read_voxg(vp);
    std::string vp2 = (tmp.path / "b.voxg").string();
    write_voxg(vp2, g2);
    bool vox_ok = slurp(vp) == slurp(vp2) && g2.values == g.values;

    Image im;
    im.h = 5;
    im.w = 7;
    im.values.resize(35);
    for (auto& v : im.values) v = float(rng.uniform());
    std::string ip = (tmp.path / "a.imgf").string();
    write_imgf(ip, im);
    Image im2 = read_imgf(ip);
    std::string ip2 = (tmp.path / "b.imgf").string();
    write_imgf(ip2, im2);
    bool img_ok = slurp(ip) == slurp(ip2) && im2.values == im.values;

    RunConfig cfg = small_cfg();
    Model<float> model(cfg);
    CheckpointTrailer tr;
    tr.config_text = cfg.serialize();
    tr.epochs_done = 3;
    std::string cp = (tmp.path / "a.umif").string();
    save_checkpoint(cp, model.params, tr);
    Model<float> model2(cfg);
    CheckpointTrailer tr2 = load_checkpoint(cp, model2.params);
    std::string cp2 = (tmp.path / "b.umif").string();
    save_checkpoint(cp2, model2.params, tr2);
    bool ck_ok = slurp(cp) == slurp(cp2) && tr2.epochs_done == 3 &&
                 read_checkpoint_config(cp) == cfg.serialize();
    add_check("formats.byte_exact_roundtrips", vox_ok && img_ok && ck_ok,
        "VOXG, IMGF and checkpoint containers survive write/read/write byte-exactly");
  }
  {
    // patch embedding: zero images with a zeroed projection reproduce the
    // positional table for every view.
    RunConfig cfg = small_cfg();
    Model<double> model(cfg);
    for (auto& v : model.params.find("encoder.patch.w")->data()) v = 0.0;
    std::vector<Image> imgs(2);
    for (auto& im : imgs) {
      im.h = cfg.image_size;
      im.w = cfg.image_size;
      im.values.assign(size_t(cfg.image_size) * size_t(cfg.image_size), 0.0f);
    }
    std::vector<float> px;
    for (auto& im : imgs) px.insert(px.end(), im.values.begin(), im.values.end());
    Tensor<double> patches =
        patchify<double>(2, cfg.image_size, cfg.image_size, 1, px, cfg.patch_size);
    Tensor<double> tok = model.encoder.patch_embed(patches);
    const auto& pos = model.params.find("encoder.pos_embed")->value();
    bool ok = true;
    int64_t per_view = int64_t(pos.size());
    for (int v = 0; v < 2; ++v)
      for (int64_t i = 0; i < per_view; ++i)
        ok = ok && tok.value()[size_t(v * per_view + i)] == pos[size_t(i)];
    add_check("encoder.patch_embed_positional", ok,
        "zero image + zero projection reproduces the shared positional table");
  }

  report.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return report;
}

}  // namespace umif
