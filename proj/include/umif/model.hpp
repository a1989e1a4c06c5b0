#pragma once

#include <vector>

#include "umif/dataset.hpp"
#include "umif/decoder.hpp"
#include "umif/encoder.hpp"
#include "umif/metrics.hpp"
#include "umif/runconfig.hpp"

namespace umif {

constexpr uint64_t kInitStreamTag = 0x494e4954;  // parameter init stream

// Full reconstruction model: encoder + decoder sharing one parameter store.
// Instantiated with float for training and double for oracle-mode checks.
template <class S>
struct Model {
  RunConfig cfg;
  ParamStore<S> params;
  Encoder<S> encoder;
  Decoder<S> decoder;

  explicit Model(const RunConfig& config) : cfg(config) {
    cfg.validate();
    params.set_seed(derive_seed(cfg.seed, kInitStreamTag));
    encoder = Encoder<S>(params, cfg.encoder_config());
    decoder = Decoder<S>(params, cfg.decoder_config());
  }

  // views: silhouette images, all image_size x image_size single channel.
  Tensor<S> forward_probs(const std::vector<const Image*>& views,
                          EncoderTrace* trace = nullptr) const {
    if (views.empty()) throw ContractError("model: need at least one view");
    if (cfg.channels != 1)
      throw ContractError("model: silhouette datasets are single-channel; channels must be 1");
    int n = int(views.size());
    int H = cfg.image_size, W = cfg.image_size;
    std::vector<float> pixels(size_t(n) * size_t(H) * size_t(W));
    for (int v = 0; v < n; ++v) {
      const Image& img = *views[size_t(v)];
      if (img.h != H || img.w != W)
        throw ContractError("model: view " + std::to_string(v) + " is " + std::to_string(img.h) +
                            "x" + std::to_string(img.w) + ", expected " + std::to_string(H) + "x" +
                            std::to_string(W));
      std::copy(img.values.begin(), img.values.end(),
                pixels.begin() + int64_t(v) * H * W);
    }
    Tensor<S> patches = patchify<S>(n, H, W, 1, pixels, cfg.patch_size);
    Tensor<S> feature = encoder.forward(patches, trace);
    return decoder.forward(feature);
  }

  Tensor<S> loss_against(const Tensor<S>& probs, const VoxelGrid& gt) const {
    int64_t n = probs.size();
    if (int64_t(gt.values.size()) != n)
      throw ContractError("model: ground-truth grid size mismatch");
    std::vector<S> gt_data(static_cast<size_t>(n));
    for (size_t i = 0; i < gt_data.size(); ++i) gt_data[i] = S(gt.values[i]);
    Tensor<S> gt_leaf = Tensor<S>::leaf(Shape{n}, std::move(gt_data), false);
    return dice_loss_graph(reshape(probs, Shape{n}), gt_leaf);
  }
};

}  // namespace umif
