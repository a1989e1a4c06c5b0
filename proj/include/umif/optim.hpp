#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "umif/common.hpp"
#include "umif/tensor.hpp"

namespace umif {

// A named trainable tensor. Names are dot-separated ownership paths, e.g.
// "encoder.block3.mha.wq", and unique within a model.
template <class S>
struct Parameter {
  std::string name;
  Tensor<S> tensor;
};

enum class Init { Normal002, Zeros, Ones };

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

template <class S>
class ParamStore {
 public:
  // Each parameter draws from a stream derived from (store seed, name), so
  // identically named parameters get identical initial values regardless of
  // what else a model registers.
  void set_seed(uint64_t seed) { seed_ = seed; }
  uint64_t seed() const { return seed_; }

  Tensor<S> add(const std::string& name, Shape shape, Init init) {
    if (index_.count(name)) throw ContractError("parameter name not unique: " + name);
    int64_t n = numel(shape);
    std::vector<S> data(static_cast<size_t>(n));
    switch (init) {
      case Init::Normal002: {
        Rng rng(derive_seed(seed_, fnv1a64(name)));
        for (auto& v : data) v = S(rng.normal(0.0, 0.02));
        break;
      }
      case Init::Zeros:
        for (auto& v : data) v = S(0);
        break;
      case Init::Ones:
        for (auto& v : data) v = S(1);
        break;
    }
    Tensor<S> t = Tensor<S>::leaf(std::move(shape), std::move(data), true);
    t.set_label(name);
    index_[name] = params_.size();
    params_.push_back(Parameter<S>{name, t});
    return t;
  }

  size_t size() const { return params_.size(); }
  Parameter<S>& at(size_t i) { return params_[i]; }
  const Parameter<S>& at(size_t i) const { return params_[i]; }
  std::vector<Parameter<S>>& all() { return params_; }
  const std::vector<Parameter<S>>& all() const { return params_; }

  Tensor<S>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second].tensor;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  int64_t scalar_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

  // Overwrite every parameter with fresh N(0, stddev) noise; used by the
  // composed gradient checks so zero-initialized heads also get exercised.
  void randomize(Rng& rng, double stddev) {
    for (auto& p : params_)
      for (auto& v : p.tensor.data()) v = S(rng.normal(0.0, stddev));
  }

 private:
  uint64_t seed_ = 0;
  std::vector<Parameter<S>> params_;
  std::unordered_map<std::string, size_t> index_;
};

// Step-decay schedule: the rate is multiplied by `factor` once per decay
// epoch passed (epochs are 0-based; a decay at epoch d applies from epoch d
// onward).
inline double lr_at_epoch(double base_lr, const std::vector<int>& decay_epochs, int epoch,
                          double factor = 0.1) {
  double lr = base_lr;
  for (int d : decay_epochs)
    if (epoch >= d) lr *= factor;
  return lr;
}

template <class S>
struct OptimizerState {
  int64_t step_count = 0;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double epsilon = 1e-8;
  // Moment buffers, one pair per parameter, same order as the store.
  std::vector<std::vector<S>> m, v;
};

// Decoupled-weight-decay Adam with bias correction. Gradients are left
// untouched; the caller zeroes them between steps.
template <class S>
void adamw_step(ParamStore<S>& params, OptimizerState<S>& state) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(size_t(params.at(i).tensor.size()), S(0));
      state.v[i].assign(size_t(params.at(i).tensor.size()), S(0));
    }
  }
  state.step_count += 1;
  double b1 = state.beta1, b2 = state.beta2;
  double bc1 = 1.0 - std::pow(b1, double(state.step_count));
  double bc2 = 1.0 - std::pow(b2, double(state.step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params.at(i);
    if (!p.tensor.has_grad())
      throw ContractError("adamw_step: parameter has no gradient: " + p.name);
    const auto& g = p.tensor.grad();
    auto& w = p.tensor.data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (size_t j = 0; j < w.size(); ++j) {
      m[j] = S(b1) * m[j] + S(1.0 - b1) * g[j];
      v[j] = S(b2) * v[j] + S(1.0 - b2) * g[j] * g[j];
      double mhat = double(m[j]) / bc1;
      double vhat = double(v[j]) / bc2;
      double upd = mhat / (std::sqrt(vhat) + state.epsilon) +
                   state.weight_decay * double(w[j]);
      w[j] = S(double(w[j]) - state.learning_rate * upd);
    }
  }
}

}  // namespace umif
