#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation over a
// closed op set. The scalar type is a template parameter: float for training,
// double for oracle/gradient-check runs. No implicit broadcasting anywhere;
// shape combination happens only through the explicit broadcast op.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "umif/common.hpp"

namespace umif {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int64_t i = int64_t(s.size()) - 2; i >= 0; --i)
    st[size_t(i)] = st[size_t(i) + 1] * s[size_t(i) + 1];
  return st;
}

inline int normalize_axis(int axis, size_t rank, const char* op) {
  int r = int(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw ContractError(std::string(op) + ": axis " + std::to_string(axis) +
                        " out of range for rank " + std::to_string(r));
  return axis;
}

namespace detail {
// Fault-injection hook for the gradient-check mutation fixture: flips the
// sign of the tanh backward rule while set.
inline bool& tanh_grad_sign_flip() {
  static bool flip = false;
  return flip;
}
}  // namespace detail

template <class S>
struct Node {
  Shape shape;
  std::vector<S> value;
  std::vector<S> flow;  // transient dLoss/dnode during a backward sweep
  std::vector<S> grad;  // persistent accumulated gradient (leaves only)
  bool requires_grad = false;
  const char* op = "leaf";
  std::string label;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;  // reads flow, accumulates into inputs' flow

  const std::string display_name() const {
    return label.empty() ? std::string(op) : label + " (" + op + ")";
  }
};

template <class S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Shape shape, std::vector<S> data, bool requires_grad = false) {
    if (numel(shape) != int64_t(data.size()))
      throw ContractError("leaf: shape " + shape_str(shape) + " does not match buffer of " +
                          std::to_string(data.size()) + " scalars");
    Tensor t;
    t.node_ = std::make_shared<Node<S>>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad;
    t.check_finite("leaf");
    return t;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<S> d(size_t(numel(shape)), S(0));
    return leaf(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor full(Shape shape, S v) {
    std::vector<S> d(size_t(numel(shape)), v);
    return leaf(std::move(shape), std::move(d), false);
  }

  static Tensor scalar(S v) { return leaf(Shape{}, std::vector<S>{v}, false); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t size() const { return numel(node_->shape); }
  int rank() const { return int(node_->shape.size()); }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op() const { return node_->op; }

  const std::vector<S>& value() const { return node_->value; }
  // Mutable access for initializers and optimizers (leaves only).
  std::vector<S>& data() { return node_->value; }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<S>& grad() const {
    if (node_->grad.empty())
      throw ContractError("grad: no gradient for " + node_->display_name() +
                          " (backward not run, or tensor does not require grad)");
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(size_t(size()), S(0)); }
  void clear_grad() { node_->grad.clear(); }

  S item() const {
    if (size() != 1)
      throw ContractError("item: tensor " + shape_str(shape()) + " is not a scalar");
    return node_->value[0];
  }

  Tensor& set_label(std::string l) {
    node_->label = std::move(l);
    return *this;
  }

  std::shared_ptr<Node<S>> node() const { return node_; }

  void check_finite(const char* op) const {
    const auto& v = node_->value;
    for (size_t i = 0; i < v.size(); ++i) {
      if (!std::isfinite(double(v[i])))
        throw NumericalError(std::string(op) + ": non-finite output at flat index " +
                             std::to_string(i) + ", shape " + shape_str(node_->shape) +
                             (node_->label.empty() ? "" : ", tensor " + node_->label));
    }
  }

 private:
  std::shared_ptr<Node<S>> node_;

  template <class T>
  friend Tensor<T> make_op(const char* op, Shape shape, std::vector<T> value,
                           std::vector<Tensor<T>> inputs, std::function<void(Node<T>&)> backprop);
};

template <class S>
Tensor<S> make_op(const char* op, Shape shape, std::vector<S> value, std::vector<Tensor<S>> inputs,
                  std::function<void(Node<S>&)> backprop) {
  if (numel(shape) != int64_t(value.size()))
    throw ContractError(std::string(op) + ": output shape " + shape_str(shape) +
                        " does not match buffer of " + std::to_string(value.size()) + " scalars");
  Tensor<S> out;
  out.node_ = std::make_shared<Node<S>>();
  out.node_->shape = std::move(shape);
  out.node_->value = std::move(value);
  out.node_->op = op;
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    out.node_->requires_grad = true;
    out.node_->inputs.reserve(inputs.size());
    for (auto& in : inputs) out.node_->inputs.push_back(in.node());
    out.node_->backprop = std::move(backprop);
  }
  out.check_finite(op);
  return out;
}

template <class S>
inline void ensure_flow(Node<S>& n) {
  if (n.flow.empty()) n.flow.assign(n.value.size(), S(0));
}

// Reverse-mode sweep from a scalar loss. dLoss/dx accumulates into the grad
// buffer of every reachable requires-grad leaf; repeated calls without
// zero_grad keep accumulating.
template <class S>
void backward(const Tensor<S>& loss) {
  if (loss.size() != 1)
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;

  // Post-order DFS for a topological order.
  std::vector<Node<S>*> topo;
  std::unordered_set<Node<S>*> seen;
  std::vector<std::pair<Node<S>*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->inputs.size()) {
      Node<S>* child = n->inputs[i++].get();
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      topo.push_back(n);
      stack.pop_back();
    }
  }

  for (Node<S>* n : topo) n->flow.clear();
  ensure_flow(*loss.node());
  loss.node()->flow[0] = S(1);

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node<S>* n = *it;
    if (n->flow.empty()) continue;
    if (n->backprop) {
      n->backprop(*n);
    } else if (n->requires_grad) {
      if (n->grad.empty()) n->grad.assign(n->value.size(), S(0));
      for (size_t i = 0; i < n->flow.size(); ++i) n->grad[i] += n->flow[i];
    }
  }
  for (Node<S>* n : topo) n->flow.clear();
}

// ---------------------------------------------------------------------------
// Elementwise binary ops (shapes must match exactly).

template <class S>
inline void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  require_same_shape(a, b, "add");
  std::vector<S> out(a.value().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_op<S>("add", a.shape(), std::move(out), {a, b}, [](Node<S>& n) {
    for (int j = 0; j < 2; ++j) {
      auto& in = *n.inputs[size_t(j)];
      if (!in.requires_grad) continue;
      ensure_flow(in);
      for (size_t i = 0; i < n.flow.size(); ++i) in.flow[i] += n.flow[i];
    }
  });
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  require_same_shape(a, b, "sub");
  std::vector<S> out(a.value().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_op<S>("sub", a.shape(), std::move(out), {a, b}, [](Node<S>& n) {
    auto& ia = *n.inputs[0];
    auto& ib = *n.inputs[1];
    if (ia.requires_grad) {
      ensure_flow(ia);
      for (size_t i = 0; i < n.flow.size(); ++i) ia.flow[i] += n.flow[i];
    }
    if (ib.requires_grad) {
      ensure_flow(ib);
      for (size_t i = 0; i < n.flow.size(); ++i) ib.flow[i] -= n.flow[i];
    }
  });
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  require_same_shape(a, b, "mul");
  std::vector<S> out(a.value().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_op<S>("mul", a.shape(), std::move(out), {a, b}, [](Node<S>& n) {
    auto& ia = *n.inputs[0];
    auto& ib = *n.inputs[1];
    if (ia.requires_grad) {
      ensure_flow(ia);
      for (size_t i = 0; i < n.flow.size(); ++i) ia.flow[i] += n.flow[i] * ib.value[i];
    }
    if (ib.requires_grad) {
      ensure_flow(ib);
      for (size_t i = 0; i < n.flow.size(); ++i) ib.flow[i] += n.flow[i] * ia.value[i];
    }
  });
}

template <class S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  require_same_shape(a, b, "div");
  std::vector<S> out(a.value().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  return make_op<S>("div", a.shape(), std::move(out), {a, b}, [](Node<S>& n) {
    auto& ia = *n.inputs[0];
    auto& ib = *n.inputs[1];
    if (ia.requires_grad) {
      ensure_flow(ia);
      for (size_t i = 0; i < n.flow.size(); ++i) ia.flow[i] += n.flow[i] / ib.value[i];
    }
    if (ib.requires_grad) {
      ensure_flow(ib);
      for (size_t i = 0; i < n.flow.size(); ++i)
        ib.flow[i] -= n.flow[i] * n.value[i] / ib.value[i];
    }
  });
}

template <class S>
Tensor<S> scalar_mul(const Tensor<S>& a, S c) {
  std::vector<S> out(a.value().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c;
  return make_op<S>("scalar_mul", a.shape(), std::move(out), {a}, [c](Node<S>& n) {
    auto& in = *n.inputs[0];
    ensure_flow(in);
    for (size_t i = 0; i < n.flow.size(); ++i) in.flow[i] += n.flow[i] * c;
  });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops.

template <class S>
Tensor<S> exp(const Tensor<S>& a) {
  std::vector<S> out(a.value().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.value()[i]);
  return make_op<S>("exp", a.shape(), std::move(out), {a}, [](Node<S>& n) {
    auto& in = *n.inputs[0];
    ensure_flow(in);
    for (size_t i = 0; i < n.flow.size(); ++i) in.flow[i] += n.flow[i] * n.value[i];
  });
}

template <class S>
Tensor<S> log(const Tensor<S>& a) {
  std::vector<S> out(a.value().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.value()[i]);
  return make_op<S>("log", a.shape(), std::move(out), {a}, [](Node<S>& n) {
    auto& in = *n.inputs[0];
    ensure_flow(in);
    for (size_t i = 0; i < n.flow.size(); ++i) in.flow[i] += n.flow[i] / in.value[i];
  });
}

template <class S>
Tensor<S> tanh(const Tensor<S>& a) {
  std::vector<S> out(a.value().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.value()[i]);
  return make_op<S>("tanh", a.shape(), std::move(out), {a}, [](Node<S>& n) {
    auto& in = *n.inputs[0];
    ensure_flow(in);
    S sign = detail::tanh_grad_sign_flip() ? S(-1) : S(1);
    for (size_t i = 0; i < n.flow.size(); ++i)
      in.flow[i] += sign * n.flow[i] * (S(1) - n.value[i] * n.value[i]);
  });
}

// GELU, tanh approximation:
//   gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
// The inner tanh is cached from the forward pass for the backward rule.
template <class S>
Tensor<S> gelu(const Tensor<S>& a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  std::vector<S> out(a.value().size());
  auto cache = std::make_shared<std::vector<S>>(a.value().size());
  for (size_t i = 0; i < out.size(); ++i) {
    double x = double(a.value()[i]);
    double t = std::tanh(kC * (x + kA * x * x * x));
    (*cache)[i] = S(t);
    out[i] = S(0.5 * x * (1.0 + t));
  }
  return make_op<S>("gelu", a.shape(), std::move(out), {a}, [cache](Node<S>& n) {
    auto& in = *n.inputs[0];
    ensure_flow(in);
    for (size_t i = 0; i < n.flow.size(); ++i) {
      double x = double(in.value[i]);
      double t = double((*cache)[i]);
      double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * x * x);
      in.flow[i] += n.flow[i] * S(d);
    }
  });
}

// ---------------------------------------------------------------------------
// Axis decomposition helper: flat = (outer * n + i) * inner + j with i the
// index along `axis`.
struct AxisSplit {
  int64_t outer, n, inner;
};

inline AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit a{1, s[size_t(axis)], 1};
  for (int i = 0; i < axis; ++i) a.outer *= s[size_t(i)];
  for (size_t i = size_t(axis) + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

// Numerically stable softmax along one axis (max subtraction).
template <class S>
Tensor<S> softmax(const Tensor<S>& a, int axis) {
  axis = normalize_axis(axis, a.shape().size(), "softmax");
  AxisSplit ax = split_axis(a.shape(), axis);
  std::vector<S> out(a.value().size());
  const auto& v = a.value();
  for (int64_t o = 0; o < ax.outer; ++o) {
    for (int64_t j = 0; j < ax.inner; ++j) {
      int64_t base = o * ax.n * ax.inner + j;
      S m = v[size_t(base)];
      for (int64_t i = 1; i < ax.n; ++i) m = std::max(m, v[size_t(base + i * ax.inner)]);
      S sum = S(0);
      for (int64_t i = 0; i < ax.n; ++i) {
        S e = std::exp(v[size_t(base + i * ax.inner)] - m);
        out[size_t(base + i * ax.inner)] = e;
        sum += e;
      }
      for (int64_t i = 0; i < ax.n; ++i) out[size_t(base + i * ax.inner)] /= sum;
    }
  }
  return make_op<S>("softmax", a.shape(), std::move(out), {a}, [ax](Node<S>& n) {
    auto& in = *n.inputs[0];
    ensure_flow(in);
    // dx = y * (g - sum(g * y)) along the axis
    for (int64_t o = 0; o < ax.outer; ++o) {
      for (int64_t j = 0; j < ax.inner; ++j) {
        int64_t base = o * ax.n * ax.inner + j;
        S dot = S(0);
        for (int64_t i = 0; i < ax.n; ++i) {
          size_t p = size_t(base + i * ax.inner);
          dot += n.flow[p] * n.value[p];
        }
        for (int64_t i = 0; i < ax.n; ++i) {
          size_t p = size_t(base + i * ax.inner);
          in.flow[p] += n.value[p] * (n.flow[p] - dot);
        }
      }
    }
  });
}

// Normalization along one axis without affine parameters: (x - mean) /
// sqrt(var + eps), biased variance.
template <class S>
Tensor<S> layernorm(const Tensor<S>& a, int axis, double eps = 1e-5) {
  axis = normalize_axis(axis, a.shape().size(), "layernorm");
  AxisSplit ax = split_axis(a.shape(), axis);
  std::vector<S> out(a.value().size());
  std::vector<S> inv_std(size_t(ax.outer * ax.inner));
  const auto& v = a.value();
  for (int64_t o = 0; o < ax.outer; ++o) {
    for (int64_t j = 0; j < ax.inner; ++j) {
      int64_t base = o * ax.n * ax.inner + j;
      double mean = 0;
      for (int64_t i = 0; i < ax.n; ++i) mean += double(v[size_t(base + i * ax.inner)]);
      mean /= double(ax.n);
      double var = 0;
      for (int64_t i = 0; i < ax.n; ++i) {
        double d = double(v[size_t(base + i * ax.inner)]) - mean;
        var += d * d;
      }
      var /= double(ax.n);
      double inv = 1.0 / std::sqrt(var + eps);
      inv_std[size_t(o * ax.inner + j)] = S(inv);
      for (int64_t i = 0; i < ax.n; ++i) {
        size_t p = size_t(base + i * ax.inner);
        out[p] = S((double(v[p]) - mean) * inv);
      }
    }
  }
  return make_op<S>("layernorm", a.shape(), std::move(out), {a},
                    [ax, inv_std = std::move(inv_std)](Node<S>& n) {
                      auto& in = *n.inputs[0];
                      ensure_flow(in);
                      // dx = inv * (g - mean(g) - y * mean(g * y))
                      for (int64_t o = 0; o < ax.outer; ++o) {
                        for (int64_t j = 0; j < ax.inner; ++j) {
                          int64_t base = o * ax.n * ax.inner + j;
                          double gm = 0, gym = 0;
                          for (int64_t i = 0; i < ax.n; ++i) {
                            size_t p = size_t(base + i * ax.inner);
                            gm += double(n.flow[p]);
                            gym += double(n.flow[p]) * double(n.value[p]);
                          }
                          gm /= double(ax.n);
                          gym /= double(ax.n);
                          S inv = inv_std[size_t(o * ax.inner + j)];
                          for (int64_t i = 0; i < ax.n; ++i) {
                            size_t p = size_t(base + i * ax.inner);
                            in.flow[p] +=
                                inv * S(double(n.flow[p]) - gm - double(n.value[p]) * gym);
                          }
                        }
                      }
                    });
}

// ---------------------------------------------------------------------------
// Reductions along one axis; the axis dimension is dropped.

inline Shape reduced_shape(const Shape& s, int axis) {
  Shape out;
  for (size_t i = 0; i < s.size(); ++i)
    if (int(i) != axis) out.push_back(s[i]);
  return out;
}

template <class S>
Tensor<S> reduce_sum(const Tensor<S>& a, int axis) {
  axis = normalize_axis(axis, a.shape().size(), "reduce_sum");
  AxisSplit ax = split_axis(a.shape(), axis);
  std::vector<S> out(size_t(ax.outer * ax.inner), S(0));
  const auto& v = a.value();
  for (int64_t o = 0; o < ax.outer; ++o)
    for (int64_t i = 0; i < ax.n; ++i)
      for (int64_t j = 0; j < ax.inner; ++j)
        out[size_t(o * ax.inner + j)] += v[size_t((o * ax.n + i) * ax.inner + j)];
  return make_op<S>("reduce_sum", reduced_shape(a.shape(), axis), std::move(out), {a},
                    [ax](Node<S>& n) {
                      auto& in = *n.inputs[0];
                      ensure_flow(in);
                      for (int64_t o = 0; o < ax.outer; ++o)
                        for (int64_t i = 0; i < ax.n; ++i)
                          for (int64_t j = 0; j < ax.inner; ++j)
                            in.flow[size_t((o * ax.n + i) * ax.inner + j)] +=
                                n.flow[size_t(o * ax.inner + j)];
                    });
}

template <class S>
Tensor<S> reduce_mean(const Tensor<S>& a, int axis) {
  axis = normalize_axis(axis, a.shape().size(), "reduce_mean");
  AxisSplit ax = split_axis(a.shape(), axis);
  std::vector<S> out(size_t(ax.outer * ax.inner), S(0));
  const auto& v = a.value();
  for (int64_t o = 0; o < ax.outer; ++o)
    for (int64_t i = 0; i < ax.n; ++i)
      for (int64_t j = 0; j < ax.inner; ++j)
        out[size_t(o * ax.inner + j)] += v[size_t((o * ax.n + i) * ax.inner + j)];
  S scale = S(1) / S(ax.n);
  for (auto& x : out) x *= scale;
  return make_op<S>("reduce_mean", reduced_shape(a.shape(), axis), std::move(out), {a},
                    [ax, scale](Node<S>& n) {
                      auto& in = *n.inputs[0];
                      ensure_flow(in);
                      for (int64_t o = 0; o < ax.outer; ++o)
                        for (int64_t i = 0; i < ax.n; ++i)
                          for (int64_t j = 0; j < ax.inner; ++j)
                            in.flow[size_t((o * ax.n + i) * ax.inner + j)] +=
                                n.flow[size_t(o * ax.inner + j)] * scale;
                    });
}

// Max reduction; gradient routes to the first (lowest-index) maximum.
template <class S>
Tensor<S> reduce_max(const Tensor<S>& a, int axis) {
  axis = normalize_axis(axis, a.shape().size(), "reduce_max");
  AxisSplit ax = split_axis(a.shape(), axis);
  std::vector<S> out(size_t(ax.outer * ax.inner));
  std::vector<int64_t> argmax(size_t(ax.outer * ax.inner));
  const auto& v = a.value();
  for (int64_t o = 0; o < ax.outer; ++o) {
    for (int64_t j = 0; j < ax.inner; ++j) {
      S best = v[size_t(o * ax.n * ax.inner + j)];
      int64_t bi = 0;
      for (int64_t i = 1; i < ax.n; ++i) {
        S x = v[size_t((o * ax.n + i) * ax.inner + j)];
        if (x > best) {
          best = x;
          bi = i;
        }
      }
      out[size_t(o * ax.inner + j)] = best;
      argmax[size_t(o * ax.inner + j)] = bi;
    }
  }
  return make_op<S>("reduce_max", reduced_shape(a.shape(), axis), std::move(out), {a},
                    [ax, argmax = std::move(argmax)](Node<S>& n) {
                      auto& in = *n.inputs[0];
                      ensure_flow(in);
                      for (int64_t o = 0; o < ax.outer; ++o)
                        for (int64_t j = 0; j < ax.inner; ++j) {
                          int64_t i = argmax[size_t(o * ax.inner + j)];
                          in.flow[size_t((o * ax.n + i) * ax.inner + j)] +=
                              n.flow[size_t(o * ax.inner + j)];
                        }
                    });
}

// ---------------------------------------------------------------------------
// Shape ops.

// Visits every flat index of `shape` in row-major order; `src` advances by
// sstr[i] per unit step along axis i (an odometer walk, no divisions).
template <class Fn>
inline void walk_mapped(const Shape& shape, const std::vector<int64_t>& sstr, Fn&& fn) {
  size_t r = shape.size();
  std::vector<int64_t> idx(r, 0);
  int64_t total = numel(shape);
  int64_t src = 0;
  for (int64_t flat = 0; flat < total; ++flat) {
    fn(flat, src);
    for (int64_t i = int64_t(r) - 1; i >= 0; --i) {
      ++idx[size_t(i)];
      src += sstr[size_t(i)];
      if (idx[size_t(i)] < shape[size_t(i)]) break;
      src -= sstr[size_t(i)] * shape[size_t(i)];
      idx[size_t(i)] = 0;
    }
  }
}

template <class S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  if (numel(shape) != a.size())
    throw ContractError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                        shape_str(shape));
  std::vector<S> out = a.value();
  return make_op<S>("reshape", std::move(shape), std::move(out), {a}, [](Node<S>& n) {
    auto& in = *n.inputs[0];
    ensure_flow(in);
    for (size_t i = 0; i < n.flow.size(); ++i) in.flow[i] += n.flow[i];
  });
}

template <class S>
Tensor<S> transpose(const Tensor<S>& a, std::vector<int> perm) {
  size_t r = a.shape().size();
  if (perm.size() != r) throw ContractError("transpose: perm rank mismatch");
  std::vector<bool> used(r, false);
  for (int p : perm) {
    if (p < 0 || size_t(p) >= r || used[size_t(p)])
      throw ContractError("transpose: invalid permutation");
    used[size_t(p)] = true;
  }
  Shape oshape(r);
  for (size_t i = 0; i < r; ++i) oshape[i] = a.shape()[size_t(perm[i])];
  auto istr = row_major_strides(a.shape());
  // out[idx] = in[perm applied]; precompute input stride per output axis
  std::vector<int64_t> map_str(r);
  for (size_t i = 0; i < r; ++i) map_str[i] = istr[size_t(perm[i])];
  std::vector<S> out(static_cast<size_t>(a.size()));
  const auto& v = a.value();
  const Shape oshape_copy = oshape;
  walk_mapped(oshape, map_str,
              [&](int64_t flat, int64_t src) { out[size_t(flat)] = v[size_t(src)]; });
  return make_op<S>("transpose", std::move(oshape), std::move(out), {a},
                    [oshape_copy, map_str](Node<S>& n) {
                      auto& in = *n.inputs[0];
                      ensure_flow(in);
                      walk_mapped(oshape_copy, map_str, [&](int64_t flat, int64_t src) {
                        in.flow[size_t(src)] += n.flow[size_t(flat)];
                      });
                    });
}

template <class S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  axis = normalize_axis(axis, parts[0].shape().size(), "concat");
  Shape oshape = parts[0].shape();
  int64_t total_axis = 0;
  for (const auto& p : parts) {
    if (p.shape().size() != oshape.size())
      throw ContractError("concat: rank mismatch");
    for (size_t i = 0; i < oshape.size(); ++i)
      if (int(i) != axis && p.shape()[i] != oshape[i])
        throw ContractError("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                            shape_str(oshape) + " outside axis " + std::to_string(axis));
    total_axis += p.shape()[size_t(axis)];
  }
  oshape[size_t(axis)] = total_axis;
  AxisSplit ax = split_axis(oshape, axis);
  std::vector<S> out(size_t(numel(oshape)));
  std::vector<int64_t> axis_sizes;
  int64_t off = 0;
  for (const auto& p : parts) {
    int64_t pn = p.shape()[size_t(axis)];
    axis_sizes.push_back(pn);
    const auto& v = p.value();
    for (int64_t o = 0; o < ax.outer; ++o)
      for (int64_t i = 0; i < pn; ++i)
        for (int64_t j = 0; j < ax.inner; ++j)
          out[size_t((o * ax.n + off + i) * ax.inner + j)] =
              v[size_t((o * pn + i) * ax.inner + j)];
    off += pn;
  }
  return make_op<S>("concat", std::move(oshape), std::move(out), parts,
                    [ax, axis_sizes = std::move(axis_sizes)](Node<S>& n) {
                      int64_t off = 0;
                      for (size_t pi = 0; pi < n.inputs.size(); ++pi) {
                        int64_t pn = axis_sizes[pi];
                        auto& in = *n.inputs[pi];
                        if (in.requires_grad) {
                          ensure_flow(in);
                          for (int64_t o = 0; o < ax.outer; ++o)
                            for (int64_t i = 0; i < pn; ++i)
                              for (int64_t j = 0; j < ax.inner; ++j)
                                in.flow[size_t((o * pn + i) * ax.inner + j)] +=
                                    n.flow[size_t((o * ax.n + off + i) * ax.inner + j)];
                        }
                        off += pn;
                      }
                    });
}

// Select indices along an axis. Indices are attributes, not tensors; they
// receive no gradient. Duplicated indices scatter-add on the way back.
template <class S>
Tensor<S> gather(const Tensor<S>& a, int axis, std::vector<int64_t> indices) {
  axis = normalize_axis(axis, a.shape().size(), "gather");
  AxisSplit ax = split_axis(a.shape(), axis);
  for (int64_t idx : indices)
    if (idx < 0 || idx >= ax.n)
      throw ContractError("gather: index " + std::to_string(idx) + " out of range for axis size " +
                          std::to_string(ax.n));
  Shape oshape = a.shape();
  oshape[size_t(axis)] = int64_t(indices.size());
  int64_t m = int64_t(indices.size());
  std::vector<S> out(size_t(ax.outer * m * ax.inner));
  const auto& v = a.value();
  for (int64_t o = 0; o < ax.outer; ++o)
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < ax.inner; ++j)
        out[size_t((o * m + i) * ax.inner + j)] =
            v[size_t((o * ax.n + indices[size_t(i)]) * ax.inner + j)];
  return make_op<S>("gather", std::move(oshape), std::move(out), {a},
                    [ax, m, indices = std::move(indices)](Node<S>& n) {
                      auto& in = *n.inputs[0];
                      ensure_flow(in);
                      for (int64_t o = 0; o < ax.outer; ++o)
                        for (int64_t i = 0; i < m; ++i)
                          for (int64_t j = 0; j < ax.inner; ++j)
                            in.flow[size_t((o * ax.n + indices[size_t(i)]) * ax.inner + j)] +=
                                n.flow[size_t((o * m + i) * ax.inner + j)];
                    });
}

// Explicit broadcast: the input shape, padded with leading 1s to the target
// rank, must equal the target in every axis or be 1 there. The gradient sums
// over the expanded axes.
template <class S>
Tensor<S> broadcast_to(const Tensor<S>& a, Shape shape) {
  size_t r = shape.size();
  if (a.shape().size() > r)
    throw ContractError("broadcast: source rank " + std::to_string(a.shape().size()) +
                        " exceeds target rank " + std::to_string(r));
  Shape padded(r, 1);
  size_t offset = r - a.shape().size();
  for (size_t i = 0; i < a.shape().size(); ++i) padded[offset + i] = a.shape()[i];
  for (size_t i = 0; i < r; ++i)
    if (padded[i] != shape[i] && padded[i] != 1)
      throw ContractError("broadcast: cannot expand " + shape_str(a.shape()) + " to " +
                          shape_str(shape));
  auto istr_full = row_major_strides(padded);
  std::vector<int64_t> istr(r);
  for (size_t i = 0; i < r; ++i) istr[i] = (padded[i] == 1 && shape[i] != 1) ? 0 : istr_full[i];
  std::vector<S> out(static_cast<size_t>(numel(shape)));
  const auto& v = a.value();
  const Shape oshape_copy = shape;
  walk_mapped(shape, istr,
              [&](int64_t flat, int64_t src) { out[size_t(flat)] = v[size_t(src)]; });
  return make_op<S>("broadcast", std::move(shape), std::move(out), {a},
                    [oshape_copy, istr](Node<S>& n) {
                      auto& in = *n.inputs[0];
                      ensure_flow(in);
                      walk_mapped(oshape_copy, istr, [&](int64_t flat, int64_t src) {
                        in.flow[size_t(src)] += n.flow[size_t(flat)];
                      });
                    });
}

// ---------------------------------------------------------------------------
// Matrix multiply. Supported forms:
//   [m,k] x [k,n]                      -> [m,n]
//   [b...,m,k] x [k,n]  (shared rhs)   -> [b...,m,n]
//   [b...,m,k] x [b...,k,n]            -> [b...,m,n]
template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2)
    throw ContractError("matmul: inputs must have rank >= 2, got " + shape_str(sa) + " and " +
                        shape_str(sb));
  bool shared_rhs = (sb.size() == 2 && sa.size() >= 2);
  if (!shared_rhs && sa.size() != sb.size())
    throw ContractError("matmul: rank mismatch " + shape_str(sa) + " vs " + shape_str(sb));
  int64_t m = sa[sa.size() - 2], k = sa[sa.size() - 1];
  int64_t kb = sb[sb.size() - 2], n = sb[sb.size() - 1];
  if (k != kb)
    throw ContractError("matmul: inner dims mismatch " + std::to_string(k) + " vs " +
                        std::to_string(kb) + " (" + shape_str(sa) + " x " + shape_str(sb) + ")");
  int64_t batch = 1;
  Shape oshape;
  if (shared_rhs) {
    for (size_t i = 0; i + 2 < sa.size(); ++i) {
      batch *= sa[i];
      oshape.push_back(sa[i]);
    }
  } else {
    for (size_t i = 0; i + 2 < sa.size(); ++i) {
      if (sa[i] != sb[i])
        throw ContractError("matmul: batch dims mismatch " + shape_str(sa) + " vs " +
                            shape_str(sb));
      batch *= sa[i];
      oshape.push_back(sa[i]);
    }
  }
  oshape.push_back(m);
  oshape.push_back(n);

  std::vector<S> out(size_t(batch * m * n), S(0));
  const S* A = a.value().data();
  const S* B = b.value().data();
  for (int64_t bt = 0; bt < batch; ++bt) {
    const S* Ab = A + bt * m * k;
    const S* Bb = shared_rhs ? B : B + bt * k * n;
    S* Cb = out.data() + bt * m * n;
    for (int64_t i = 0; i < m; ++i) {
      const S* Ai = Ab + i * k;
      S* Ci = Cb + i * n;
      for (int64_t p = 0; p < k; ++p) {
        S av = Ai[p];
        const S* Bp = Bb + p * n;
        for (int64_t j = 0; j < n; ++j) Ci[j] += av * Bp[j];
      }
    }
  }
  return make_op<S>(
      "matmul", std::move(oshape), std::move(out), {a, b},
      [m, k, n, batch, shared_rhs](Node<S>& nd) {
        auto& ia = *nd.inputs[0];
        auto& ib = *nd.inputs[1];
        const S* A = ia.value.data();
        const S* B = ib.value.data();
        const S* G = nd.flow.data();
        if (ia.requires_grad) {
          ensure_flow(ia);
          S* dA = ia.flow.data();
          // dA = G @ B^T, with B transposed up front so the inner loop is a
          // stride-1 accumulation
          std::vector<S> bt_buf(size_t(n * k));
          for (int64_t bt = 0; bt < batch; ++bt) {
            const S* Gb = G + bt * m * n;
            const S* Bb = shared_rhs ? B : B + bt * k * n;
            S* dAb = dA + bt * m * k;
            if (bt == 0 || !shared_rhs)
              for (int64_t p = 0; p < k; ++p)
                for (int64_t j = 0; j < n; ++j) bt_buf[size_t(j * k + p)] = Bb[p * n + j];
            for (int64_t i = 0; i < m; ++i) {
              const S* Gi = Gb + i * n;
              S* dAi = dAb + i * k;
              for (int64_t j = 0; j < n; ++j) {
                S gv = Gi[j];
                const S* Bj = bt_buf.data() + j * k;
                for (int64_t p = 0; p < k; ++p) dAi[p] += gv * Bj[p];
              }
            }
          }
        }
        if (ib.requires_grad) {
          ensure_flow(ib);
          S* dB = ib.flow.data();
          // dB = A^T @ G, summed over the batch when the rhs is shared
          for (int64_t bt = 0; bt < batch; ++bt) {
            const S* Ab = A + bt * m * k;
            const S* Gb = G + bt * m * n;
            S* dBb = shared_rhs ? dB : dB + bt * k * n;
            for (int64_t i = 0; i < m; ++i) {
              const S* Ai = Ab + i * k;
              const S* Gi = Gb + i * n;
              for (int64_t p = 0; p < k; ++p) {
                S av = Ai[p];
                S* dBp = dBb + p * n;
                for (int64_t j = 0; j < n; ++j) dBp[j] += av * Gi[j];
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// 3D ops for the voxel decoder. Layout [C, D, H, W].

template <class S>
Tensor<S> upsample_nearest3d(const Tensor<S>& a) {
  const Shape& s = a.shape();
  if (s.size() != 4)
    throw ContractError("upsample_nearest3d: expected rank 4 [C,D,H,W], got " + shape_str(s));
  int64_t C = s[0], D = s[1], H = s[2], W = s[3];
  Shape oshape{C, 2 * D, 2 * H, 2 * W};
  std::vector<S> out(size_t(numel(oshape)));
  const auto& v = a.value();
  for (int64_t c = 0; c < C; ++c)
    for (int64_t z = 0; z < 2 * D; ++z)
      for (int64_t y = 0; y < 2 * H; ++y)
        for (int64_t x = 0; x < 2 * W; ++x)
          out[size_t(((c * 2 * D + z) * 2 * H + y) * 2 * W + x)] =
              v[size_t(((c * D + z / 2) * H + y / 2) * W + x / 2)];
  return make_op<S>("upsample_nearest3d", std::move(oshape), std::move(out), {a},
                    [C, D, H, W](Node<S>& n) {
                      auto& in = *n.inputs[0];
                      ensure_flow(in);
                      for (int64_t c = 0; c < C; ++c)
                        for (int64_t z = 0; z < 2 * D; ++z)
                          for (int64_t y = 0; y < 2 * H; ++y)
                            for (int64_t x = 0; x < 2 * W; ++x)
                              in.flow[size_t(((c * D + z / 2) * H + y / 2) * W + x / 2)] +=
                                  n.flow[size_t(((c * 2 * D + z) * 2 * H + y) * 2 * W + x)];
                    });
}

// 1x1x1 convolution: out[co, p] = sum_ci w[co, ci] * x[ci, p].
template <class S>
Tensor<S> conv3d_pointwise(const Tensor<S>& x, const Tensor<S>& w) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 4)
    throw ContractError("conv3d_pointwise: input must be rank 4 [C,D,H,W], got " + shape_str(sx));
  if (sw.size() != 2 || sw[1] != sx[0])
    throw ContractError("conv3d_pointwise: weight " + shape_str(sw) +
                        " incompatible with input channels " + std::to_string(sx[0]));
  int64_t Cin = sx[0], Cout = sw[0];
  int64_t P = sx[1] * sx[2] * sx[3];
  Shape oshape{Cout, sx[1], sx[2], sx[3]};
  std::vector<S> out(size_t(Cout * P), S(0));
  const S* X = x.value().data();
  const S* W = w.value().data();
  for (int64_t co = 0; co < Cout; ++co)
    for (int64_t ci = 0; ci < Cin; ++ci) {
      S wv = W[co * Cin + ci];
      const S* Xc = X + ci * P;
      S* Oc = out.data() + co * P;
      for (int64_t p = 0; p < P; ++p) Oc[p] += wv * Xc[p];
    }
  return make_op<S>("conv3d_pointwise", std::move(oshape), std::move(out), {x, w},
                    [Cin, Cout, P](Node<S>& n) {
                      auto& ix = *n.inputs[0];
                      auto& iw = *n.inputs[1];
                      const S* G = n.flow.data();
                      if (ix.requires_grad) {
                        ensure_flow(ix);
                        const S* W = iw.value.data();
                        for (int64_t ci = 0; ci < Cin; ++ci)
                          for (int64_t co = 0; co < Cout; ++co) {
                            S wv = W[co * Cin + ci];
                            const S* Gc = G + co * P;
                            S* dXc = ix.flow.data() + ci * P;
                            for (int64_t p = 0; p < P; ++p) dXc[p] += wv * Gc[p];
                          }
                      }
                      if (iw.requires_grad) {
                        ensure_flow(iw);
                        const S* X = ix.value.data();
                        for (int64_t co = 0; co < Cout; ++co)
                          for (int64_t ci = 0; ci < Cin; ++ci) {
                            S acc = S(0);
                            const S* Gc = G + co * P;
                            const S* Xc = X + ci * P;
                            for (int64_t p = 0; p < P; ++p) acc += Gc[p] * Xc[p];
                            iw.flow[size_t(co * Cin + ci)] += acc;
                          }
                      }
                    });
}

// ---------------------------------------------------------------------------
// Composites used throughout the model (not primitive ops).

// logistic(x) = 0.5 * (tanh(x / 2) + 1), composed from primitives.
template <class S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  Tensor<S> half = tanh(scalar_mul(a, S(0.5)));
  Tensor<S> ones = Tensor<S>::full(a.shape(), S(1));
  return scalar_mul(add(half, ones), S(0.5));
}

// Sum of every element, as a rank-0 tensor.
template <class S>
Tensor<S> sum_all(const Tensor<S>& a) {
  Tensor<S> flat = a.rank() == 1 ? a : reshape(a, Shape{a.size()});
  return reduce_sum(flat, 0);
}

// The registered op kinds; the gradient-check suite enumerates this table and
// must cover every entry.
inline const std::vector<std::string>& registered_op_kinds() {
  static const std::vector<std::string> kinds = {
      "matmul",      "add",        "sub",       "mul",
      "scalar_mul",  "div",        "exp",       "log",
      "tanh",        "gelu",       "softmax",   "layernorm",
      "reduce_sum",  "reduce_mean", "reduce_max", "reshape",
      "transpose",   "concat",     "gather",    "broadcast",
      "upsample_nearest3d", "conv3d_pointwise"};
  return kinds;
}

}  // namespace umif
