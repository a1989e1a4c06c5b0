#include <doctest.h>

#include <cmath>

#include "umif/optim.hpp"

using namespace umif;

TEST_CASE("zero gradient with zero decay leaves parameters unchanged") {
  ParamStore<double> ps;
  ps.set_seed(1);
  Tensor<double> p = ps.add("w", {3}, Init::Normal002);
  std::vector<double> before = p.value();
  p.zero_grad();
  OptimizerState<double> st;
  st.weight_decay = 0.0;
  st.learning_rate = 0.5;
  adamw_step(ps, st);
  CHECK(p.value() == before);
  CHECK(st.step_count == 1);
}

TEST_CASE("one step matches the hand-computed recurrence to 1e-12") {
  ParamStore<double> ps;
  ps.set_seed(1);
  Tensor<double> p = ps.add("w", {1}, Init::Ones);
  p.zero_grad();
  p.node()->grad[0] = -0.7;
  OptimizerState<double> st;
  st.learning_rate = 3e-3;
  st.weight_decay = 0.05;
  st.beta1 = 0.9;
  st.beta2 = 0.999;
  st.epsilon = 1e-8;
  adamw_step(ps, st);
  double g = -0.7;
  double m = (1 - 0.9) * g;
  double v = (1 - 0.999) * g * g;
  double mhat = m / (1 - 0.9);
  double vhat = v / (1 - 0.999);
  double expect = 1.0 - 3e-3 * (mhat / (std::sqrt(vhat) + 1e-8) + 0.05 * 1.0);
  CHECK(std::abs(p.value()[0] - expect) < 1e-12);

  // second step, still hand-tracked
  p.zero_grad();
  p.node()->grad[0] = 0.2;
  adamw_step(ps, st);
  double w1 = expect;
  m = 0.9 * m + 0.1 * 0.2;
  v = 0.999 * v + 0.001 * 0.04;
  mhat = m / (1 - 0.9 * 0.9);
  vhat = v / (1 - 0.999 * 0.999);
  expect = w1 - 3e-3 * (mhat / (std::sqrt(vhat) + 1e-8) + 0.05 * w1);
  CHECK(std::abs(p.value()[0] - expect) < 1e-12);
}

TEST_CASE("missing gradient names the parameter") {
  ParamStore<double> ps;
  ps.set_seed(1);
  ps.add("encoder.block0.mha.wq.w", {2, 2}, Init::Normal002);
  OptimizerState<double> st;
  try {
    adamw_step(ps, st);
    FAIL("expected throw");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("encoder.block0.mha.wq.w") != std::string::npos);
  }
}

TEST_CASE("step-decay learning-rate schedule") {
  std::vector<int> decay = {50, 120};
  CHECK(lr_at_epoch(1e-4, decay, 0) == 1e-4);
  CHECK(lr_at_epoch(1e-4, decay, 49) == 1e-4);
  CHECK(lr_at_epoch(1e-4, decay, 50) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(lr_at_epoch(1e-4, decay, 119) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(lr_at_epoch(1e-4, decay, 120) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(lr_at_epoch(1e-4, decay, 149) == doctest::Approx(1e-6).epsilon(1e-12));
}

TEST_CASE("parameter names are unique and name-seeded init is order-independent") {
  ParamStore<double> a;
  a.set_seed(9);
  a.add("x", {4}, Init::Normal002);
  CHECK_THROWS_AS(a.add("x", {4}, Init::Normal002), ContractError);
  Tensor<double> ay = a.add("y", {4}, Init::Normal002);

  ParamStore<double> b;
  b.set_seed(9);
  Tensor<double> by = b.add("y", {4}, Init::Normal002);  // registered first here
  b.add("x", {4}, Init::Normal002);
  CHECK(ay.value() == by.value());
}
