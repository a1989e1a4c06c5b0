#include <doctest.h>

#include "umif/tensor.hpp"
#include "umif/verify.hpp"

using namespace umif;

TEST_CASE("backward requires a scalar loss") {
  Tensor<double> x = Tensor<double>::leaf({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(add(x, x)), ContractError);
}

TEST_CASE("sum gradient is all ones") {
  Tensor<double> x = Tensor<double>::leaf({2, 3}, {1, -2, 3, 0, 5, 6}, true);
  backward(sum_all(x));
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("sum of squares gradient") {
  Tensor<double> x = Tensor<double>::leaf({2}, {1, 2}, true);
  backward(sum_all(mul(x, x)));
  CHECK(x.grad() == std::vector<double>{2, 4});
}

TEST_CASE("repeated backward accumulates into leaves") {
  Tensor<double> x = Tensor<double>::leaf({2}, {1, 2}, true);
  Tensor<double> loss = sum_all(mul(x, x));
  backward(loss);
  backward(loss);
  CHECK(x.grad() == std::vector<double>{4, 8});
  x.zero_grad();
  backward(loss);
  CHECK(x.grad() == std::vector<double>{2, 4});
}

TEST_CASE("gather routes gradients into gathered values only, with accumulation") {
  Tensor<double> x = Tensor<double>::leaf({3, 1}, {1, 2, 3}, true);
  backward(sum_all(gather(x, 0, {0, 0, 2})));
  CHECK(x.grad() == std::vector<double>{2, 0, 1});
}

TEST_CASE("every registered op kind passes finite-difference checks") {
  // 64-bit mode, >= 20 random instances per op, rel error < 1e-4
  SuiteReport rep = run_gradcheck_suite(20);
  // one check per registered op plus the composed pipeline
  CHECK(rep.checks.size() == registered_op_kinds().size() + 1);
  for (const auto& c : rep.checks) {
    INFO(c.name, ": ", c.detail);
    CHECK(c.pass);
  }
}

TEST_CASE("gradient-check mutation fixture catches an injected sign error") {
  detail::tanh_grad_sign_flip() = true;
  SuiteReport rep = run_gradcheck_suite(3, "tanh");
  detail::tanh_grad_sign_flip() = false;
  REQUIRE(rep.checks.size() == 1);
  CHECK_FALSE(rep.checks[0].pass);
  SuiteReport clean = run_gradcheck_suite(3, "tanh");
  CHECK(clean.checks[0].pass);
}

TEST_CASE("backward determinism is bit-exact") {
  auto run = [] {
    Rng r(7);
    std::vector<double> d(12);
    for (auto& v : d) v = r.uniform(-1, 1);
    Tensor<double> x = Tensor<double>::leaf({3, 4}, std::move(d), true);
    Tensor<double> y = softmax(gelu(matmul(x, transpose(x, {1, 0}))), 1);
    backward(sum_all(mul(y, y)));
    return x.grad();
  };
  CHECK(run() == run());
}
