#pragma once

// Verification suites shared by the CLI `verify` subcommand, the unit tests
// and the acceptance runner: central finite-difference gradient checks for
// every registered op plus the composed pipeline, brute-force oracle
// comparisons, and the architectural/metric invariants.

#include <functional>
#include <string>
#include <vector>

#include "umif/tensor.hpp"

namespace umif {

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<Check> checks;
  double seconds = 0;

  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
  std::string first_failure() const {
    for (const auto& c : checks)
      if (!c.pass) return c.name + ": " + c.detail;
    return "";
  }
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  int max_components_per_leaf = -1;  // -1 checks every component
  uint64_t component_seed = 1;
};

struct GradCheckResult {
  bool pass = false;
  double rel_error = 0;
  std::string detail;
};

// Compares reverse-mode gradients of the scalar loss produced by `loss_fn`
// (which must rebuild its graph from the leaves' current values on every
// call) against central finite differences, in double precision. The error
// is ||analytic - fd||_inf normalized by max(1e-3, ||analytic||_inf,
// ||fd||_inf) over the checked components.
GradCheckResult grad_check(const std::function<Tensor<double>()>& loss_fn,
                           std::vector<Tensor<double>> leaves, const GradCheckOptions& opts = {});

// Gradient checks for each registered op kind (20 random instances each,
// rel < 1e-4) and the composed encoder+decoder+Dice pipeline (rel < 1e-3).
// `only_op` restricts to one op kind (or "composed").
SuiteReport run_gradcheck_suite(int seeds_per_op = 20, const std::string& only_op = "");

// inter_view_knn and dpc_knn_cluster against their brute-force oracles on
// random instances (exact match required), plus direct-computation oracles
// for fusion, the weighted merger attention, Dice and F-Score.
SuiteReport run_oracle_suite(int instances = 500, uint64_t seed = 2024);

// Architectural, metric, format and data-harness invariants.
SuiteReport run_invariant_suite(uint64_t seed = 2024);

}  // namespace umif
