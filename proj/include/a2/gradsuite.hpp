#pragma once

#include <string>
#include <vector>

namespace a2 {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  int seeds = 0;
};

// Central finite-difference validation of every differentiable block at f64:
// conv, depthwise conv, batchnorm (train), ReLU6 away from its kinks,
// avgpool, plain inverted residual, gather, distribute, the full attended
// block, cross-entropy, and the softmax/batched-matmul primitives. Reports
// the max relative error per block over `seeds_per_block` random draws.
std::vector<GradCheckResult> run_gradient_checks(int seeds_per_block = 20, double step = 1e-4);

}  // namespace a2
