#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dmae {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelfCheckOptions {
  std::uint64_t seed = 7;
  // Corrupts one backpropagated weight gradient; the gradient checks must fail.
  bool inject_gradient_fault = false;
};

// Fast invariant suite: autoencoder and dependence gradients against finite
// differences, the trace/Frobenius argmax equivalence by brute force at n = 4,
// Hungarian rounding against enumeration, and the SMI -> uKTA reduction.
std::vector<CheckResult> run_selfchecks(const SelfCheckOptions& opts = {});

}  // namespace dmae
