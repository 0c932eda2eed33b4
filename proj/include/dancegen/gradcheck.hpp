#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dancegen::gradcheck {

struct CheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Central finite-difference checks for every layer type plus a full
/// 3-step sequence graph (encoder, auto-conditioned decoder, combined loss)
/// on a small model. Deterministic for a fixed seed.
std::vector<CheckResult> run_gradient_checks(std::uint64_t seed = 7);

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace dancegen::gradcheck
