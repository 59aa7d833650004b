#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "toothseg/types.hpp"

namespace toothseg {

struct GradcheckResult {
  std::string name;
  double max_rel_err = 0.0;
  bool passed = false;
};

// Central finite differences against the analytic tape gradients:
// the local group standardization, the boundary focal term, the BCE+Dice
// mask loss, and the full composite loss through every model parameter.
// Tolerance 1e-4 relative (floor 1e-2 on the denominator scale).
std::vector<GradcheckResult> run_gradcheck(std::uint64_t seed, std::ostream* log);

bool gradcheck_passed(const std::vector<GradcheckResult>& results);

}  // namespace toothseg
