#pragma once

#include <string>
#include <vector>

namespace gfma::checks {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

// The full acceptance battery. Each criterion is self-contained and reports
// the measured quantities it was judged on.
std::vector<CriterionResult> run_acceptance_criteria();

}  // namespace gfma::checks
