// Acceptance battery: one pass/fail line per criterion, nonzero exit when any
// criterion fails.

#include <cstdio>

#include "criteria.hpp"

int main() {
  const auto results = gfma::checks::run_acceptance_criteria();
  int fails = 0;
  for (const auto& r : results) {
    std::printf("%s criterion %2d: %s -- %s\n", r.pass ? "[PASS]" : "[FAIL]", r.id,
                r.name.c_str(), r.detail.c_str());
    std::fflush(stdout);
    if (!r.pass) ++fails;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(results.size()) - fails,
              results.size());
  return fails == 0 ? 0 : 1;
}
