#pragma once

#include <stdexcept>
#include <string>

namespace gfma {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnsupportedOrder : std::runtime_error {
  explicit UnsupportedOrder(int order)
      : std::runtime_error("unsupported modulation order " + std::to_string(order)) {}
};

struct NonPositiveDistance : std::runtime_error {
  explicit NonPositiveDistance(double d)
      : std::runtime_error("distance must be positive, got " + std::to_string(d)) {}
};

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalDivergence : std::runtime_error {
  int iteration;
  NumericalDivergence(const std::string& where, int iter)
      : std::runtime_error(where + ": non-finite state at iteration " + std::to_string(iter)),
        iteration(iter) {}
};

struct EmptyActiveSet : std::runtime_error {
  EmptyActiveSet() : std::runtime_error("detected active set is empty") {}
};

struct Overdetermined : std::runtime_error {
  Overdetermined(int slots, int users)
      : std::runtime_error("CE system is overdetermined (T=" + std::to_string(slots) +
                           " >= Ka_hat=" + std::to_string(users) + ")") {}
};

struct SingularSystem : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gfma
