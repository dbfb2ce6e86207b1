#pragma once

#include <stdexcept>
#include <string>

namespace mtomd {

/// Malformed user input: run configs, CSV datasets, graph edge lists.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative solver hit its iteration cap before reaching tolerance.
class solver_error : public std::runtime_error {
 public:
  solver_error(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}

  double residual() const { return residual_; }

 private:
  double residual_;
};

}  // namespace mtomd
