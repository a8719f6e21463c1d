#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace strnet {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

enum class ErrorKind {
  Config,
  Stretch,
  Frame,
  Cfl,
  NonFinite,
  Newton,
  Equilibrium,
  Compat,
  Infeasible,
  Horizon,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  // Short machine-greppable tag, e.g. "E_STRETCH".
  const char* code() const;

 private:
  ErrorKind kind_;
};

// Smallest admissible |R_x| - 1 anywhere in a run.
inline constexpr double kDeltaStretch = 1e-6;

}  // namespace strnet
