#include "strnet/core.hpp"

namespace strnet {

const char* Error::code() const {
  switch (kind_) {
    case ErrorKind::Config: return "E_CONFIG";
    case ErrorKind::Stretch: return "E_STRETCH";
    case ErrorKind::Frame: return "E_FRAME";
    case ErrorKind::Cfl: return "E_CFL";
    case ErrorKind::NonFinite: return "E_NONFINITE";
    case ErrorKind::Newton: return "E_NEWTON";
    case ErrorKind::Equilibrium: return "E_EQUILIBRIUM";
    case ErrorKind::Compat: return "E_COMPAT";
    case ErrorKind::Infeasible: return "E_INFEASIBLE";
    case ErrorKind::Horizon: return "E_HORIZON";
  }
  return "E_UNKNOWN";
}

}  // namespace strnet
