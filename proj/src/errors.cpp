#include "msemg/errors.hpp"

namespace msemg {

void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace msemg
