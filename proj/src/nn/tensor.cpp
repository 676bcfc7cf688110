#include "mst/nn/tensor.hpp"

#include <atomic>

namespace mst::nn {

std::string_view to_string(NnErrc code) {
  switch (code) {
    case NnErrc::ShapeMismatch: return "shape-mismatch";
    case NnErrc::DegenerateSpatial: return "degenerate-spatial";
    case NnErrc::NonFinite: return "non-finite";
  }
  return "unknown";
}

NnError::NnError(NnErrc code, const std::string& message) : Error(message), errc_(code) {}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {
#ifdef NDEBUG
std::atomic<bool> g_finite_checks{false};
#else
std::atomic<bool> g_finite_checks{true};
#endif
}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }
bool finite_checks_enabled() { return g_finite_checks.load(); }

void throw_non_finite(const std::string& where) {
  throw NnError(NnErrc::NonFinite, "non-finite value after " + where);
}

}  // namespace mst::nn
