#pragma once

// Finite-difference verification of the analytic gradients.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mst::nn {

inline constexpr double kGradCheckStep = 1e-2;
inline constexpr double kGradCheckTolerance = 1e-3;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  double tolerance = kGradCheckTolerance;
  bool passed = true;
};

using Objective = std::function<double(std::span<const double>)>;

// Central differences of f at point, compared element-wise with analytic.
// Element error is |a - n| / max(|a|, |n|, floor) where floor is 1e-2 of the
// largest numeric component (so entries that are zero up to rounding do not
// divide by ~0); an all-zero gradient is compared absolutely.
GradCheckReport grad_check(const Objective& f, std::span<const double> point, std::span<const double> analytic,
                           double step = kGradCheckStep, double tolerance = kGradCheckTolerance);

// One line of the layer suite: the worst error over all cases and all
// checked quantities (input and every parameter) of one layer kind.
struct LayerCheckSummary {
  std::string layer;
  std::size_t cases = 0;
  std::size_t failed_cases = 0;
  double max_rel_error = 0.0;
  std::string worst_case;  // shape description of the worst case
  [[nodiscard]] bool passed() const { return failed_cases == 0; }
};

// Runs `cases` random shapes per layer kind: conv2d, conv2d_transpose,
// instance_norm, relu, leaky_relu, sigmoid, tanh, mse_to_constant, l1_diff.
std::vector<LayerCheckSummary> run_gradcheck_suite(std::uint64_t seed, std::size_t cases = 20,
                                                   double tolerance = kGradCheckTolerance);

}  // namespace mst::nn
