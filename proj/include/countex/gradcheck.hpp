#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "countex/nn.hpp"

namespace countex::gradcheck {

inline constexpr double kStep = 1e-5;
inline constexpr double kTolerance = 1e-4;

/// A scalar function of named matrices. `sample` draws one random point;
/// `loss` rebuilds the graph from whatever the binder holds.
struct Case {
  std::string name;
  std::function<nn::ParamStore(RngStream&)> sample;
  std::function<ad::Var(nn::Binder&)> loss;
  /// Entries read as plain data (targets, points); not differentiated.
  std::vector<std::string> fixed = {};
};

struct Result {
  std::string name;
  std::size_t points = 0;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool passed = false;
};

/// Relative error of one point: max_k |a_k - n_k| / max(|n|_inf, |a|_inf, 1e-8).
double relative_error(std::span<const double> analytic, std::span<const double> numeric);

/// Central differences with step h at `points` random points.
Result check(const Case& c, std::uint64_t seed, std::size_t points = 20, double h = kStep,
             double tolerance = kTolerance);

/// Every differentiable operation plus the refinement-and-heads composite.
std::vector<Case> standard_cases();

/// A case whose analytic gradient is deliberately wrong (for detector tests).
Case perturbed_case();

std::vector<Result> run_all(std::uint64_t seed, std::size_t points = 20);

}  // namespace countex::gradcheck
