#include "jrnlab/metrics.hpp"

#include <cmath>

#include "jrnlab/common.hpp"

namespace jrnlab {

namespace {

void check_aligned(const EstimateSet& x_true, const EstimateSet& estimates) {
  if (x_true.size() != estimates.size() || x_true.empty()) {
    throw ConfigError("metrics: sequence count mismatch");
  }
  for (std::size_t k = 0; k < x_true.size(); ++k) {
    if (x_true[k].size() != estimates[k].size()) {
      throw ConfigError("metrics: sequence length mismatch at sequence " +
                        std::to_string(k));
    }
  }
}

}  // namespace

double error_at_t(const EstimateSet& x_true, const EstimateSet& estimates, int t) {
  check_aligned(x_true, estimates);
  if (t < 1 || t > static_cast<int>(x_true[0].size())) {
    throw ConfigError("error_at_t: t out of range");
  }
  double sum = 0.0;
  long count = 0;
  for (std::size_t k = 0; k < x_true.size(); ++k) {
    sum += (x_true[k][t - 1] - estimates[k][t - 1]).squaredNorm();
    count += x_true[k][t - 1].size();
  }
  return sum / static_cast<double>(count);
}

std::vector<double> error_curve(const EstimateSet& x_true,
                                const EstimateSet& estimates) {
  check_aligned(x_true, estimates);
  const int T = static_cast<int>(x_true[0].size());
  std::vector<double> curve(T);
  for (int t = 1; t <= T; ++t) curve[t - 1] = error_at_t(x_true, estimates, t);
  return curve;
}

double rmse(const EstimateSet& x_true, const EstimateSet& estimates) {
  check_aligned(x_true, estimates);
  double sum = 0.0;
  long count = 0;
  for (std::size_t k = 0; k < x_true.size(); ++k) {
    for (std::size_t t = 0; t < x_true[k].size(); ++t) {
      sum += (x_true[k][t] - estimates[k][t]).squaredNorm();
      count += x_true[k][t].size();
    }
  }
  return std::sqrt(sum / static_cast<double>(count));
}

}  // namespace jrnlab
