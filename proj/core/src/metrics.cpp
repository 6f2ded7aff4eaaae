#include "tdadur/metrics.hpp"

#include <cmath>

#include "tdadur/error.hpp"

namespace tdadur {

GaussianSummary fit_log_gaussian(std::span<const double> durations) {
  GaussianSummary g;
  g.count = durations.size();
  if (g.count == 0) return g;
  // Two-pass moments; sums of up to ~1e6 log values stay well conditioned.
  double sum = 0.0;
  for (double d : durations) sum += log_transform(d);
  g.mean = sum / static_cast<double>(g.count);
  double ss = 0.0;
  for (double d : durations) {
    const double e = log_transform(d) - g.mean;
    ss += e * e;
  }
  g.stddev = std::sqrt(ss / static_cast<double>(g.count));
  return g;
}

double frechet_distance(const GaussianSummary& a, const GaussianSummary& b) {
  const double dm = a.mean - b.mean;
  const double ds = a.stddev - b.stddev;
  return dm * dm + ds * ds;
}

double fdd(std::span<const double> reference, std::span<const double> generated) {
  if (reference.size() < 2 || generated.size() < 2) {
    throw DegenerateInputError("fdd: both sample sets need at least 2 durations");
  }
  return frechet_distance(fit_log_gaussian(reference), fit_log_gaussian(generated));
}

double total_duration_error(std::span<const double> predicted, const MaskSequence& mask, double target) {
  return pre_lr_deviation(masked_sum(predicted, mask), target);
}

double total_duration_error(std::span<const int> predicted, const MaskSequence& mask, double target) {
  return pre_lr_deviation(static_cast<double>(masked_sum(predicted, mask)), target);
}

double pre_lr_deviation(double raw_masked_sum, double target) {
  if (target == 0.0) throw DomainError("duration error: target must be non-zero");
  return std::abs(raw_masked_sum - target) / target;
}

double pre_lr_deviation(std::span<const double> raw, const MaskSequence& mask, double target) {
  return pre_lr_deviation(masked_sum(raw, mask), target);
}

}  // namespace tdadur
