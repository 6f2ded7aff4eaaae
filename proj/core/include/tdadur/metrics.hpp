#pragma once

#include <cstddef>
#include <span>

#include "tdadur/types.hpp"

namespace tdadur {

struct GaussianSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population (ddof = 0)
  std::size_t count = 0;
};

// Moments of log(1 + d) over the samples.
GaussianSummary fit_log_gaussian(std::span<const double> durations);

// 1-D Frechet distance between Gaussians fitted in log(1 + d) domain:
// (mu1 - mu2)^2 + (sigma1 - sigma2)^2. Both sets need >= 2 samples.
double fdd(std::span<const double> reference, std::span<const double> generated);
double frechet_distance(const GaussianSummary& a, const GaussianSummary& b);

// |masked_sum(predicted) - target| / target.
double total_duration_error(std::span<const double> predicted, const MaskSequence& mask, double target);
double total_duration_error(std::span<const int> predicted, const MaskSequence& mask, double target);

// Same formula applied to a raw masked sum taken before length regulation.
double pre_lr_deviation(double raw_masked_sum, double target);
double pre_lr_deviation(std::span<const double> raw, const MaskSequence& mask, double target);

}  // namespace tdadur
