#include "tdadur/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "tdadur/error.hpp"

namespace tdadur {

void MaskPolicy::validate() const {
  if (!(mask_all_probability >= 0.0 && mask_all_probability <= 1.0)) {
    throw DomainError("MaskPolicy: mask_all_probability must lie in [0, 1]");
  }
  if (!(span_fraction_lo > 0.0 && span_fraction_hi <= 1.0 && span_fraction_lo <= span_fraction_hi)) {
    throw DomainError("MaskPolicy: span fraction range must satisfy 0 < lo <= hi <= 1");
  }
}

double cosine_schedule(double r) {
  if (!(r >= 0.0 && r <= 1.0)) throw DomainError("cosine_schedule: r outside [0, 1]");
  if (r == 1.0) return 0.0;
  return std::cos(std::numbers::pi * r / 2.0);
}

MaskSequence span_mask(std::size_t n, double fraction, std::size_t start) {
  if (n == 0) throw StructuralError("span_mask: n must be >= 1");
  // Round half up, then clamp into [1, n].
  auto len = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
  len = std::clamp<std::size_t>(len, 1, n);
  start = std::min(start, n - len);
  std::vector<std::uint8_t> flags(n, 0);
  std::fill(flags.begin() + static_cast<std::ptrdiff_t>(start),
            flags.begin() + static_cast<std::ptrdiff_t>(start + len), 1);
  return MaskSequence(std::move(flags));
}

MaskSequence sample_span_mask(std::size_t n, const MaskPolicy& policy, Rng& rng) {
  if (n == 0) throw StructuralError("sample_span_mask: n must be >= 1");
  if (rng.uniform() < policy.mask_all_probability) return MaskSequence::all(n);
  const double f = rng.uniform(policy.span_fraction_lo, policy.span_fraction_hi);
  auto len = static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 0.5));
  len = std::clamp<std::size_t>(len, 1, n);
  const std::size_t start = static_cast<std::size_t>(rng.below(n - len + 1));
  return span_mask(n, f, start);
}

std::size_t ratio_mask_count(std::size_t n, double r) {
  const double gamma = cosine_schedule(r);
  auto count = static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(n) - 1e-12));
  return std::clamp<std::size_t>(count, 1, n);
}

MaskSequence sample_ratio_mask(std::size_t n, Rng& rng) {
  if (n == 0) throw StructuralError("sample_ratio_mask: n must be >= 1");
  const std::size_t count = ratio_mask_count(n, rng.uniform_open_closed());
  // Partial Fisher-Yates: the first `count` entries are the chosen positions.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(order[i], order[j]);
  }
  std::vector<std::uint8_t> flags(n, 0);
  for (std::size_t i = 0; i < count; ++i) flags[order[i]] = 1;
  return MaskSequence(std::move(flags));
}

MaskSequence sample_training_mask(std::size_t n, const MaskPolicy& policy, Rng& rng) {
  switch (policy.family) {
    case MaskFamily::contiguous_span:
      return sample_span_mask(n, policy, rng);
    case MaskFamily::random_ratio:
      return sample_ratio_mask(n, rng);
  }
  throw StructuralError("sample_training_mask: unknown mask family");
}

}  // namespace tdadur
