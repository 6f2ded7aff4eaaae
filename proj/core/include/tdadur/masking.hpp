#pragma once

#include <cstddef>

#include "tdadur/rng.hpp"
#include "tdadur/types.hpp"

namespace tdadur {

enum class MaskFamily { contiguous_span, random_ratio };

struct MaskPolicy {
  double mask_all_probability = 0.2;
  double span_fraction_lo = 0.1;
  double span_fraction_hi = 1.0;
  MaskFamily family = MaskFamily::contiguous_span;

  void validate() const;
};

// gamma(r) = cos(pi r / 2), the MaskGIT cosine schedule on [0, 1].
double cosine_schedule(double r);

// Single contiguous span of round(f n) positions, or everything with
// probability policy.mask_all_probability.
MaskSequence sample_span_mask(std::size_t n, const MaskPolicy& policy, Rng& rng);

// Span mask with the random choices supplied by the caller.
MaskSequence span_mask(std::size_t n, double fraction, std::size_t start);

// ceil(gamma(r) n) positions chosen without replacement, r ~ U(0, 1].
MaskSequence sample_ratio_mask(std::size_t n, Rng& rng);

// Number of positions a ratio mask covers for a given r; at least one.
std::size_t ratio_mask_count(std::size_t n, double r);

// Dispatches on policy.family.
MaskSequence sample_training_mask(std::size_t n, const MaskPolicy& policy, Rng& rng);

}  // namespace tdadur
