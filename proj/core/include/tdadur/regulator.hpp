#pragma once

#include <span>
#include <vector>

#include "tdadur/types.hpp"

namespace tdadur {

enum class RegulationMode { integer, real };

struct RegulationResult {
  // Masked entries are regulated; unmasked entries are the input unchanged.
  // In integer mode every masked entry holds an integral value >= 1.
  RealDurations durations;
  double alpha = 1.0;

  Frames frames() const;
};

// alpha = target / sum of the masked predictions.
double scaling_factor(std::span<const double> predicted, const MaskSequence& mask, double target);

RegulationResult length_regulate(std::span<const double> predicted, const MaskSequence& mask,
                                 double target, RegulationMode mode = RegulationMode::integer);

// Scales `values` to sum to `target` and apportions integer frames by the
// largest-remainder method with a floor of one frame per entry.
//
// Surplus units go to entries with the largest positive remainder
// (scaled - assigned), lower index first on ties. When the one-frame floor
// pushes the floors past the target, units are removed from the
// highest-index entries that still hold more than one frame. The result is
// the lexicographically greatest integer vector among those minimising the
// L1 distance to the scaled values.
//
// Zero entries are accepted and receive the floor; negative or non-finite
// entries and an all-zero input are errors.
Frames uniform_normalize_integer(std::span<const double> values, long long target);

// Same apportionment with an upper bound per entry (MaskGIT token range).
Frames uniform_normalize_integer_capped(std::span<const double> values, long long target,
                                        int max_value);

}  // namespace tdadur
