#include "tdadur/regulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "tdadur/error.hpp"

namespace tdadur {

namespace {

// Remainders are compared after quantising to this resolution so that the
// result does not flip under last-ulp differences in the scaling step.
constexpr double kRemainderResolution = 1e12;

double positive_sum(std::span<const double> values, const char* what) {
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) {
      throw DomainError(std::string(what) + ": values must be finite and non-negative");
    }
    sum += v;
  }
  if (!(sum > 0.0)) throw DegenerateInputError(std::string(what) + ": values sum to zero");
  return sum;
}

}  // namespace

Frames RegulationResult::frames() const {
  Frames out(durations.size());
  std::transform(durations.begin(), durations.end(), out.begin(),
                 [](double d) { return static_cast<int>(std::lround(d)); });
  return out;
}

double scaling_factor(std::span<const double> predicted, const MaskSequence& mask, double target) {
  if (!(target > 0.0) || !std::isfinite(target)) {
    throw DomainError("scaling_factor: target must be positive");
  }
  const double sum = masked_sum(predicted, mask);
  if (!(sum > 0.0)) throw DegenerateInputError("scaling_factor: masked prediction sum is zero");
  return target / sum;
}

RegulationResult length_regulate(std::span<const double> predicted, const MaskSequence& mask,
                                 double target, RegulationMode mode) {
  if (predicted.size() != mask.size()) throw StructuralError("length_regulate: length mismatch");
  const std::size_t masked = mask.count();
  if (mode == RegulationMode::integer) {
    if (std::floor(target) != target) throw DomainError("length_regulate: integer target required");
    if (target < static_cast<double>(masked)) {
      throw InfeasibleTargetError("length_regulate: target " + std::to_string(static_cast<long long>(target)) +
                                  " frames < " + std::to_string(masked) + " masked phonemes");
    }
  }
  RegulationResult result;
  result.alpha = scaling_factor(predicted, mask, target);
  result.durations.assign(predicted.begin(), predicted.end());

  const auto idx = mask.masked_indices();
  std::vector<double> scaled(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) scaled[k] = predicted[idx[k]] * result.alpha;

  if (mode == RegulationMode::real) {
    for (std::size_t k = 0; k < idx.size(); ++k) result.durations[idx[k]] = scaled[k];
    return result;
  }
  const Frames apportioned = uniform_normalize_integer(scaled, static_cast<long long>(target));
  for (std::size_t k = 0; k < idx.size(); ++k) result.durations[idx[k]] = apportioned[k];
  return result;
}

Frames uniform_normalize_integer(std::span<const double> values, long long target) {
  const auto n = static_cast<long long>(values.size());
  if (n == 0) throw StructuralError("uniform_normalize_integer: empty input");
  if (target < n) {
    throw InfeasibleTargetError("uniform_normalize_integer: target " + std::to_string(target) +
                                " < " + std::to_string(n) + " entries");
  }
  const double sum = positive_sum(values, "uniform_normalize_integer");
  const double scale = static_cast<double>(target) / sum;

  std::vector<double> scaled(values.size());
  Frames out(values.size());
  long long assigned = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    scaled[i] = values[i] * scale;
    out[i] = std::max(1, static_cast<int>(std::floor(scaled[i])));
    assigned += out[i];
  }

  if (assigned < target) {
    std::vector<long long> remainder(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      remainder[i] = std::llround(std::max(0.0, scaled[i] - out[i]) * kRemainderResolution);
    }
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return remainder[a] > remainder[b];
    });
    // At most one unit per entry is ever needed: the deficit is the sum of
    // the remainders, each strictly below one.
    for (std::size_t k = 0; assigned < target; k = (k + 1) % order.size()) {
      ++out[order[k]];
      ++assigned;
    }
  } else {
    for (std::size_t i = values.size(); i-- > 0 && assigned > target;) {
      const long long take = std::min<long long>(out[i] - 1, assigned - target);
      out[i] -= static_cast<int>(take);
      assigned -= take;
    }
  }
  return out;
}

Frames uniform_normalize_integer_capped(std::span<const double> values, long long target,
                                        int max_value) {
  const auto n = static_cast<long long>(values.size());
  if (max_value < 1) throw DomainError("uniform_normalize_integer_capped: max_value must be >= 1");
  if (target > n * max_value) {
    throw InfeasibleTargetError("uniform_normalize_integer_capped: target " + std::to_string(target) +
                                " exceeds " + std::to_string(n) + " x " + std::to_string(max_value));
  }
  Frames out = uniform_normalize_integer(values, target);
  std::vector<bool> pinned(values.size(), false);
  // Pin entries over the cap and re-apportion the rest until nothing exceeds it.
  for (;;) {
    bool changed = false;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!pinned[i] && out[i] > max_value) {
        pinned[i] = true;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<double> free_values;
    std::vector<std::size_t> free_index;
    long long remaining = target;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (pinned[i]) {
        out[i] = max_value;
        remaining -= max_value;
      } else {
        free_values.push_back(values[i]);
        free_index.push_back(i);
      }
    }
    if (free_index.empty()) break;
    if (std::accumulate(free_values.begin(), free_values.end(), 0.0) <= 0.0) {
      std::fill(free_values.begin(), free_values.end(), 1.0);
    }
    const Frames sub = uniform_normalize_integer(free_values, remaining);
    for (std::size_t k = 0; k < free_index.size(); ++k) out[free_index[k]] = sub[k];
  }
  return out;
}

}  // namespace tdadur
