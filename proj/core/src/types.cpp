#include "tdadur/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tdadur/error.hpp"

namespace tdadur {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw StructuralError(std::string(what) + ": length mismatch (" + std::to_string(a) +
                          " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

PhonemeSequence::PhonemeSequence(std::vector<int> tokens, int vocab_size)
    : tokens_(std::move(tokens)), vocab_size_(vocab_size) {
  if (tokens_.empty()) throw StructuralError("PhonemeSequence: empty sequence");
  if (vocab_size_ <= 0) throw DomainError("PhonemeSequence: vocab_size must be positive");
  for (int t : tokens_) {
    if (t < 0 || t >= vocab_size_) {
      throw DomainError("PhonemeSequence: token " + std::to_string(t) + " outside [0, " +
                        std::to_string(vocab_size_) + ")");
    }
  }
}

MaskSequence::MaskSequence(std::vector<std::uint8_t> flags) : flags_(std::move(flags)) {
  if (flags_.empty()) throw StructuralError("MaskSequence: empty sequence");
  for (auto& f : flags_) f = f ? 1 : 0;
}

std::size_t MaskSequence::count() const {
  return static_cast<std::size_t>(std::count(flags_.begin(), flags_.end(), std::uint8_t{1}));
}

std::vector<std::size_t> MaskSequence::masked_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < flags_.size(); ++i) {
    if (flags_[i]) out.push_back(i);
  }
  return out;
}

DurationContext build_context(std::span<const double> durations, const MaskSequence& mask) {
  require_same_length(durations.size(), mask.size(), "build_context");
  DurationContext ctx{RealDurations(durations.begin(), durations.end()), mask};
  for (std::size_t i = 0; i < ctx.values.size(); ++i) {
    if (mask[i]) ctx.values[i] = 0.0;
  }
  return ctx;
}

DurationContext build_context(std::span<const int> durations, const MaskSequence& mask) {
  const auto real = to_real(durations);
  return build_context(std::span<const double>(real), mask);
}

TargetTrack build_target_track(const MaskSequence& mask, double total) {
  if (!(total >= 0.0) || !std::isfinite(total)) {
    throw DomainError("build_target_track: total must be a finite non-negative frame count");
  }
  TargetTrack t{total, RealDurations(mask.size(), 0.0)};
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) t.track[i] = total;
  }
  return t;
}

std::vector<double> target_features(const TargetTrack& target) {
  std::size_t count = 0;
  for (double v : target.track) count += v > 0.0 ? 1 : 0;
  std::vector<double> out(target.track.size(), 0.0);
  if (count == 0) return out;
  const double share = std::log1p(target.total / static_cast<double>(count));
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (target.track[i] > 0.0) out[i] = share;
  }
  return out;
}

double log_transform(double x) {
  if (!(x >= 0.0)) throw DomainError("log_transform: negative or NaN input");
  return std::log1p(x);
}

std::vector<double> log_transform(std::span<const double> xs) {
  std::vector<double> out(xs.size());
  std::transform(xs.begin(), xs.end(), out.begin(), [](double x) { return log_transform(x); });
  return out;
}

double inverse_log_transform(double y) { return std::expm1(y); }

std::vector<double> inverse_log_transform(std::span<const double> ys) {
  std::vector<double> out(ys.size());
  std::transform(ys.begin(), ys.end(), out.begin(), [](double y) { return std::expm1(y); });
  return out;
}

double masked_sum(std::span<const double> durations, const MaskSequence& mask) {
  require_same_length(durations.size(), mask.size(), "masked_sum");
  double sum = 0.0;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    if (mask[i]) sum += durations[i];
  }
  return sum;
}

long long masked_sum(std::span<const int> durations, const MaskSequence& mask) {
  require_same_length(durations.size(), mask.size(), "masked_sum");
  long long sum = 0;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    if (mask[i]) sum += durations[i];
  }
  return sum;
}

std::vector<double> to_real(std::span<const int> frames) {
  return std::vector<double>(frames.begin(), frames.end());
}

}  // namespace tdadur
