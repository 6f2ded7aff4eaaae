#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tdadur {

// Integer frame counts: ground truth, regulated outputs, MaskGIT tokens.
using Frames = std::vector<int>;
// Real-valued per-phoneme durations in frames: raw model outputs.
using RealDurations = std::vector<double>;

// Phoneme ids for one utterance. Never empty.
class PhonemeSequence {
 public:
  PhonemeSequence(std::vector<int> tokens, int vocab_size);

  std::size_t size() const { return tokens_.size(); }
  int vocab_size() const { return vocab_size_; }
  std::span<const int> tokens() const { return tokens_; }
  int operator[](std::size_t i) const { return tokens_[i]; }

 private:
  std::vector<int> tokens_;
  int vocab_size_;
};

// flags[n] == 1 marks a duration to predict, 0 a known context duration.
class MaskSequence {
 public:
  MaskSequence() = default;
  explicit MaskSequence(std::vector<std::uint8_t> flags);
  static MaskSequence all(std::size_t n) { return MaskSequence(std::vector<std::uint8_t>(n, 1)); }
  static MaskSequence none(std::size_t n) { return MaskSequence(std::vector<std::uint8_t>(n, 0)); }

  std::size_t size() const { return flags_.size(); }
  bool masked(std::size_t i) const { return flags_[i] != 0; }
  bool operator[](std::size_t i) const { return masked(i); }
  std::size_t count() const;
  bool all_masked() const { return count() == size(); }
  std::span<const std::uint8_t> flags() const { return flags_; }
  std::vector<std::size_t> masked_indices() const;

  void set(std::size_t i, bool value) { flags_[i] = value ? 1 : 0; }

  friend bool operator==(const MaskSequence&, const MaskSequence&) = default;

 private:
  std::vector<std::uint8_t> flags_;
};

// Known durations where the mask is clear, zero where it is set.
struct DurationContext {
  RealDurations values;
  MaskSequence mask;

  std::size_t size() const { return values.size(); }
};

// Per-position conditioning track: total where masked, zero elsewhere.
struct TargetTrack {
  double total = 0.0;
  RealDurations track;
};

DurationContext build_context(std::span<const double> durations, const MaskSequence& mask);
DurationContext build_context(std::span<const int> durations, const MaskSequence& mask);

TargetTrack build_target_track(const MaskSequence& mask, double total);

// Network input for a target track: log(1 + total / masked count) on the
// masked positions, zero elsewhere. Conditioning on the per-phoneme share
// keeps the input on the scale of the durations themselves.
std::vector<double> target_features(const TargetTrack& target);

// log(1 + x); the +1 keeps the zeros of an unknown context representable.
double log_transform(double x);
std::vector<double> log_transform(std::span<const double> xs);
double inverse_log_transform(double y);
std::vector<double> inverse_log_transform(std::span<const double> ys);

double masked_sum(std::span<const double> durations, const MaskSequence& mask);
long long masked_sum(std::span<const int> durations, const MaskSequence& mask);

std::vector<double> to_real(std::span<const int> frames);

}  // namespace tdadur
