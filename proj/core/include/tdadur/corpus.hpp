#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tdadur/types.hpp"

namespace tdadur {

struct PhoneStats {
  double mu = 0.0;  // log-domain mean of the frame count
  double sigma = 0.3;

  friend bool operator==(const PhoneStats&, const PhoneStats&) = default;
};

// Synthetic alignment corpus with known per-phone log-normal durations.
// Utterances start and end with the silence phone; interior phones are
// drawn uniformly from the non-silence ids, with occasional pauses.
struct SyntheticSpec {
  int phone_vocab_size = 40;
  int silence_id = 0;
  // One entry per phone id; derived from `seed` when empty.
  std::vector<PhoneStats> phones;
  // Per-utterance speaking-rate factor exp(N(0, rate_sigma^2)).
  double rate_sigma = 0.1;
  int min_length = 12;
  int max_length = 40;
  double interior_silence_probability = 0.08;
  // Frames per second; metadata only.
  double frame_rate = 100.0;
  std::uint64_t seed = 1;

  void validate() const;
  std::vector<PhoneStats> resolved_phones() const;
};

SyntheticSpec parse_synthetic_spec(std::string_view json_text);
std::string format_synthetic_spec(const SyntheticSpec& spec);
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

struct AlignmentRecord {
  std::string id;
  std::vector<int> phones;
  Frames durations;
  // Written by prediction: which positions were generated, the requested
  // masked total, and the raw masked sum before length regulation.
  std::optional<std::vector<std::uint8_t>> mask;
  std::optional<long long> target;
  std::optional<double> pre_lr_sum;

  friend bool operator==(const AlignmentRecord&, const AlignmentRecord&) = default;
};

// Throws DomainError / StructuralError when lengths differ, the sequence is
// empty or a duration is below one frame.
void validate_record(const AlignmentRecord& record);

std::vector<AlignmentRecord> generate_corpus(const SyntheticSpec& spec, std::size_t n_utterances);

// JSON Lines: {"durations":[...],"id":"...","phones":[...]} per line, plus
// the optional "mask", "target" and "pre_lr_sum" fields.
std::string format_alignment(const AlignmentRecord& record);
AlignmentRecord parse_alignment(std::string_view line, std::size_t line_number);
std::vector<AlignmentRecord> read_alignments(const std::filesystem::path& path);
void write_alignments(const std::vector<AlignmentRecord>& records, const std::filesystem::path& path);

// Disjoint, exhaustive split with round(fraction * n) training records;
// each side keeps the input order.
std::pair<std::vector<AlignmentRecord>, std::vector<AlignmentRecord>> split_corpus(
    const std::vector<AlignmentRecord>& records, double train_fraction, std::uint64_t seed);

}  // namespace tdadur
