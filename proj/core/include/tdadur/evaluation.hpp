#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tdadur/corpus.hpp"
#include "tdadur/model.hpp"

namespace tdadur {

// Known prefix covering at most `prompt_frames` frames; everything after it
// is masked. At least one position is always masked.
MaskSequence prompt_mask(std::span<const int> durations, int prompt_frames);

// round(ground_truth_frames / rate); rate = ground truth / target.
long long rate_target(long long ground_truth_frames, double rate);

struct PredictRequest {
  double rate = 1.0;
  // Fixed masked total for every utterance instead of a rate.
  std::optional<long long> target_frames;
  int prompt_frames = 100;
  std::uint64_t seed = 0;
};

struct SkippedRecord {
  std::string id;
  std::string reason;
};

struct PredictReport {
  std::vector<AlignmentRecord> records;  // sorted by id
  std::vector<SkippedRecord> skipped;
};

// Records that already carry a mask keep it; others get the prompt mask.
// Utterance i uses Rng(mix(seed, i)) in input order, so output is
// independent of how the work is scheduled.
PredictReport predict_corpus(const DurationPredictor& predictor, const std::vector<AlignmentRecord>& references,
                             const PredictRequest& request, int phone_vocab);

struct UtteranceMetrics {
  std::string id;
  std::size_t masked = 0;
  long long target = 0;
  double total_duration_error = 0.0;
  std::optional<double> pre_lr_deviation;
};

struct EvalReport {
  std::vector<UtteranceMetrics> utterances;  // sorted by id
  double fdd = 0.0;                          // NaN when fewer than 2 samples
  double mean_total_duration_error = 0.0;
  std::optional<double> mean_pre_lr_deviation;
  std::vector<SkippedRecord> excluded;
};

// FDD compares masked non-silence durations of the matched utterances.
// Predictions without a mask are compared on every position; without a
// target the ground-truth masked sum is used.
EvalReport evaluate_predictions(const std::vector<AlignmentRecord>& references,
                                const std::vector<AlignmentRecord>& predictions, const std::set<int>& silence_ids);

// Mean over utterances of the masked squared error in log(1 + d) between the
// raw regression output and the ground truth, under prompt masks.
double regression_masked_mse(const nn::ModelCheckpoint& checkpoint, const std::vector<AlignmentRecord>& records,
                             int prompt_frames);

}  // namespace tdadur
