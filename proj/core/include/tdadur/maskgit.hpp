#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "tdadur/model.hpp"
#include "tdadur/nnet/checkpoint.hpp"
#include "tdadur/nnet/tape.hpp"
#include "tdadur/rng.hpp"
#include "tdadur/types.hpp"

namespace tdadur {

// Tokens 0..max_duration are frame counts; max_duration + 1 is MASK.
struct DurationVocab {
  int max_duration = 256;

  int mask_token() const { return max_duration + 1; }
  int input_size() const { return max_duration + 2; }
  int output_size() const { return max_duration + 1; }
  // Clamps into [1, max_duration].
  int token(int frames) const;
};

struct MaskGitConfig {
  int steps = 8;
  double sample_temperature = 1.0;
  double confidence_temperature = 4.5;
};

// State visible to the logits function at one decoding step.
struct DecodeState {
  int step = 1;  // 1-based
  int total_steps = 1;
  DurationContext context;  // filled values are final; mask is the current M^t
  long long remaining_target = 0;
};

// Per-position logits over output tokens, [n, max_duration + 1].
using LogitsFn = std::function<nn::Tensor(const DecodeState& state)>;

struct DecodeTrace {
  std::vector<std::size_t> masked_after_step;
  std::vector<long long> remaining_after_step;
  // Unnormalised masked sum of the samples drawn at each step.
  std::vector<double> raw_sample_sums;
  int steps_run = 0;
};

// Positions that stay masked after step t of T when N0 started masked and
// `current` are still masked: floor(gamma(t/T) N0), forced to fill at least
// one position and to leave none at t = T.
std::size_t masked_after_step(int t, int total_steps, std::size_t initial, std::size_t current);

struct ConfidentSample {
  Frames tokens;                   // 0 at unmasked positions
  std::vector<double> confidence;  // -inf at unmasked positions
};

// Samples a token in 1..V-1 per masked position from softmax(logits / T_s)
// (argmax when T_s <= 0); confidence is its log-probability plus
// gumbel_scale * Gumbel noise.
ConfidentSample sample_with_confidence(const nn::Tensor& logits, const MaskSequence& mask,
                                       double sample_temperature, double gumbel_scale, Rng& rng);

// Iterative decoding: sample every masked position, normalise the samples
// to the remaining target, commit the most confident ones, subtract them
// from the target and repeat. Returns durations for every position with the
// masked ones summing to `target`.
Frames maskgit_decode(const LogitsFn& logits, const DurationContext& context, long long target,
                      const MaskGitConfig& config, const DurationVocab& vocab, Rng& rng,
                      DecodeTrace* trace = nullptr);

// Network-backed LogitsFn for a checkpoint; baseline models never see the
// target track.
LogitsFn network_logits(const nn::ModelCheckpoint& checkpoint, Variant variant, const PhonemeSequence& phonemes);

Frames maskgit_decode(const PhonemeSequence& phonemes, const DurationContext& context, long long target,
                      Variant variant, const nn::ModelCheckpoint& checkpoint, const MaskGitConfig& config,
                      Rng& rng, DecodeTrace* trace = nullptr);

// Context tokens: duration token where known, MASK where masked.
std::vector<int> context_tokens(std::span<const int> durations, const MaskSequence& mask, const DurationVocab& vocab);

nn::Var maskgit_logits_graph(nn::ParamBinder& params, const nn::ModelCheckpoint& checkpoint, Variant variant,
                             const PhonemeSequence& phonemes, std::span<const int> tokens,
                             const std::optional<TargetTrack>& target);

// Mean over masked positions of -log p(true token).
nn::Var masked_cross_entropy(nn::Var logits, std::span<const int> truth_tokens, const MaskSequence& mask);

nn::Var maskgit_training_loss(nn::ParamBinder& params, const nn::ModelCheckpoint& checkpoint, Variant variant,
                              const PhonemeSequence& phonemes, std::span<const int> truth, const MaskSequence& mask);

double maskgit_training_step(std::span<const int> truth, const PhonemeSequence& phonemes, const MaskSequence& mask,
                             Variant variant, const nn::ModelCheckpoint& checkpoint);

}  // namespace tdadur
