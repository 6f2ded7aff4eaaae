#pragma once

#include <optional>
#include <span>

#include "tdadur/model.hpp"
#include "tdadur/nnet/checkpoint.hpp"
#include "tdadur/nnet/tape.hpp"
#include "tdadur/types.hpp"

namespace tdadur {

// Floor applied to linear-domain outputs before the in-graph normalisation
// of the E2E variant, so the masked sum is never zero.
inline constexpr double kE2eFloor = 1e-3;

struct RegressionGraph {
  nn::Var log_pred;  // [n,1], log(1 + d) per position
  nn::Var linear;    // [n,1], d per position (normalised on masked positions for E2E)
};

// Baseline forbids a target track; tda and tda_e2e require one.
void check_variant_target(Variant variant, const std::optional<TargetTrack>& target);

RegressionGraph regression_graph(nn::ParamBinder& params, const nn::ModelCheckpoint& checkpoint, Variant variant,
                                 const PhonemeSequence& phonemes, const DurationContext& context,
                                 const std::optional<TargetTrack>& target);

// Linear-domain predictions for every position, >= 0.
RealDurations regression_forward(const PhonemeSequence& phonemes, const DurationContext& context,
                                 const std::optional<TargetTrack>& target, Variant variant,
                                 const nn::ModelCheckpoint& checkpoint);

// Mean over masked positions of (log_pred - log(1 + truth))^2.
nn::Var regression_loss(nn::Var log_pred, std::span<const int> truth, const MaskSequence& mask);
double regression_loss(std::span<const double> log_pred, std::span<const int> truth, const MaskSequence& mask);

nn::Var regression_training_loss(nn::ParamBinder& params, const nn::ModelCheckpoint& checkpoint, Variant variant,
                                 const PhonemeSequence& phonemes, std::span<const int> truth,
                                 const MaskSequence& mask);

// Forward pass followed by length regulation to exactly `target` frames on
// the masked positions. With final_lr == false (E2E only) masked outputs are
// rounded to at least one frame instead.
Prediction predict_with_lr(const PhonemeSequence& phonemes, const DurationContext& context, long long target,
                           Variant variant, const nn::ModelCheckpoint& checkpoint, bool final_lr = true);

}  // namespace tdadur
