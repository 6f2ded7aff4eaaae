#pragma once

#include <cstdint>
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

inline constexpr double kSigmaMin = 1e-5;

struct FMSampleConfig {
  int nfe = 32;
  double guidance_strength = 0.7;
  int num_samples = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

// Velocity for every position given the full-length state (zeros at
// positions that are not being generated) and time t.
using FieldFn = std::function<std::vector<double>(std::span<const double> state, double t)>;

// x <- x + v(x, k/nfe) / nfe for k = 0..nfe-1, on the positions listed in
// `active` (all positions if empty).
std::vector<double> euler_integrate(const FieldFn& field, std::vector<double> x0, int nfe,
                                    std::span<const std::size_t> active = {});

// (1 + w) v_cond - w v_uncond; w == 0 returns the conditional field itself.
FieldFn guided_field(FieldFn conditional, FieldFn unconditional, double guidance_strength);

// Draws num_samples noise vectors on the masked positions, integrates the
// guided field from t = 0 to 1 and averages the endpoints in log domain.
// Returns linear-domain durations, >= 0 on masked positions and 0 elsewhere.
RealDurations fm_sample_fields(const FieldFn& conditional, const FieldFn& unconditional, const MaskSequence& mask,
                               const FMSampleConfig& config);

// Conditional field of a checkpoint for an utterance. The unconditional
// field is the same network with an all-zero context and target track.
FieldFn network_field(const nn::ModelCheckpoint& checkpoint, const PhonemeSequence& phonemes,
                      std::vector<double> log_context, std::vector<double> log_target);

RealDurations fm_sample(const PhonemeSequence& phonemes, const DurationContext& context,
                        const std::optional<TargetTrack>& target, Variant variant, const FMSampleConfig& config,
                        const nn::ModelCheckpoint& checkpoint);

struct FlowNoise {
  double t = 0.0;
  std::vector<double> x0;  // standard normal, one per position
};

FlowNoise draw_flow_noise(std::size_t n, Rng& rng);

// Conditional flow-matching loss with the path
//   x_t = (1 - (1 - sigma_min) t) x0 + t x1,   x1 = log(1 + truth)
// and target velocity x1 - (1 - sigma_min) x0, averaged over masked
// positions. `unconditional` zeroes the context and target-track inputs.
nn::Var fm_loss_graph(nn::ParamBinder& params, const nn::ModelCheckpoint& checkpoint, Variant variant,
                      const PhonemeSequence& phonemes, std::span<const int> truth, const MaskSequence& mask,
                      const FlowNoise& noise, bool unconditional);

// Draws noise and treats a fully masked example as the unconditional branch.
nn::Var fm_training_loss(nn::ParamBinder& params, const nn::ModelCheckpoint& checkpoint, Variant variant,
                         const PhonemeSequence& phonemes, std::span<const int> truth, const MaskSequence& mask,
                         Rng& rng);

double fm_training_step(std::span<const int> truth, const PhonemeSequence& phonemes, const MaskSequence& mask,
                        Variant variant, Rng& rng, const nn::ModelCheckpoint& checkpoint);

Prediction fm_predict_with_lr(const PhonemeSequence& phonemes, const DurationContext& context, long long target,
                              Variant variant, const FMSampleConfig& config, const nn::ModelCheckpoint& checkpoint);

}  // namespace tdadur
