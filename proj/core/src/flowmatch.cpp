#include "tdadur/flowmatch.hpp"

#include <algorithm>
#include <cmath>

#include "tdadur/error.hpp"
#include "tdadur/regression.hpp"

namespace tdadur {

namespace {

nn::Tensor mask_weights(const MaskSequence& mask) {
  nn::Tensor w(mask.size(), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) w[i] = mask[i] ? 1.0 : 0.0;
  return w;
}

std::vector<double> target_inputs_or_zero(const std::optional<TargetTrack>& target, std::size_t n) {
  return target ? target_features(*target) : std::vector<double>(n, 0.0);
}

}  // namespace

void FMSampleConfig::validate() const {
  if (nfe < 1) throw DomainError("FMSampleConfig: nfe must be >= 1");
  if (!(guidance_strength >= 0.0)) throw DomainError("FMSampleConfig: guidance_strength must be >= 0");
  if (num_samples < 1) throw DomainError("FMSampleConfig: num_samples must be >= 1");
}

std::vector<double> euler_integrate(const FieldFn& field, std::vector<double> x, int nfe,
                                    std::span<const std::size_t> active) {
  if (nfe < 1) throw DomainError("euler_integrate: nfe must be >= 1");
  const double dt = 1.0 / static_cast<double>(nfe);
  for (int k = 0; k < nfe; ++k) {
    const std::vector<double> v = field(x, static_cast<double>(k) * dt);
    if (v.size() != x.size()) throw StructuralError("euler_integrate: field returned wrong length");
    if (active.empty()) {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += dt * v[i];
    } else {
      for (std::size_t i : active) x[i] += dt * v[i];
    }
  }
  return x;
}

FieldFn guided_field(FieldFn conditional, FieldFn unconditional, double w) {
  if (w == 0.0) return conditional;
  return [cond = std::move(conditional), uncond = std::move(unconditional), w](std::span<const double> x, double t) {
    std::vector<double> vc = cond(x, t);
    const std::vector<double> vu = uncond(x, t);
    for (std::size_t i = 0; i < vc.size(); ++i) vc[i] = (1.0 + w) * vc[i] - w * vu[i];
    return vc;
  };
}

RealDurations fm_sample_fields(const FieldFn& conditional, const FieldFn& unconditional, const MaskSequence& mask,
                               const FMSampleConfig& config) {
  config.validate();
  const std::size_t n = mask.size();
  const auto active = mask.masked_indices();
  const FieldFn field = guided_field(conditional, unconditional, config.guidance_strength);
  std::vector<double> mean_log(n, 0.0);
  for (int s = 0; s < config.num_samples; ++s) {
    Rng rng(Rng::mix(config.seed, static_cast<std::uint64_t>(s)));
    std::vector<double> x0(n, 0.0);
    for (std::size_t i : active) x0[i] = rng.normal();
    const std::vector<double> x1 = euler_integrate(field, std::move(x0), config.nfe, active);
    for (std::size_t i : active) mean_log[i] += x1[i];
  }
  RealDurations out(n, 0.0);
  for (std::size_t i : active) {
    out[i] = std::max(0.0, inverse_log_transform(mean_log[i] / static_cast<double>(config.num_samples)));
  }
  return out;
}

FieldFn network_field(const nn::ModelCheckpoint& checkpoint, const PhonemeSequence& phonemes,
                      std::vector<double> log_context, std::vector<double> log_target) {
  return [&checkpoint, phonemes, ctx = std::move(log_context), tgt = std::move(log_target)](
             std::span<const double> x, double t) {
    nn::Tape tape;
    nn::ParamBinder params(tape, checkpoint.params);
    nn::NetInputs in;
    in.phonemes = phonemes.tokens();
    in.context = ctx;
    if (checkpoint.layout.target_track) in.target = tgt;
    in.noisy = x;
    in.time = t;
    const nn::Var v = nn::duration_net_forward(params, checkpoint.config, checkpoint.layout, in);
    const auto data = v.value().data();
    return std::vector<double>(data.begin(), data.end());
  };
}

RealDurations fm_sample(const PhonemeSequence& phonemes, const DurationContext& context,
                        const std::optional<TargetTrack>& target, Variant variant, const FMSampleConfig& config,
                        const nn::ModelCheckpoint& checkpoint) {
  check_variant_target(variant, target);
  const std::size_t n = phonemes.size();
  if (context.size() != n) throw StructuralError("fm_sample: context length does not match phonemes");
  const FieldFn cond =
      network_field(checkpoint, phonemes, log_transform(context.values), target_inputs_or_zero(target, n));
  const FieldFn uncond =
      network_field(checkpoint, phonemes, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0));
  return fm_sample_fields(cond, uncond, context.mask, config);
}

FlowNoise draw_flow_noise(std::size_t n, Rng& rng) {
  FlowNoise noise;
  noise.t = rng.uniform();
  noise.x0.resize(n);
  for (double& v : noise.x0) v = rng.normal();
  return noise;
}

nn::Var fm_loss_graph(nn::ParamBinder& params, const nn::ModelCheckpoint& checkpoint, Variant variant,
                      const PhonemeSequence& phonemes, std::span<const int> truth, const MaskSequence& mask,
                      const FlowNoise& noise, bool unconditional) {
  const std::size_t n = phonemes.size();
  if (truth.size() != n || mask.size() != n || noise.x0.size() != n) {
    throw StructuralError("fm_loss: length mismatch");
  }
  const std::size_t count = mask.count();
  if (count == 0) throw DegenerateInputError("fm_loss: empty mask");

  std::vector<double> log_ctx(n, 0.0), log_tgt(n, 0.0), state(n, 0.0);
  nn::Tensor velocity(n, 1);
  const double share = log_transform(static_cast<double>(masked_sum(truth, mask)) / static_cast<double>(count));
  for (std::size_t i = 0; i < n; ++i) {
    const double x1 = log_transform(static_cast<double>(truth[i]));
    if (mask[i]) {
      state[i] = (1.0 - (1.0 - kSigmaMin) * noise.t) * noise.x0[i] + noise.t * x1;
      velocity[i] = x1 - (1.0 - kSigmaMin) * noise.x0[i];
      if (uses_target_track(variant) && !unconditional) log_tgt[i] = share;
    } else if (!unconditional) {
      log_ctx[i] = x1;
    }
  }
  nn::NetInputs in;
  in.phonemes = phonemes.tokens();
  in.context = log_ctx;
  if (checkpoint.layout.target_track) in.target = log_tgt;
  in.noisy = state;
  in.time = noise.t;
  nn::Tape& tape = params.tape();
  const nn::Var v = nn::duration_net_forward(params, checkpoint.config, checkpoint.layout, in);
  const nn::Var err = nn::sub(v, tape.constant(std::move(velocity)));
  const nn::Var sq = nn::mul(nn::square(err), tape.constant(mask_weights(mask)));
  return nn::scale(nn::sum(sq), 1.0 / static_cast<double>(count));
}

nn::Var fm_training_loss(nn::ParamBinder& params, const nn::ModelCheckpoint& checkpoint, Variant variant,
                         const PhonemeSequence& phonemes, std::span<const int> truth, const MaskSequence& mask,
                         Rng& rng) {
  const FlowNoise noise = draw_flow_noise(phonemes.size(), rng);
  return fm_loss_graph(params, checkpoint, variant, phonemes, truth, mask, noise, mask.all_masked());
}

double fm_training_step(std::span<const int> truth, const PhonemeSequence& phonemes, const MaskSequence& mask,
                        Variant variant, Rng& rng, const nn::ModelCheckpoint& checkpoint) {
  nn::Tape tape;
  nn::ParamBinder params(tape, checkpoint.params);
  return fm_training_loss(params, checkpoint, variant, phonemes, truth, mask, rng).value()[0];
}

Prediction fm_predict_with_lr(const PhonemeSequence& phonemes, const DurationContext& context, long long target,
                              Variant variant, const FMSampleConfig& config, const nn::ModelCheckpoint& checkpoint) {
  const MaskSequence& mask = context.mask;
  if (target < static_cast<long long>(mask.count())) {
    throw InfeasibleTargetError("fm_predict_with_lr: target " + std::to_string(target) + " frames < " +
                                std::to_string(mask.count()) + " masked phonemes");
  }
  std::optional<TargetTrack> track;
  if (uses_target_track(variant)) track = build_target_track(mask, static_cast<double>(target));
  RealDurations raw = fm_sample(phonemes, context, track, variant, config, checkpoint);
  return regulate_prediction(context, std::move(raw), target);
}

}  // namespace tdadur
