#include "tdadur/regression.hpp"

#include <algorithm>
#include <cmath>

#include "tdadur/error.hpp"
#include "tdadur/regulator.hpp"

namespace tdadur {

namespace {

nn::Tensor column(std::span<const double> v) {
  return nn::Tensor({v.size(), 1}, std::vector<double>(v.begin(), v.end()));
}

nn::Tensor mask_column(const MaskSequence& mask) {
  nn::Tensor t(mask.size(), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) t[i] = mask[i] ? 1.0 : 0.0;
  return t;
}

}  // namespace

void check_variant_target(Variant variant, const std::optional<TargetTrack>& target) {
  if (variant == Variant::baseline && target) {
    throw StructuralError("baseline model does not accept a target track");
  }
  if (variant != Variant::baseline && !target) {
    throw StructuralError("total-duration-aware model requires a target track");
  }
}

RegressionGraph regression_graph(nn::ParamBinder& params, const nn::ModelCheckpoint& ck, Variant variant,
                                 const PhonemeSequence& phonemes, const DurationContext& context,
                                 const std::optional<TargetTrack>& target) {
  check_variant_target(variant, target);
  const std::size_t n = phonemes.size();
  if (context.size() != n || context.mask.size() != n) {
    throw StructuralError("regression_forward: context length does not match phonemes");
  }
  if (target && target->track.size() != n) {
    throw StructuralError("regression_forward: target track length does not match phonemes");
  }
  const auto log_ctx = log_transform(context.values);
  std::vector<double> log_tgt;
  nn::NetInputs in;
  in.phonemes = phonemes.tokens();
  in.context = log_ctx;
  if (target) {
    log_tgt = target_features(*target);
    in.target = log_tgt;
  }
  nn::Var y = nn::duration_net_forward(params, ck.config, ck.layout, in);
  nn::Tape& tape = params.tape();
  if (variant != Variant::tda_e2e) {
    return {y, nn::expm1_floor(y, 0.0)};
  }
  if (context.mask.count() == 0) throw DegenerateInputError("regression E2E: nothing masked");
  if (!(target->total > 0.0)) throw DomainError("regression E2E: target total must be positive");
  // Normalise the masked linear-domain outputs to the target inside the graph.
  nn::Var m = tape.constant(mask_column(context.mask));
  nn::Var keep = tape.constant([&] {
    nn::Tensor t = mask_column(context.mask);
    for (double& v : t.data()) v = 1.0 - v;
    return t;
  }());
  nn::Var u = nn::expm1_floor(y, kE2eFloor);
  nn::Var masked_total = nn::sum(nn::mul(u, m));
  nn::Var normalized = nn::scale(nn::mul_scalar(u, nn::reciprocal(masked_total)), target->total);
  nn::Var linear = nn::add(nn::mul(normalized, m), nn::mul(nn::expm1_floor(y, 0.0), keep));
  return {nn::log1p(linear), linear};
}

RealDurations regression_forward(const PhonemeSequence& phonemes, const DurationContext& context,
                                 const std::optional<TargetTrack>& target, Variant variant,
                                 const nn::ModelCheckpoint& checkpoint) {
  nn::Tape tape;
  nn::ParamBinder params(tape, checkpoint.params);
  const RegressionGraph g = regression_graph(params, checkpoint, variant, phonemes, context, target);
  const auto data = g.linear.value().data();
  return RealDurations(data.begin(), data.end());
}

nn::Var regression_loss(nn::Var log_pred, std::span<const int> truth, const MaskSequence& mask) {
  if (truth.size() != mask.size() || log_pred.rows() != mask.size()) {
    throw StructuralError("regression_loss: length mismatch");
  }
  const std::size_t count = mask.count();
  if (count == 0) throw DegenerateInputError("regression_loss: empty mask");
  nn::Tape& tape = *log_pred.tape();
  nn::Tensor log_truth(mask.size(), 1);
  nn::Tensor weights(mask.size(), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    log_truth[i] = log_transform(static_cast<double>(truth[i]));
    weights[i] = mask[i] ? 1.0 : 0.0;
  }
  nn::Var err = nn::sub(log_pred, tape.constant(std::move(log_truth)));
  nn::Var sq = nn::mul(nn::square(err), tape.constant(std::move(weights)));
  return nn::scale(nn::sum(sq), 1.0 / static_cast<double>(count));
}

double regression_loss(std::span<const double> log_pred, std::span<const int> truth, const MaskSequence& mask) {
  nn::Tape tape;
  nn::Var p = tape.constant(column(log_pred));
  return regression_loss(p, truth, mask).value()[0];
}

nn::Var regression_training_loss(nn::ParamBinder& params, const nn::ModelCheckpoint& checkpoint, Variant variant,
                                 const PhonemeSequence& phonemes, std::span<const int> truth,
                                 const MaskSequence& mask) {
  const DurationContext ctx = build_context(truth, mask);
  std::optional<TargetTrack> target;
  if (uses_target_track(variant)) {
    target = build_target_track(mask, static_cast<double>(masked_sum(truth, mask)));
  }
  const RegressionGraph g = regression_graph(params, checkpoint, variant, phonemes, ctx, target);
  return regression_loss(g.log_pred, truth, mask);
}

Prediction predict_with_lr(const PhonemeSequence& phonemes, const DurationContext& context, long long target,
                           Variant variant, const nn::ModelCheckpoint& checkpoint, bool final_lr) {
  const MaskSequence& mask = context.mask;
  if (target < static_cast<long long>(mask.count())) {
    throw InfeasibleTargetError("predict_with_lr: target " + std::to_string(target) + " frames < " +
                                std::to_string(mask.count()) + " masked phonemes");
  }
  std::optional<TargetTrack> track;
  if (uses_target_track(variant)) track = build_target_track(mask, static_cast<double>(target));
  RealDurations raw = regression_forward(phonemes, context, track, variant, checkpoint);
  if (!final_lr) {
    if (variant != Variant::tda_e2e) throw DomainError("predict_with_lr: only E2E models may skip final LR");
    Prediction out;
    out.pre_lr_sum = masked_sum(raw, mask);
    out.durations.resize(phonemes.size());
    for (std::size_t i = 0; i < phonemes.size(); ++i) {
      out.durations[i] = static_cast<int>(std::lround(context.values[i]));
    }
    out.raw = std::move(raw);
    for (std::size_t i : mask.masked_indices()) {
      out.durations[i] = std::max(1, static_cast<int>(std::lround(out.raw[i])));
    }
    return out;
  }
  return regulate_prediction(context, std::move(raw), target);
}

}  // namespace tdadur
