#include "tdadur/model.hpp"

#include <algorithm>
#include <cmath>

#include "tdadur/error.hpp"
#include "tdadur/flowmatch.hpp"
#include "tdadur/maskgit.hpp"
#include "tdadur/regression.hpp"
#include "tdadur/regulator.hpp"

namespace tdadur {

void ModelSpec::validate() const {
  if (phone_vocab < 1) throw DomainError("ModelSpec: phone_vocab must be >= 1");
  if (family == Family::maskgit && max_duration < 2) throw DomainError("ModelSpec: max_duration must be >= 2");
  if (variant == Variant::tda_e2e && family != Family::regression) {
    throw DomainError("ModelSpec: the E2E variant exists for regression only");
  }
  net.validate();
}

std::string family_tag(Family family, Variant variant) {
  std::string f;
  switch (family) {
    case Family::regression: f = "regression"; break;
    case Family::flow_matching: f = "fm"; break;
    case Family::maskgit: f = "maskgit"; break;
  }
  std::string v;
  switch (variant) {
    case Variant::baseline: v = "baseline"; break;
    case Variant::tda: v = "tda"; break;
    case Variant::tda_e2e: v = "tda_e2e"; break;
  }
  return f + "/" + v;
}

void parse_family_tag(const std::string& tag, Family& family, Variant& variant) {
  const auto slash = tag.find('/');
  if (slash == std::string::npos) throw DomainError("unknown model family '" + tag + "'");
  const std::string f = tag.substr(0, slash);
  const std::string v = tag.substr(slash + 1);
  Family fam;
  if (f == "regression") {
    fam = Family::regression;
  } else if (f == "fm") {
    fam = Family::flow_matching;
  } else if (f == "maskgit") {
    fam = Family::maskgit;
  } else {
    throw DomainError("unknown model family '" + tag + "'");
  }
  Variant var;
  if (v == "baseline") {
    var = Variant::baseline;
  } else if (v == "tda") {
    var = Variant::tda;
  } else if (v == "tda_e2e" && fam == Family::regression) {
    var = Variant::tda_e2e;
  } else {
    throw DomainError("unknown model family '" + tag + "'");
  }
  family = fam;
  variant = var;
}

nn::NetLayout net_layout(const ModelSpec& spec) {
  nn::NetLayout l;
  l.phone_vocab = spec.phone_vocab;
  l.target_track = uses_target_track(spec.variant);
  switch (spec.family) {
    case Family::regression:
      l.output_dim = 1;
      break;
    case Family::flow_matching:
      l.noisy_state = true;
      l.time = true;
      l.output_dim = 1;
      break;
    case Family::maskgit: {
      const DurationVocab vocab{spec.max_duration};
      l.context = nn::ContextInput::tokens;
      l.context_vocab = vocab.input_size();
      l.output_dim = vocab.output_size();
      break;
    }
  }
  return l;
}

nn::ModelCheckpoint create_checkpoint(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  nn::ModelCheckpoint ck;
  ck.family = family_tag(spec.family, spec.variant);
  ck.config = spec.net;
  ck.layout = net_layout(spec);
  ck.meta.seed = seed;
  Rng rng(seed);
  ck.params = nn::init_parameters(ck.config, ck.layout, rng);
  return ck;
}

ModelSpec spec_from_checkpoint(const nn::ModelCheckpoint& ck) {
  ModelSpec spec;
  parse_family_tag(ck.family, spec.family, spec.variant);
  spec.phone_vocab = ck.layout.phone_vocab;
  spec.net = ck.config;
  if (spec.family == Family::maskgit) spec.max_duration = ck.layout.output_dim - 1;
  if (net_layout(spec) != ck.layout) {
    throw StructuralError("checkpoint layout does not match family '" + ck.family + "'");
  }
  return spec;
}

Prediction regulate_prediction(const DurationContext& context, RealDurations raw, long long target) {
  const MaskSequence& mask = context.mask;
  if (raw.size() != mask.size()) throw StructuralError("regulate_prediction: length mismatch");
  Prediction out;
  out.pre_lr_sum = masked_sum(raw, mask);
  out.durations.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out.durations[i] = static_cast<int>(std::lround(context.values[i]));

  // A network can collapse every masked output to zero; fall back to an
  // even split rather than failing the utterance.
  RealDurations masked_raw(raw.size(), 0.0);
  const bool collapsed = !(out.pre_lr_sum > 0.0);
  for (std::size_t i : mask.masked_indices()) masked_raw[i] = collapsed ? 1.0 : std::max(0.0, raw[i]);
  const RegulationResult r = length_regulate(masked_raw, mask, static_cast<double>(target));
  for (std::size_t i : mask.masked_indices()) out.durations[i] = static_cast<int>(std::lround(r.durations[i]));
  out.raw = std::move(raw);
  return out;
}

namespace {

class RegressionPredictor final : public DurationPredictor {
 public:
  RegressionPredictor(std::shared_ptr<const nn::ModelCheckpoint> ck, Variant variant, bool final_lr)
      : ck_(std::move(ck)), variant_(variant), final_lr_(final_lr) {}

  Prediction predict(const PhonemeSequence& phonemes, const DurationContext& context, long long target,
                     Rng&) const override {
    return predict_with_lr(phonemes, context, target, variant_, *ck_, final_lr_);
  }
  std::string tag() const override { return ck_->family; }

 private:
  std::shared_ptr<const nn::ModelCheckpoint> ck_;
  Variant variant_;
  bool final_lr_;
};

class FlowPredictor final : public DurationPredictor {
 public:
  FlowPredictor(std::shared_ptr<const nn::ModelCheckpoint> ck, Variant variant, const PredictOptions& o)
      : ck_(std::move(ck)), variant_(variant) {
    config_.nfe = o.nfe;
    config_.guidance_strength = o.guidance_strength;
    config_.num_samples = o.num_samples;
    config_.validate();
  }

  Prediction predict(const PhonemeSequence& phonemes, const DurationContext& context, long long target,
                     Rng& rng) const override {
    FMSampleConfig cfg = config_;
    cfg.seed = rng.next_u64();
    return fm_predict_with_lr(phonemes, context, target, variant_, cfg, *ck_);
  }
  std::string tag() const override { return ck_->family; }

 private:
  std::shared_ptr<const nn::ModelCheckpoint> ck_;
  Variant variant_;
  FMSampleConfig config_;
};

class MaskGitPredictor final : public DurationPredictor {
 public:
  MaskGitPredictor(std::shared_ptr<const nn::ModelCheckpoint> ck, Variant variant, const PredictOptions& o)
      : ck_(std::move(ck)), variant_(variant) {
    config_.steps = o.maskgit_steps;
    config_.sample_temperature = o.sample_temperature;
    config_.confidence_temperature = o.confidence_temperature;
    if (config_.steps < 1) throw DomainError("maskgit steps must be >= 1");
  }

  Prediction predict(const PhonemeSequence& phonemes, const DurationContext& context, long long target,
                     Rng& rng) const override {
    DecodeTrace trace;
    Prediction out;
    out.durations = maskgit_decode(phonemes, context, target, variant_, *ck_, config_, rng, &trace);
    out.raw = to_real(out.durations);
    // Every position is sampled unnormalised at the first step; that sum is
    // the closest analogue of a raw prediction before regulation.
    out.pre_lr_sum = trace.raw_sample_sums.empty() ? 0.0 : trace.raw_sample_sums.front();
    return out;
  }
  std::string tag() const override { return ck_->family; }

 private:
  std::shared_ptr<const nn::ModelCheckpoint> ck_;
  Variant variant_;
  MaskGitConfig config_;
};

}  // namespace

std::unique_ptr<DurationPredictor> make_predictor(std::shared_ptr<const nn::ModelCheckpoint> ck,
                                                  const PredictOptions& options) {
  if (!ck) throw StructuralError("make_predictor: null checkpoint");
  const ModelSpec spec = spec_from_checkpoint(*ck);
  nn::check_parameters(ck->params, ck->config, ck->layout);
  if (!options.final_lr && spec.variant != Variant::tda_e2e) {
    throw DomainError("only regression/tda_e2e models may skip the final length regulation");
  }
  switch (spec.family) {
    case Family::regression:
      return std::make_unique<RegressionPredictor>(std::move(ck), spec.variant, options.final_lr);
    case Family::flow_matching:
      return std::make_unique<FlowPredictor>(std::move(ck), spec.variant, options);
    case Family::maskgit:
      return std::make_unique<MaskGitPredictor>(std::move(ck), spec.variant, options);
  }
  throw StructuralError("make_predictor: unknown family");
}

nn::Var training_loss(nn::ParamBinder& params, const nn::ModelCheckpoint& ck, const ModelSpec& spec,
                      const PhonemeSequence& phonemes, std::span<const int> truth, const MaskSequence& mask,
                      Rng& rng) {
  switch (spec.family) {
    case Family::regression:
      return regression_training_loss(params, ck, spec.variant, phonemes, truth, mask);
    case Family::flow_matching:
      return fm_training_loss(params, ck, spec.variant, phonemes, truth, mask, rng);
    case Family::maskgit:
      return maskgit_training_loss(params, ck, spec.variant, phonemes, truth, mask);
  }
  throw StructuralError("training_loss: unknown family");
}

}  // namespace tdadur
