#include "tdadur/trainer.hpp"

#include <cmath>

#include "tdadur/error.hpp"
#include "tdadur/nnet/adam.hpp"

namespace tdadur {

namespace {

struct Example {
  PhonemeSequence phonemes;
  const Frames* truth;
};

std::vector<Example> prepare(const std::vector<AlignmentRecord>& corpus, int phone_vocab) {
  std::vector<Example> out;
  out.reserve(corpus.size());
  for (const auto& r : corpus) {
    validate_record(r);
    out.push_back({PhonemeSequence(r.phones, phone_vocab), &r.durations});
  }
  return out;
}

double clip_gradients(nn::GradientSet& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (double v : g.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [name, g] : grads) {
      for (double& v : g.data()) v *= s;
    }
  }
  return norm;
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 0) throw DomainError("train: steps must be >= 0");
  if (batch_size < 1) throw DomainError("train: batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw DomainError("train: learning_rate must be > 0");
  if (!(clip_norm >= 0.0)) throw DomainError("train: clip_norm must be >= 0");
  if (log_every < 1) throw DomainError("train: log_every must be >= 1");
  policy.validate();
}

std::vector<TrainLogRow> train(nn::ModelCheckpoint& ck, const std::vector<AlignmentRecord>& corpus,
                               const TrainConfig& config, const TrainLogFn& on_log) {
  config.validate();
  if (corpus.empty()) throw DegenerateInputError("train: empty corpus");
  const ModelSpec spec = spec_from_checkpoint(ck);
  nn::check_parameters(ck.params, ck.config, ck.layout);
  if (ck.meta.steps > config.steps) {
    throw DomainError("train: checkpoint is already at step " + std::to_string(ck.meta.steps) +
                      ", past the requested " + std::to_string(config.steps));
  }
  const auto examples = prepare(corpus, spec.phone_vocab);
  if (!ck.optimizer) ck.optimizer = nn::AdamState{};
  ck.meta.seed = config.seed;

  std::vector<TrainLogRow> log;
  for (std::int64_t step = ck.meta.steps + 1; step <= config.steps; ++step) {
    Rng rng(Rng::mix(config.seed, static_cast<std::uint64_t>(step)));
    nn::GradientSet grads = nn::zero_gradients(ck.params);
    double loss = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      const Example& ex = examples[static_cast<std::size_t>(rng.below(examples.size()))];
      const MaskSequence mask = sample_training_mask(ex.phonemes.size(), config.policy, rng);
      nn::Tape tape;
      nn::ParamBinder binder(tape, ck.params, &grads);
      nn::Var l = training_loss(binder, ck, spec, ex.phonemes, *ex.truth, mask, rng);
      l = nn::scale(l, 1.0 / config.batch_size);
      loss += l.value()[0];
      tape.backward(l);
    }
    if (!std::isfinite(loss)) throw Error("train: loss became non-finite at step " + std::to_string(step));
    clip_gradients(grads, config.clip_norm);
    nn::adam_step(ck.params, grads, *ck.optimizer, config.learning_rate, true);
    ck.meta.steps = step;
    if (step == 1 || step % config.log_every == 0 || step == config.steps) {
      log.push_back({step, loss});
      if (on_log) on_log(log.back());
    }
  }
  return log;
}

double batch_loss(const nn::ModelCheckpoint& ck, const std::vector<AlignmentRecord>& corpus,
                  const std::vector<std::size_t>& indices, const MaskPolicy& policy, std::uint64_t seed) {
  if (indices.empty()) throw DegenerateInputError("batch_loss: no examples");
  const ModelSpec spec = spec_from_checkpoint(ck);
  Rng rng(seed);
  double total = 0.0;
  for (std::size_t i : indices) {
    const AlignmentRecord& r = corpus.at(i);
    const PhonemeSequence phonemes(r.phones, spec.phone_vocab);
    const MaskSequence mask = sample_training_mask(phonemes.size(), policy, rng);
    nn::Tape tape;
    nn::ParamBinder binder(tape, ck.params);
    total += training_loss(binder, ck, spec, phonemes, r.durations, mask, rng).value()[0];
  }
  return total / static_cast<double>(indices.size());
}

}  // namespace tdadur
