#include "tdadur/maskgit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tdadur/error.hpp"
#include "tdadur/log.hpp"
#include "tdadur/masking.hpp"
#include "tdadur/regression.hpp"
#include "tdadur/regulator.hpp"

namespace tdadur {

int DurationVocab::token(int frames) const { return std::clamp(frames, 1, max_duration); }

std::size_t masked_after_step(int t, int total_steps, std::size_t initial, std::size_t current) {
  if (total_steps < 1 || t < 1) throw DomainError("masked_after_step: steps must be >= 1");
  if (t >= total_steps || current == 0) return 0;
  const double gamma = cosine_schedule(static_cast<double>(t) / static_cast<double>(total_steps));
  const auto scheduled = static_cast<std::size_t>(std::floor(gamma * static_cast<double>(initial) + 1e-9));
  return std::min(scheduled, current - 1);
}

ConfidentSample sample_with_confidence(const nn::Tensor& logits, const MaskSequence& mask,
                                       double sample_temperature, double gumbel_scale, Rng& rng) {
  if (logits.rows() != mask.size()) throw StructuralError("sample_with_confidence: logits rows != mask length");
  const std::size_t vocab = logits.cols();
  if (vocab < 2) throw StructuralError("sample_with_confidence: need at least one duration token");
  ConfidentSample out{Frames(mask.size(), 0),
                      std::vector<double>(mask.size(), -std::numeric_limits<double>::infinity())};
  std::vector<double> logp(vocab - 1);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    auto row = logits.row(i);
    // Token 0 (zero frames) is never a valid duration.
    const double temp = sample_temperature > 0.0 ? sample_temperature : 1.0;
    for (std::size_t k = 1; k < vocab; ++k) {
      if (std::isnan(row[k]) || row[k] == std::numeric_limits<double>::infinity()) {
        throw DomainError("sample_with_confidence: logits must be finite or -inf");
      }
      logp[k - 1] = row[k] / temp;
    }
    const double mx = *std::max_element(logp.begin(), logp.end());
    double z = 0.0;
    for (double v : logp) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (double& v : logp) v -= lse;

    std::size_t chosen = 0;
    if (sample_temperature <= 0.0) {
      chosen = static_cast<std::size_t>(std::max_element(logp.begin(), logp.end()) - logp.begin());
    } else {
      double u = rng.uniform();
      chosen = logp.size() - 1;
      for (std::size_t k = 0; k < logp.size(); ++k) {
        u -= std::exp(logp[k]);
        if (u < 0.0) {
          chosen = k;
          break;
        }
      }
    }
    out.tokens[i] = static_cast<int>(chosen + 1);
    out.confidence[i] = logp[chosen];
    if (gumbel_scale > 0.0) out.confidence[i] += gumbel_scale * rng.gumbel();
  }
  return out;
}

Frames maskgit_decode(const LogitsFn& logits_fn, const DurationContext& context, long long target,
                      const MaskGitConfig& config, const DurationVocab& vocab, Rng& rng, DecodeTrace* trace) {
  if (config.steps < 1) throw DomainError("maskgit_decode: steps must be >= 1");
  const std::size_t initial = context.mask.count();
  if (initial == 0) throw DegenerateInputError("maskgit_decode: nothing to predict");
  if (target < static_cast<long long>(initial)) {
    throw InfeasibleTargetError("maskgit_decode: target " + std::to_string(target) + " frames < " +
                                std::to_string(initial) + " masked phonemes");
  }
  if (target > static_cast<long long>(initial) * vocab.max_duration) {
    throw InfeasibleTargetError("maskgit_decode: target " + std::to_string(target) + " exceeds " +
                                std::to_string(initial) + " x max_duration " + std::to_string(vocab.max_duration));
  }

  DecodeState state{1, config.steps, context, target};
  if (trace) *trace = DecodeTrace{};
  for (int t = 1; t <= config.steps; ++t) {
    const std::size_t current = state.context.mask.count();
    if (current == 0) break;
    state.step = t;
    const nn::Tensor logits = logits_fn(state);
    const double anneal = config.confidence_temperature *
                          (1.0 - static_cast<double>(t) / static_cast<double>(config.steps));
    const ConfidentSample sample =
        sample_with_confidence(logits, state.context.mask, config.sample_temperature, anneal, rng);

    const auto masked = state.context.mask.masked_indices();
    std::vector<double> sampled(masked.size());
    for (std::size_t k = 0; k < masked.size(); ++k) sampled[k] = sample.tokens[masked[k]];
    const double raw_sum = std::accumulate(sampled.begin(), sampled.end(), 0.0);
    const Frames normalized = uniform_normalize_integer_capped(sampled, state.remaining_target, vocab.max_duration);

    const std::size_t keep_masked = masked_after_step(t, config.steps, initial, current);
    const std::size_t fill = current - keep_masked;
    std::vector<std::size_t> order(masked.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return sample.confidence[masked[a]] > sample.confidence[masked[b]];
    });
    for (std::size_t r = 0; r < fill; ++r) {
      const std::size_t k = order[r];
      const std::size_t pos = masked[k];
      state.context.values[pos] = normalized[k];
      state.context.mask.set(pos, false);
      state.remaining_target -= normalized[k];
    }
    if (trace) {
      trace->masked_after_step.push_back(state.context.mask.count());
      trace->remaining_after_step.push_back(state.remaining_target);
      trace->raw_sample_sums.push_back(raw_sum);
      trace->steps_run = t;
    }
  }
  if (state.context.mask.count() != 0 || state.remaining_target != 0) {
    throw Error("maskgit_decode: decoding ended with unfilled positions");
  }
  Frames out(context.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(std::lround(state.context.values[i]));
  return out;
}

std::vector<int> context_tokens(std::span<const int> durations, const MaskSequence& mask, const DurationVocab& vocab) {
  if (durations.size() != mask.size()) throw StructuralError("context_tokens: length mismatch");
  std::vector<int> tokens(durations.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    tokens[i] = mask[i] ? vocab.mask_token() : vocab.token(durations[i]);
  }
  return tokens;
}

namespace {

DurationVocab vocab_of(const nn::ModelCheckpoint& ck) {
  if (ck.layout.context != nn::ContextInput::tokens) throw StructuralError("checkpoint is not a MaskGIT model");
  return DurationVocab{ck.layout.output_dim - 1};
}

}  // namespace

nn::Var maskgit_logits_graph(nn::ParamBinder& params, const nn::ModelCheckpoint& ck, Variant variant,
                             const PhonemeSequence& phonemes, std::span<const int> tokens,
                             const std::optional<TargetTrack>& target) {
  check_variant_target(variant, target);
  if (tokens.size() != phonemes.size()) throw StructuralError("maskgit: token count does not match phonemes");
  std::vector<double> log_tgt;
  nn::NetInputs in;
  in.phonemes = phonemes.tokens();
  in.context_tokens = tokens;
  if (target) {
    if (target->track.size() != phonemes.size()) throw StructuralError("maskgit: target track length mismatch");
    log_tgt = target_features(*target);
    in.target = log_tgt;
  }
  return nn::duration_net_forward(params, ck.config, ck.layout, in);
}

LogitsFn network_logits(const nn::ModelCheckpoint& checkpoint, Variant variant, const PhonemeSequence& phonemes) {
  const DurationVocab vocab = vocab_of(checkpoint);
  return [&checkpoint, variant, phonemes, vocab](const DecodeState& state) {
    std::vector<int> frames(state.context.size());
    for (std::size_t i = 0; i < frames.size(); ++i) frames[i] = static_cast<int>(std::lround(state.context.values[i]));
    const auto tokens = context_tokens(frames, state.context.mask, vocab);
    std::optional<TargetTrack> target;
    if (uses_target_track(variant)) {
      target = build_target_track(state.context.mask, static_cast<double>(state.remaining_target));
    }
    nn::Tape tape;
    nn::ParamBinder params(tape, checkpoint.params);
    return maskgit_logits_graph(params, checkpoint, variant, phonemes, tokens, target).value();
  };
}

Frames maskgit_decode(const PhonemeSequence& phonemes, const DurationContext& context, long long target,
                      Variant variant, const nn::ModelCheckpoint& checkpoint, const MaskGitConfig& config,
                      Rng& rng, DecodeTrace* trace) {
  if (context.size() != phonemes.size()) throw StructuralError("maskgit_decode: context length mismatch");
  return maskgit_decode(network_logits(checkpoint, variant, phonemes), context, target, config,
                        vocab_of(checkpoint), rng, trace);
}

nn::Var masked_cross_entropy(nn::Var logits, std::span<const int> truth_tokens, const MaskSequence& mask) {
  if (truth_tokens.size() != mask.size() || logits.rows() != mask.size()) {
    throw StructuralError("masked_cross_entropy: length mismatch");
  }
  const std::size_t count = mask.count();
  if (count == 0) throw DegenerateInputError("masked_cross_entropy: empty mask");
  std::vector<double> weights(mask.size(), 0.0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) weights[i] = 1.0 / static_cast<double>(count);
  }
  return nn::cross_entropy_rows(logits, truth_tokens, weights);
}

nn::Var maskgit_training_loss(nn::ParamBinder& params, const nn::ModelCheckpoint& checkpoint, Variant variant,
                              const PhonemeSequence& phonemes, std::span<const int> truth, const MaskSequence& mask) {
  const DurationVocab vocab = vocab_of(checkpoint);
  std::vector<int> truth_tokens(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] > vocab.max_duration) {
      warn("maskgit: duration " + std::to_string(truth[i]) + " clamped to max_duration " +
           std::to_string(vocab.max_duration));
    }
    truth_tokens[i] = vocab.token(truth[i]);
  }
  const auto tokens = context_tokens(truth, mask, vocab);
  std::optional<TargetTrack> target;
  if (uses_target_track(variant)) target = build_target_track(mask, static_cast<double>(masked_sum(truth, mask)));
  const nn::Var logits = maskgit_logits_graph(params, checkpoint, variant, phonemes, tokens, target);
  return masked_cross_entropy(logits, truth_tokens, mask);
}

double maskgit_training_step(std::span<const int> truth, const PhonemeSequence& phonemes, const MaskSequence& mask,
                             Variant variant, const nn::ModelCheckpoint& checkpoint) {
  nn::Tape tape;
  nn::ParamBinder params(tape, checkpoint.params);
  return maskgit_training_loss(params, checkpoint, variant, phonemes, truth, mask).value()[0];
}

}  // namespace tdadur
