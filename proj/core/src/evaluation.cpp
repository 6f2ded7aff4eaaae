#include "tdadur/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "tdadur/error.hpp"
#include "tdadur/metrics.hpp"
#include "tdadur/regression.hpp"

namespace tdadur {

MaskSequence prompt_mask(std::span<const int> durations, int prompt_frames) {
  if (durations.empty()) throw StructuralError("prompt_mask: empty sequence");
  if (prompt_frames < 0) throw DomainError("prompt_mask: prompt_frames must be >= 0");
  std::vector<std::uint8_t> flags(durations.size(), 1);
  long long used = 0;
  for (std::size_t i = 0; i + 1 < durations.size(); ++i) {
    if (used + durations[i] > prompt_frames) break;
    used += durations[i];
    flags[i] = 0;
  }
  return MaskSequence(std::move(flags));
}

long long rate_target(long long ground_truth_frames, double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate)) throw DomainError("rate must be > 0");
  return std::llround(static_cast<double>(ground_truth_frames) / rate);
}

PredictReport predict_corpus(const DurationPredictor& predictor, const std::vector<AlignmentRecord>& references,
                             const PredictRequest& request, int phone_vocab) {
  if (!request.target_frames) rate_target(1, request.rate);
  PredictReport report;
  for (std::size_t u = 0; u < references.size(); ++u) {
    const AlignmentRecord& ref = references[u];
    try {
      validate_record(ref);
      const PhonemeSequence phonemes(ref.phones, phone_vocab);
      const MaskSequence mask = ref.mask ? MaskSequence(*ref.mask) : prompt_mask(ref.durations, request.prompt_frames);
      if (mask.count() == 0) throw DegenerateInputError("mask selects no positions");
      const long long truth_sum = masked_sum(std::span<const int>(ref.durations), mask);
      const long long target = request.target_frames ? *request.target_frames : rate_target(truth_sum, request.rate);
      const DurationContext ctx = build_context(std::span<const int>(ref.durations), mask);
      Rng rng(Rng::mix(request.seed, u));
      const Prediction p = predictor.predict(phonemes, ctx, target, rng);
      AlignmentRecord out;
      out.id = ref.id;
      out.phones = ref.phones;
      out.durations = p.durations;
      out.mask = std::vector<std::uint8_t>(mask.flags().begin(), mask.flags().end());
      out.target = target;
      out.pre_lr_sum = p.pre_lr_sum;
      report.records.push_back(std::move(out));
    } catch (const Error& e) {
      report.skipped.push_back({ref.id, e.what()});
    }
  }
  std::stable_sort(report.records.begin(), report.records.end(),
                   [](const AlignmentRecord& a, const AlignmentRecord& b) { return a.id < b.id; });
  return report;
}

EvalReport evaluate_predictions(const std::vector<AlignmentRecord>& references,
                                const std::vector<AlignmentRecord>& predictions, const std::set<int>& silence_ids) {
  std::map<std::string, const AlignmentRecord*> by_id;
  for (const auto& r : references) by_id.emplace(r.id, &r);
  std::map<std::string, const AlignmentRecord*> pred_by_id;
  for (const auto& p : predictions) pred_by_id.emplace(p.id, &p);

  EvalReport report;
  std::vector<double> reference_samples;
  std::vector<double> generated_samples;
  double tde_sum = 0.0;
  double pre_sum = 0.0;
  std::size_t pre_count = 0;

  for (const auto& [id, ref] : by_id) {
    if (!pred_by_id.count(id)) report.excluded.push_back({id, "missing from predictions"});
  }
  for (const auto& [id, pred] : pred_by_id) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      report.excluded.push_back({id, "missing from reference"});
      continue;
    }
    const AlignmentRecord& ref = *it->second;
    if (ref.phones != pred->phones) {
      report.excluded.push_back({id, "phoneme sequences differ"});
      continue;
    }
    const MaskSequence mask = pred->mask ? MaskSequence(*pred->mask) : MaskSequence::all(ref.phones.size());
    if (mask.count() == 0) {
      report.excluded.push_back({id, "no masked positions"});
      continue;
    }
    UtteranceMetrics m;
    m.id = id;
    m.masked = mask.count();
    m.target = pred->target ? *pred->target : masked_sum(std::span<const int>(ref.durations), mask);
    if (m.target <= 0) {
      report.excluded.push_back({id, "target must be > 0"});
      continue;
    }
    m.total_duration_error =
        total_duration_error(std::span<const int>(pred->durations), mask, static_cast<double>(m.target));
    if (pred->pre_lr_sum) {
      m.pre_lr_deviation = pre_lr_deviation(*pred->pre_lr_sum, static_cast<double>(m.target));
      pre_sum += *m.pre_lr_deviation;
      ++pre_count;
    }
    tde_sum += m.total_duration_error;
    for (std::size_t i : mask.masked_indices()) {
      if (silence_ids.count(ref.phones[i])) continue;
      reference_samples.push_back(ref.durations[i]);
      generated_samples.push_back(pred->durations[i]);
    }
    report.utterances.push_back(std::move(m));
  }
  std::sort(report.excluded.begin(), report.excluded.end(),
            [](const SkippedRecord& a, const SkippedRecord& b) { return a.id < b.id; });
  const auto n = report.utterances.size();
  report.fdd = reference_samples.size() >= 2 ? fdd(reference_samples, generated_samples)
                                             : std::numeric_limits<double>::quiet_NaN();
  report.mean_total_duration_error = n ? tde_sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
  if (pre_count) report.mean_pre_lr_deviation = pre_sum / static_cast<double>(pre_count);
  return report;
}

double regression_masked_mse(const nn::ModelCheckpoint& ck, const std::vector<AlignmentRecord>& records,
                             int prompt_frames) {
  const ModelSpec spec = spec_from_checkpoint(ck);
  if (spec.family != Family::regression) throw DomainError("regression_masked_mse: not a regression checkpoint");
  if (records.empty()) throw DegenerateInputError("regression_masked_mse: no records");
  double total = 0.0;
  for (const auto& r : records) {
    const PhonemeSequence phonemes(r.phones, spec.phone_vocab);
    const MaskSequence mask = prompt_mask(r.durations, prompt_frames);
    const DurationContext ctx = build_context(std::span<const int>(r.durations), mask);
    std::optional<TargetTrack> track;
    if (uses_target_track(spec.variant)) {
      track = build_target_track(mask, static_cast<double>(masked_sum(std::span<const int>(r.durations), mask)));
    }
    const RealDurations pred = regression_forward(phonemes, ctx, track, spec.variant, ck);
    const auto log_pred = log_transform(pred);
    total += regression_loss(log_pred, r.durations, mask);
  }
  return total / static_cast<double>(records.size());
}

}  // namespace tdadur
