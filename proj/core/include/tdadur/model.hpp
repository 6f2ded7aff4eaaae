#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "tdadur/nnet/checkpoint.hpp"
#include "tdadur/nnet/transformer.hpp"
#include "tdadur/rng.hpp"
#include "tdadur/types.hpp"

namespace tdadur {

enum class Family { regression, flow_matching, maskgit };
enum class Variant { baseline, tda, tda_e2e };

inline bool uses_target_track(Variant v) { return v != Variant::baseline; }

struct ModelSpec {
  Family family = Family::regression;
  Variant variant = Variant::baseline;
  int phone_vocab = 0;
  int max_duration = 256;  // MaskGIT token range 0..max_duration
  nn::TransformerConfig net = nn::TransformerConfig::desk();

  void validate() const;
};

// "regression/baseline", "regression/tda", "regression/tda_e2e",
// "fm/baseline", "fm/tda", "maskgit/baseline", "maskgit/tda".
std::string family_tag(Family family, Variant variant);
// Throws DomainError for unknown families or invalid pairs.
void parse_family_tag(const std::string& tag, Family& family, Variant& variant);

nn::NetLayout net_layout(const ModelSpec& spec);
nn::ModelCheckpoint create_checkpoint(const ModelSpec& spec, std::uint64_t seed);
ModelSpec spec_from_checkpoint(const nn::ModelCheckpoint& checkpoint);

// Result of any predictor: integer durations for every position (context
// positions copied through) plus the masked sum of the raw prediction before
// length regulation.
struct Prediction {
  Frames durations;
  RealDurations raw;
  double pre_lr_sum = 0.0;
};

// Copies context durations through, records the raw masked sum and length
// regulates the masked raw values to exactly `target` frames.
Prediction regulate_prediction(const DurationContext& context, RealDurations raw, long long target);

struct PredictOptions {
  // Flow matching.
  int nfe = 32;
  double guidance_strength = 0.7;
  int num_samples = 8;
  // MaskGIT.
  int maskgit_steps = 8;
  double sample_temperature = 1.0;
  double confidence_temperature = 4.5;
  // Regression E2E: skip the final integer apportionment and round instead.
  bool final_lr = true;
};

// Family-agnostic inference on a frozen checkpoint. Thread-safe as long as
// each caller brings its own Rng.
class DurationPredictor {
 public:
  virtual ~DurationPredictor() = default;
  virtual Prediction predict(const PhonemeSequence& phonemes, const DurationContext& context, long long target,
                             Rng& rng) const = 0;
  virtual std::string tag() const = 0;
};

std::unique_ptr<DurationPredictor> make_predictor(std::shared_ptr<const nn::ModelCheckpoint> checkpoint,
                                                  const PredictOptions& options = {});

// Training objective of one utterance under a sampled mask, on a tape bound
// to the checkpoint's parameters.
nn::Var training_loss(nn::ParamBinder& params, const nn::ModelCheckpoint& checkpoint, const ModelSpec& spec,
                      const PhonemeSequence& phonemes, std::span<const int> truth, const MaskSequence& mask,
                      Rng& rng);

}  // namespace tdadur
