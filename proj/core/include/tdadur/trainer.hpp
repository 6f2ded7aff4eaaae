#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tdadur/corpus.hpp"
#include "tdadur/masking.hpp"
#include "tdadur/model.hpp"
#include "tdadur/nnet/checkpoint.hpp"

namespace tdadur {

struct TrainConfig {
  // Total optimizer steps; training resumes from checkpoint.meta.steps.
  std::int64_t steps = 2000;
  int batch_size = 8;
  double learning_rate = 1e-3;
  // Global gradient-norm clip; 0 disables.
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  MaskPolicy policy;
  std::int64_t log_every = 50;

  void validate() const;
};

struct TrainLogRow {
  std::int64_t step = 0;
  double loss = 0.0;  // batch mean before the update at this step
};

using TrainLogFn = std::function<void(const TrainLogRow&)>;

// Step k draws its batch, masks and noise from Rng(mix(seed, k)), so a run
// split across a save and a resume reproduces the uninterrupted run
// bit for bit. Parameters and Adam moments live at float precision.
std::vector<TrainLogRow> train(nn::ModelCheckpoint& checkpoint, const std::vector<AlignmentRecord>& corpus,
                               const TrainConfig& config, const TrainLogFn& on_log = {});

// Mean training loss over a batch without updating anything.
double batch_loss(const nn::ModelCheckpoint& checkpoint, const std::vector<AlignmentRecord>& corpus,
                  const std::vector<std::size_t>& indices, const MaskPolicy& policy, std::uint64_t seed);

}  // namespace tdadur
