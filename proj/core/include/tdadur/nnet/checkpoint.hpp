#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tdadur/nnet/adam.hpp"
#include "tdadur/nnet/tensor.hpp"
#include "tdadur/nnet/transformer.hpp"

namespace tdadur::nn {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct TrainingMeta {
  std::uint64_t seed = 0;
  std::int64_t steps = 0;

  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

struct ModelCheckpoint {
  std::string family;  // e.g. "regression/tda"
  TransformerConfig config;
  NetLayout layout;
  std::map<std::string, std::string> attributes;
  TrainingMeta meta;
  ParameterSet params;
  std::optional<AdamState> optimizer;

  friend bool operator==(const ModelCheckpoint&, const ModelCheckpoint&) = default;
};

// Binary layout, all integers little-endian:
//   "TDADCKPT"  u32 format_version  u32 header_len  header_len bytes of JSON
//   u32 tensor_count, then per tensor:
//     u32 name_len, name, u32 rank, u32 dims[rank], f32 data[prod(dims)]
// The JSON header carries family, transformer config, input layout,
// attributes and training metadata. Optimizer moments, when present, are
// stored as tensors named "optimizer.m/<param>" and "optimizer.v/<param>".
std::vector<std::uint8_t> serialize_checkpoint(const ModelCheckpoint& checkpoint);
ModelCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tdadur::nn
