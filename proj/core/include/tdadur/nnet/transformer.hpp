#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tdadur/nnet/tape.hpp"
#include "tdadur/nnet/tensor.hpp"
#include "tdadur/rng.hpp"

namespace tdadur::nn {

struct TransformerConfig {
  int layers = 2;
  int heads = 2;
  int embed_dim = 64;
  int ffn_dim = 128;
  int phone_embed_dim = 32;
  // Layer i < layers/2 feeds layer layers-1-i through concat + projection.
  bool unet_skips = true;
  bool positional_encoding = true;

  static TransformerConfig desk() { return {}; }
  static TransformerConfig paper() { return {8, 8, 512, 2048, 1024, true, true}; }
  static TransformerConfig preset(const std::string& name);

  void validate() const;
  friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

enum class ContextInput { scalar, tokens };

// Which per-position input channels a duration network consumes and how
// wide its output is. Every channel is projected to embed_dim and summed.
struct NetLayout {
  int phone_vocab = 0;
  ContextInput context = ContextInput::scalar;
  int context_vocab = 0;  // token count when context == tokens
  bool target_track = false;
  bool noisy_state = false;
  bool time = false;
  int output_dim = 1;

  friend bool operator==(const NetLayout&, const NetLayout&) = default;
};

// Inputs for one utterance; spans the layout does not use may be empty.
struct NetInputs {
  std::span<const int> phonemes;
  std::span<const double> context;  // log-domain values
  std::span<const int> context_tokens;
  std::span<const double> target;  // log-domain target track
  std::span<const double> noisy;
  double time = 0.0;
};

// Looks parameters up by name and puts them on a tape, once per tape.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const ParameterSet& params, GradientSet* grads = nullptr);

  Var operator()(const std::string& name);
  Tape& tape() { return tape_; }

 private:
  Tape& tape_;
  const ParameterSet& params_;
  GradientSet* grads_;
  std::map<std::string, Var> bound_;
};

using ShapeList = std::vector<std::pair<std::string, std::vector<std::size_t>>>;

ShapeList parameter_shapes(const TransformerConfig& config, const NetLayout& layout);
ParameterSet init_parameters(const TransformerConfig& config, const NetLayout& layout, Rng& rng);
// Throws StructuralError naming the first missing or mis-shaped tensor.
void check_parameters(const ParameterSet& params, const TransformerConfig& config, const NetLayout& layout);
GradientSet zero_gradients(const ParameterSet& params);

// Fixed sinusoidal encodings, [n, dim].
Tensor sinusoidal_positions(std::size_t n, std::size_t dim);
Tensor sinusoidal_time(double t, std::size_t dim);

// Bidirectional pre-LayerNorm transformer stack with optional UNet skips.
// input: [n, embed_dim] -> hidden states [n, embed_dim] after a final LayerNorm.
// When `attention` is non-null, every head's attention matrix is appended.
Var forward_transformer(ParamBinder& params, const TransformerConfig& config, Var input,
                        std::vector<Tensor>* attention = nullptr);

// Input fusion -> transformer -> output head: [n, layout.output_dim].
Var duration_net_forward(ParamBinder& params, const TransformerConfig& config, const NetLayout& layout,
                         const NetInputs& inputs, std::vector<Tensor>* attention = nullptr);

}  // namespace tdadur::nn
