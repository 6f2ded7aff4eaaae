#include "tdadur/nnet/transformer.hpp"

#include <cmath>

#include "tdadur/error.hpp"

namespace tdadur::nn {

namespace {

std::string block(int i, const char* leaf) { return "block" + std::to_string(i) + "." + leaf; }

Var linear(ParamBinder& p, Var x, const std::string& prefix) {
  return add_row(matmul(x, p(prefix + ".w")), p(prefix + ".b"));
}

Var column(Tape& tape, std::span<const double> values) {
  return tape.constant(Tensor({values.size(), 1}, std::vector<double>(values.begin(), values.end())));
}

void require_length(std::size_t got, std::size_t n, const char* what) {
  if (got != n) {
    throw StructuralError(std::string("duration_net_forward: ") + what + " has " + std::to_string(got) +
                          " entries, expected " + std::to_string(n));
  }
}

}  // namespace

TransformerConfig TransformerConfig::preset(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  if (name == "tiny") return {2, 2, 8, 16, 4, true, true};
  throw DomainError("unknown transformer preset '" + name + "' (expected desk, paper or tiny)");
}

void TransformerConfig::validate() const {
  if (layers < 1 || heads < 1 || embed_dim < 1 || ffn_dim < 1 || phone_embed_dim < 1) {
    throw DomainError("TransformerConfig: all sizes must be positive");
  }
  if (embed_dim % heads != 0) throw DomainError("TransformerConfig: embed_dim must be divisible by heads");
  if (embed_dim % 2 != 0) throw DomainError("TransformerConfig: embed_dim must be even");
  if (unet_skips && layers % 2 != 0) throw DomainError("TransformerConfig: UNet skips need an even layer count");
}

ParamBinder::ParamBinder(Tape& tape, const ParameterSet& params, GradientSet* grads)
    : tape_(tape), params_(params), grads_(grads) {}

Var ParamBinder::operator()(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  auto p = params_.find(name);
  if (p == params_.end()) throw StructuralError("missing parameter '" + name + "'");
  Tensor* sink = nullptr;
  if (grads_) {
    auto g = grads_->find(name);
    if (g == grads_->end()) g = grads_->emplace(name, Tensor::zeros_like(p->second)).first;
    sink = &g->second;
  }
  Var v = tape_.leaf(p->second, sink);
  bound_.emplace(name, v);
  return v;
}

ShapeList parameter_shapes(const TransformerConfig& c, const NetLayout& layout) {
  c.validate();
  const auto E = static_cast<std::size_t>(c.embed_dim);
  const auto F = static_cast<std::size_t>(c.ffn_dim);
  const auto P = static_cast<std::size_t>(c.phone_embed_dim);
  ShapeList s;
  s.push_back({"input.phone_embed", {static_cast<std::size_t>(layout.phone_vocab), P}});
  s.push_back({"input.phone_proj.w", {P, E}});
  s.push_back({"input.phone_proj.b", {E}});
  if (layout.context == ContextInput::scalar) {
    s.push_back({"input.context.w", {1, E}});
  } else {
    s.push_back({"input.context_embed", {static_cast<std::size_t>(layout.context_vocab), E}});
  }
  if (layout.target_track) s.push_back({"input.target.w", {1, E}});
  if (layout.noisy_state) s.push_back({"input.noisy.w", {1, E}});
  if (layout.time) {
    s.push_back({"input.time.w", {E, E}});
    s.push_back({"input.time.b", {E}});
  }
  for (int i = 0; i < c.layers; ++i) {
    if (c.unet_skips && i >= c.layers / 2) {
      s.push_back({block(i, "skip.w"), {2 * E, E}});
      s.push_back({block(i, "skip.b"), {E}});
    }
    s.push_back({block(i, "ln1.g"), {E}});
    s.push_back({block(i, "ln1.b"), {E}});
    s.push_back({block(i, "attn.qkv.w"), {E, 3 * E}});
    s.push_back({block(i, "attn.qkv.b"), {3 * E}});
    s.push_back({block(i, "attn.out.w"), {E, E}});
    s.push_back({block(i, "attn.out.b"), {E}});
    s.push_back({block(i, "ln2.g"), {E}});
    s.push_back({block(i, "ln2.b"), {E}});
    s.push_back({block(i, "ffn.in.w"), {E, F}});
    s.push_back({block(i, "ffn.in.b"), {F}});
    s.push_back({block(i, "ffn.out.w"), {F, E}});
    s.push_back({block(i, "ffn.out.b"), {E}});
  }
  s.push_back({"final_ln.g", {E}});
  s.push_back({"final_ln.b", {E}});
  s.push_back({"head.w", {E, static_cast<std::size_t>(layout.output_dim)}});
  s.push_back({"head.b", {static_cast<std::size_t>(layout.output_dim)}});
  return s;
}

ParameterSet init_parameters(const TransformerConfig& config, const NetLayout& layout, Rng& rng) {
  ParameterSet params;
  for (const auto& [name, shape] : parameter_shapes(config, layout)) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> data(n, 0.0);
    const bool is_gain = name.ends_with(".g");
    const bool is_bias = name.ends_with(".b");
    if (is_gain) {
      std::fill(data.begin(), data.end(), 1.0);
    } else if (!is_bias) {
      // Embedding tables draw unit-variance rows; projections scale by fan-in.
      const bool table = name.ends_with("_embed");
      const double stddev = table ? 1.0 : 1.0 / std::sqrt(static_cast<double>(shape[0]));
      for (double& v : data) v = static_cast<double>(static_cast<float>(rng.normal() * stddev));
    }
    params.emplace(name, Tensor(shape, std::move(data)));
  }
  return params;
}

void check_parameters(const ParameterSet& params, const TransformerConfig& config, const NetLayout& layout) {
  const auto shapes = parameter_shapes(config, layout);
  for (const auto& [name, shape] : shapes) {
    auto it = params.find(name);
    if (it == params.end()) throw StructuralError("checkpoint is missing tensor '" + name + "'");
    if (it->second.shape() != shape) {
      std::string expected = "[";
      for (std::size_t k = 0; k < shape.size(); ++k) expected += (k ? "," : "") + std::to_string(shape[k]);
      throw StructuralError("tensor '" + name + "' has shape " + it->second.shape_string() +
                            ", config expects " + expected + "]");
    }
  }
  if (params.size() != shapes.size()) {
    throw StructuralError("checkpoint has " + std::to_string(params.size()) + " tensors, config expects " +
                          std::to_string(shapes.size()));
  }
}

GradientSet zero_gradients(const ParameterSet& params) {
  GradientSet g;
  for (const auto& [name, t] : params) g.emplace(name, Tensor::zeros_like(t));
  return g;
}

Tensor sinusoidal_positions(std::size_t n, std::size_t dim) {
  Tensor pe(n, dim);
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
      pe(pos, i) = std::sin(static_cast<double>(pos) * freq);
      if (i + 1 < dim) pe(pos, i + 1) = std::cos(static_cast<double>(pos) * freq);
    }
  }
  return pe;
}

Tensor sinusoidal_time(double t, std::size_t dim) {
  // Same frequencies as the positions, with t in [0, 1] stretched to [0, 1000].
  Tensor te(1, dim);
  const double x = 1000.0 * t;
  for (std::size_t i = 0; i < dim; i += 2) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
    te(0, i) = std::sin(x * freq);
    if (i + 1 < dim) te(0, i + 1) = std::cos(x * freq);
  }
  return te;
}

Var forward_transformer(ParamBinder& p, const TransformerConfig& c, Var input, std::vector<Tensor>* attention) {
  c.validate();
  if (input.cols() != static_cast<std::size_t>(c.embed_dim)) {
    throw StructuralError("forward_transformer: input width " + std::to_string(input.cols()) +
                          " != embed_dim " + std::to_string(c.embed_dim));
  }
  if (input.rows() == 0) throw StructuralError("forward_transformer: empty sequence");
  const auto E = static_cast<std::size_t>(c.embed_dim);
  const std::size_t head_dim = E / static_cast<std::size_t>(c.heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Var h = input;
  std::vector<Var> skips;
  for (int i = 0; i < c.layers; ++i) {
    if (c.unet_skips && i >= c.layers / 2) {
      const Var parts[] = {h, skips[static_cast<std::size_t>(c.layers - 1 - i)]};
      h = linear(p, concat_cols(parts), block(i, "skip"));
    }
    Var a = layer_norm(h, p(block(i, "ln1.g")), p(block(i, "ln1.b")));
    Var qkv = linear(p, a, block(i, "attn.qkv"));
    std::vector<Var> heads;
    for (int hd = 0; hd < c.heads; ++hd) {
      const std::size_t off = static_cast<std::size_t>(hd) * head_dim;
      Var q = slice_cols(qkv, off, head_dim);
      Var k = slice_cols(qkv, E + off, head_dim);
      Var v = slice_cols(qkv, 2 * E + off, head_dim);
      Var probs = softmax_rows(scale(matmul_nt(q, k), inv_sqrt));
      if (attention) attention->push_back(probs.value());
      heads.push_back(matmul(probs, v));
    }
    h = add(h, linear(p, concat_cols(heads), block(i, "attn.out")));
    Var f = layer_norm(h, p(block(i, "ln2.g")), p(block(i, "ln2.b")));
    f = linear(p, gelu(linear(p, f, block(i, "ffn.in"))), block(i, "ffn.out"));
    h = add(h, f);
    if (c.unet_skips && i < c.layers / 2) skips.push_back(h);
  }
  return layer_norm(h, p("final_ln.g"), p("final_ln.b"));
}

Var duration_net_forward(ParamBinder& p, const TransformerConfig& c, const NetLayout& layout,
                         const NetInputs& in, std::vector<Tensor>* attention) {
  Tape& tape = p.tape();
  const std::size_t n = in.phonemes.size();
  if (n == 0) throw StructuralError("duration_net_forward: empty phoneme sequence");

  Var x = matmul(gather_rows(p("input.phone_embed"), in.phonemes), p("input.phone_proj.w"));
  x = add_row(x, p("input.phone_proj.b"));
  if (layout.context == ContextInput::scalar) {
    require_length(in.context.size(), n, "context");
    x = add(x, matmul(column(tape, in.context), p("input.context.w")));
  } else {
    require_length(in.context_tokens.size(), n, "context tokens");
    x = add(x, gather_rows(p("input.context_embed"), in.context_tokens));
  }
  if (layout.target_track) {
    require_length(in.target.size(), n, "target track");
    x = add(x, matmul(column(tape, in.target), p("input.target.w")));
  }
  if (layout.noisy_state) {
    require_length(in.noisy.size(), n, "noisy state");
    x = add(x, matmul(column(tape, in.noisy), p("input.noisy.w")));
  }
  if (layout.time) {
    Var te = tape.constant(sinusoidal_time(in.time, static_cast<std::size_t>(c.embed_dim)));
    x = add_row(x, linear(p, te, "input.time"));
  }
  if (c.positional_encoding) {
    x = add(x, tape.constant(sinusoidal_positions(n, static_cast<std::size_t>(c.embed_dim))));
  }
  Var hidden = forward_transformer(p, c, x, attention);
  return linear(p, hidden, "head");
}

}  // namespace tdadur::nn
