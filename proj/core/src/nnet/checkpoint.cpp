#include "tdadur/nnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "tdadur/error.hpp"

namespace tdadur::nn {

namespace {

using json = nlohmann::json;

constexpr char kMagic[8] = {'T', 'D', 'A', 'D', 'C', 'K', 'P', 'T'};
constexpr const char* kMomentPrefix = "optimizer.m/";
constexpr const char* kVariancePrefix = "optimizer.v/";

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, const Tensor& t) {
    str(name);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) u32(static_cast<std::uint32_t>(d));
    for (double v : t.data()) f32(static_cast<float>(v));
  }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw ParseError("checkpoint: truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::string str() { return str(u32()); }
  Tensor tensor(std::string& name) {
    name = str();
    const std::uint32_t rank = u32();
    if (rank < 1 || rank > 2) throw ParseError("checkpoint: tensor '" + name + "' has unsupported rank");
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = u32();
      n *= d;
    }
    need(4 * n);
    std::vector<double> data(n);
    for (auto& v : data) v = static_cast<double>(std::bit_cast<float>(u32()));
    return Tensor(std::move(shape), std::move(data));
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

json config_to_json(const TransformerConfig& c) {
  return {{"layers", c.layers},       {"heads", c.heads},
          {"embed_dim", c.embed_dim}, {"ffn_dim", c.ffn_dim},
          {"phone_embed_dim", c.phone_embed_dim},
          {"unet_skips", c.unet_skips}, {"unet_skip_mode", "concat_project"},
          {"positional_encoding", c.positional_encoding ? "sinusoidal" : "none"}};
}

TransformerConfig config_from_json(const json& j) {
  TransformerConfig c;
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.phone_embed_dim = j.at("phone_embed_dim").get<int>();
  c.unet_skips = j.at("unet_skips").get<bool>();
  c.positional_encoding = j.at("positional_encoding").get<std::string>() == "sinusoidal";
  return c;
}

json layout_to_json(const NetLayout& l) {
  return {{"phone_vocab", l.phone_vocab},
          {"context", l.context == ContextInput::scalar ? "scalar" : "tokens"},
          {"context_vocab", l.context_vocab},
          {"target_track", l.target_track},
          {"noisy_state", l.noisy_state},
          {"time", l.time},
          {"output_dim", l.output_dim}};
}

NetLayout layout_from_json(const json& j) {
  NetLayout l;
  l.phone_vocab = j.at("phone_vocab").get<int>();
  l.context = j.at("context").get<std::string>() == "tokens" ? ContextInput::tokens : ContextInput::scalar;
  l.context_vocab = j.at("context_vocab").get<int>();
  l.target_track = j.at("target_track").get<bool>();
  l.noisy_state = j.at("noisy_state").get<bool>();
  l.time = j.at("time").get<bool>();
  l.output_dim = j.at("output_dim").get<int>();
  return l;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelCheckpoint& ck) {
  json header = {{"format_version", kCheckpointFormatVersion},
                 {"family", ck.family},
                 {"config", config_to_json(ck.config)},
                 {"layout", layout_to_json(ck.layout)},
                 {"attributes", ck.attributes},
                 {"metadata", {{"seed", ck.meta.seed}, {"steps", ck.meta.steps}}}};
  if (ck.optimizer) header["optimizer"] = {{"kind", "adam"}, {"step", ck.optimizer->step}};
  const std::string text = header.dump();

  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointFormatVersion);
  w.str(text);
  std::size_t count = ck.params.size();
  if (ck.optimizer) count += ck.optimizer->m.size() + ck.optimizer->v.size();
  w.u32(static_cast<std::uint32_t>(count));
  for (const auto& [name, t] : ck.params) w.tensor(name, t);
  if (ck.optimizer) {
    for (const auto& [name, t] : ck.optimizer->m) w.tensor(kMomentPrefix + name, t);
    for (const auto& [name, t] : ck.optimizer->v) w.tensor(kVariancePrefix + name, t);
  }
  return std::move(w.out);
}

ModelCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
    throw ParseError("checkpoint: bad magic, not a duration-model checkpoint");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointFormatVersion) {
    throw ParseError("checkpoint: unsupported format version " + std::to_string(version));
  }
  ModelCheckpoint ck;
  json header;
  try {
    header = json::parse(r.str());
    ck.family = header.at("family").get<std::string>();
    ck.config = config_from_json(header.at("config"));
    ck.layout = layout_from_json(header.at("layout"));
    ck.attributes = header.at("attributes").get<std::map<std::string, std::string>>();
    ck.meta.seed = header.at("metadata").at("seed").get<std::uint64_t>();
    ck.meta.steps = header.at("metadata").at("steps").get<std::int64_t>();
    if (header.contains("optimizer")) {
      ck.optimizer.emplace();
      ck.optimizer->step = header.at("optimizer").at("step").get<std::int64_t>();
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: malformed header: ") + e.what());
  }
  const std::uint32_t count = r.u32();
  const std::string m_prefix = kMomentPrefix, v_prefix = kVariancePrefix;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name;
    Tensor t = r.tensor(name);
    if (name.starts_with(m_prefix) || name.starts_with(v_prefix)) {
      if (!ck.optimizer) throw ParseError("checkpoint: optimizer tensor without optimizer header");
      auto& dst = name.starts_with(m_prefix) ? ck.optimizer->m : ck.optimizer->v;
      dst.emplace(name.substr(m_prefix.size()), std::move(t));
    } else {
      ck.params.emplace(std::move(name), std::move(t));
    }
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes after tensor table");
  check_parameters(ck.params, ck.config, ck.layout);
  return ck;
}

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint '" + path.string() + "'");
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace tdadur::nn
