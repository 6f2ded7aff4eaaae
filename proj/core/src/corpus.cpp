#include "tdadur/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "tdadur/error.hpp"
#include "tdadur/rng.hpp"

namespace tdadur {

namespace {

using json = nlohmann::json;

std::string utterance_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "utt%06zu", i);
  return buf;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (phone_vocab_size < 2) throw DomainError("SyntheticSpec: phone_vocab_size must be >= 2");
  if (silence_id < 0 || silence_id >= phone_vocab_size) throw DomainError("SyntheticSpec: silence_id out of range");
  if (!phones.empty() && static_cast<int>(phones.size()) != phone_vocab_size) {
    throw StructuralError("SyntheticSpec: phones must list one entry per phone id");
  }
  for (const auto& p : phones) {
    if (!(p.sigma >= 0.0)) throw DomainError("SyntheticSpec: every phone sigma must be >= 0");
  }
  if (!(rate_sigma >= 0.0)) throw DomainError("SyntheticSpec: rate_sigma must be >= 0");
  if (min_length < 1 || max_length < min_length) throw DomainError("SyntheticSpec: need 1 <= min_length <= max_length");
  if (!(interior_silence_probability >= 0.0 && interior_silence_probability < 1.0)) {
    throw DomainError("SyntheticSpec: interior_silence_probability must lie in [0, 1)");
  }
}

std::vector<PhoneStats> SyntheticSpec::resolved_phones() const {
  if (!phones.empty()) return phones;
  Rng rng(Rng::mix(seed, 0x70686f6e65ull));
  std::vector<PhoneStats> out(static_cast<std::size_t>(phone_vocab_size));
  for (int p = 0; p < phone_vocab_size; ++p) {
    if (p == silence_id) {
      out[static_cast<std::size_t>(p)] = {std::log(20.0), 0.5};
    } else {
      out[static_cast<std::size_t>(p)] = {std::log(rng.uniform(3.0, 14.0)), rng.uniform(0.2, 0.45)};
    }
  }
  return out;
}

SyntheticSpec parse_synthetic_spec(std::string_view text) {
  SyntheticSpec s;
  try {
    const json j = json::parse(text);
    s.phone_vocab_size = j.value("phone_vocab_size", s.phone_vocab_size);
    s.silence_id = j.value("silence_id", s.silence_id);
    s.rate_sigma = j.value("rate_sigma", s.rate_sigma);
    s.min_length = j.value("min_length", s.min_length);
    s.max_length = j.value("max_length", s.max_length);
    s.interior_silence_probability = j.value("interior_silence_probability", s.interior_silence_probability);
    s.frame_rate = j.value("frame_rate", s.frame_rate);
    s.seed = j.value("seed", s.seed);
    if (j.contains("phones")) {
      for (const auto& p : j.at("phones")) s.phones.push_back({p.at("mu").get<double>(), p.at("sigma").get<double>()});
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string format_synthetic_spec(const SyntheticSpec& s) {
  json j = {{"phone_vocab_size", s.phone_vocab_size},
            {"silence_id", s.silence_id},
            {"rate_sigma", s.rate_sigma},
            {"min_length", s.min_length},
            {"max_length", s.max_length},
            {"interior_silence_probability", s.interior_silence_probability},
            {"frame_rate", s.frame_rate},
            {"seed", s.seed}};
  if (!s.phones.empty()) {
    j["phones"] = json::array();
    for (const auto& p : s.phones) j["phones"].push_back({{"mu", p.mu}, {"sigma", p.sigma}});
  }
  return j.dump(2) + "\n";
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open synthetic spec '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_synthetic_spec(ss.str());
}

void validate_record(const AlignmentRecord& r) {
  if (r.phones.empty()) throw StructuralError("record '" + r.id + "': empty phoneme sequence");
  if (r.phones.size() != r.durations.size()) {
    throw StructuralError("record '" + r.id + "': " + std::to_string(r.phones.size()) + " phones but " +
                          std::to_string(r.durations.size()) + " durations");
  }
  for (int p : r.phones) {
    if (p < 0) throw DomainError("record '" + r.id + "': negative phone id");
  }
  for (int d : r.durations) {
    if (d < 1) throw DomainError("record '" + r.id + "': duration " + std::to_string(d) + " < 1 frame");
  }
  if (r.mask && r.mask->size() != r.phones.size()) {
    throw StructuralError("record '" + r.id + "': mask length does not match phones");
  }
}

std::vector<AlignmentRecord> generate_corpus(const SyntheticSpec& spec, std::size_t n) {
  spec.validate();
  const auto stats = spec.resolved_phones();
  Rng rng(spec.seed);
  std::vector<AlignmentRecord> out;
  out.reserve(n);
  const auto non_silence = static_cast<std::uint64_t>(spec.phone_vocab_size - 1);
  auto draw_phone = [&] {
    auto p = static_cast<int>(rng.below(non_silence));
    return p >= spec.silence_id ? p + 1 : p;
  };
  for (std::size_t u = 0; u < n; ++u) {
    AlignmentRecord r;
    r.id = utterance_id(u);
    const auto len = static_cast<std::size_t>(
        spec.min_length +
        static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_length - spec.min_length + 1))));
    const double rate = std::exp(rng.normal(0.0, spec.rate_sigma));
    for (std::size_t i = 0; i < len; ++i) {
      int phone;
      if (len >= 2 && (i == 0 || i + 1 == len)) {
        phone = spec.silence_id;
      } else if (rng.uniform() < spec.interior_silence_probability) {
        phone = spec.silence_id;
      } else {
        phone = draw_phone();
      }
      const PhoneStats& ps = stats[static_cast<std::size_t>(phone)];
      const double frames = rate * std::exp(rng.normal(ps.mu, ps.sigma));
      r.phones.push_back(phone);
      r.durations.push_back(std::max(1, static_cast<int>(std::lround(frames))));
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_alignment(const AlignmentRecord& r) {
  json j = {{"id", r.id}, {"phones", r.phones}, {"durations", r.durations}};
  if (r.mask) {
    std::vector<int> m(r.mask->begin(), r.mask->end());
    j["mask"] = m;
  }
  if (r.target) j["target"] = *r.target;
  if (r.pre_lr_sum) j["pre_lr_sum"] = *r.pre_lr_sum;
  return j.dump();
}

AlignmentRecord parse_alignment(std::string_view line, std::size_t line_number) {
  const std::string where = "line " + std::to_string(line_number) + ": ";
  AlignmentRecord r;
  try {
    const json j = json::parse(line);
    r.id = j.at("id").get<std::string>();
    r.phones = j.at("phones").get<std::vector<int>>();
    r.durations = j.at("durations").get<std::vector<int>>();
    if (j.contains("mask")) {
      std::vector<std::uint8_t> m;
      for (int v : j.at("mask").get<std::vector<int>>()) {
        if (v != 0 && v != 1) throw ParseError(where + "mask entries must be 0 or 1");
        m.push_back(static_cast<std::uint8_t>(v));
      }
      r.mask = std::move(m);
    }
    if (j.contains("target")) r.target = j.at("target").get<long long>();
    if (j.contains("pre_lr_sum")) r.pre_lr_sum = j.at("pre_lr_sum").get<double>();
  } catch (const json::exception& e) {
    throw ParseError(where + e.what());
  }
  try {
    validate_record(r);
  } catch (const Error& e) {
    throw ParseError(where + e.what());
  }
  return r;
}

std::vector<AlignmentRecord> read_alignments(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open alignment file '" + path.string() + "'");
  std::vector<AlignmentRecord> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_alignment(line, line_number));
  }
  return out;
}

void write_alignments(const std::vector<AlignmentRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  for (const auto& r : records) {
    validate_record(r);
    out << format_alignment(r) << '\n';
  }
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

std::pair<std::vector<AlignmentRecord>, std::vector<AlignmentRecord>> split_corpus(
    const std::vector<AlignmentRecord>& records, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw DomainError("split_corpus: train_fraction must lie in (0, 1)");
  }
  const std::size_t n = records.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
  std::vector<bool> in_train(n, false);
  for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;
  std::pair<std::vector<AlignmentRecord>, std::vector<AlignmentRecord>> out;
  for (std::size_t i = 0; i < n; ++i) (in_train[i] ? out.first : out.second).push_back(records[i]);
  return out;
}

}  // namespace tdadur
