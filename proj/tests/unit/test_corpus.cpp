#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "support/oracles.hpp"
#include "tdadur/corpus.hpp"
#include "tdadur/error.hpp"

using namespace tdadur;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("tdadur_test_corpus_" + name);
}

}  // namespace

TEST_CASE("synthetic spec round trip and validation") {
  SyntheticSpec spec;
  spec.phone_vocab_size = 6;
  spec.phones = {{3.0, 0.5}, {1.5, 0.2}, {2.0, 0.3}, {1.0, 0.1}, {2.2, 0.4}, {1.8, 0.25}};
  spec.rate_sigma = 0.05;
  spec.seed = 77;
  const SyntheticSpec back = parse_synthetic_spec(format_synthetic_spec(spec));
  CHECK(back.phones == spec.phones);
  CHECK(back.seed == 77);
  CHECK(back.rate_sigma == 0.05);
  CHECK(format_synthetic_spec(back) == format_synthetic_spec(spec));

  CHECK(SyntheticSpec{}.resolved_phones().size() == 40);
  CHECK(SyntheticSpec{}.resolved_phones() == SyntheticSpec{}.resolved_phones());

  SyntheticSpec bad = spec;
  bad.phones.pop_back();
  CHECK_THROWS_AS(bad.validate(), StructuralError);
  bad = spec;
  bad.min_length = 50;
  CHECK_THROWS(bad.validate());
  bad = spec;
  bad.phones[2].sigma = -1.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  CHECK_THROWS_AS(parse_synthetic_spec("{not json"), ParseError);
  CHECK_THROWS(load_synthetic_spec(temp_path("missing.json")));
}

TEST_CASE("corpus generation") {
  SyntheticSpec spec;
  spec.seed = 3;
  const auto a = generate_corpus(spec, 50);
  const auto b = generate_corpus(spec, 50);
  CHECK(a == b);
  spec.seed = 4;
  CHECK(generate_corpus(spec, 50) != a);
  std::set<std::string> ids;
  for (const auto& r : a) {
    CHECK_NOTHROW(validate_record(r));
    CHECK(r.phones.front() == 0);
    CHECK(r.phones.back() == 0);
    CHECK(r.phones.size() >= 12);
    CHECK(r.phones.size() <= 40);
    ids.insert(r.id);
  }
  CHECK(ids.size() == 50);
  CHECK(a[0].id == "utt000000");
}

TEST_CASE("degenerate spread reproduces the phone means") {
  SyntheticSpec spec;
  spec.phone_vocab_size = 3;
  spec.phones = {{std::log(20.0), 0.0}, {std::log(7.0), 0.0}, {std::log(12.0), 0.0}};
  spec.rate_sigma = 0.0;
  spec.interior_silence_probability = 0.0;
  for (const auto& r : generate_corpus(spec, 20)) {
    for (std::size_t i = 0; i < r.phones.size(); ++i) {
      const int expect[] = {20, 7, 12};
      CHECK(r.durations[i] == expect[r.phones[i]]);
    }
  }
}

TEST_CASE("per-phone log moments match the spec") {
  SyntheticSpec spec;
  spec.phone_vocab_size = 3;
  spec.phones = {{std::log(20.0), 0.3}, {std::log(25.0), 0.3}, {std::log(40.0), 0.2}};
  spec.rate_sigma = 0.0;
  spec.seed = 9;
  std::vector<double> d1, d2;
  for (const auto& r : generate_corpus(spec, 2000)) {
    for (std::size_t i = 0; i < r.phones.size(); ++i) {
      if (r.phones[i] == 1) d1.push_back(r.durations[i]);
      if (r.phones[i] == 2) d2.push_back(r.durations[i]);
    }
  }
  // Integer rounding and log1p shift the moments slightly at these scales.
  double m = 0, s = 0;
  oracle::log_moments(d1, m, s);
  CHECK(m == doctest::Approx(std::log1p(25.0)).epsilon(0.02));
  CHECK(s == doctest::Approx(0.3 * 25.0 / 26.0).epsilon(0.08));
  oracle::log_moments(d2, m, s);
  CHECK(m == doctest::Approx(std::log1p(40.0)).epsilon(0.02));
  CHECK(s == doctest::Approx(0.2 * 40.0 / 41.0).epsilon(0.08));
}

TEST_CASE("alignment round trip") {
  SyntheticSpec spec;
  auto records = generate_corpus(spec, 30);
  records[3].mask = std::vector<std::uint8_t>(records[3].phones.size(), 1);
  records[3].target = 123;
  records[3].pre_lr_sum = 0.1 + 0.2;
  for (const auto& r : records) CHECK(parse_alignment(format_alignment(r), 1) == r);
  const auto path = temp_path("roundtrip.jsonl");
  write_alignments(records, path);
  CHECK(read_alignments(path) == records);

  std::ofstream(path, std::ios::app) << "\n\n";
  CHECK(read_alignments(path).size() == records.size());
  std::filesystem::remove(path);
}

TEST_CASE("alignment parse errors name the line") {
  CHECK_THROWS_WITH_AS(parse_alignment("{", 7), doctest::Contains("7"), ParseError);
  CHECK_THROWS_AS(parse_alignment(R"({"id":"a","phones":[1,2],"durations":[3]})", 1), Error);
  CHECK_THROWS_AS(parse_alignment(R"({"id":"a","phones":[1],"durations":[0]})", 1), Error);
  CHECK_THROWS_AS(parse_alignment(R"({"id":"a","phones":[],"durations":[]})", 1), Error);
  CHECK_THROWS_AS(parse_alignment(R"({"phones":[1],"durations":[2]})", 1), Error);

  const auto path = temp_path("bad.jsonl");
  std::ofstream(path) << R"({"id":"a","phones":[1],"durations":[2]})" << "\n" << "oops\n";
  CHECK_THROWS_WITH_AS(read_alignments(path), doctest::Contains("2"), ParseError);
  std::filesystem::remove(path);
  CHECK_THROWS(read_alignments(temp_path("does_not_exist.jsonl")));
}

TEST_CASE("corpus split") {
  const auto records = generate_corpus(SyntheticSpec{}, 101);
  const auto [train, test] = split_corpus(records, 0.8, 5);
  CHECK(train.size() == 81);
  CHECK(test.size() == 20);
  std::set<std::string> seen;
  for (const auto& r : train) seen.insert(r.id);
  for (const auto& r : test) CHECK(seen.insert(r.id).second);
  CHECK(seen.size() == 101);
  for (std::size_t i = 1; i < train.size(); ++i) CHECK(train[i - 1].id < train[i].id);
  const auto again = split_corpus(records, 0.8, 5);
  CHECK(again.first == train);
  CHECK(split_corpus(records, 0.8, 6).first != train);
  CHECK_THROWS_AS(split_corpus(records, 1.0, 1), DomainError);
  CHECK_THROWS_AS(split_corpus(records, 0.0, 1), DomainError);
}
