#include <cmath>
#include <numbers>

#include "doctest.h"
#include "tdadur/error.hpp"
#include "tdadur/rng.hpp"
#include "tdadur/types.hpp"

using namespace tdadur;

namespace {

MaskSequence mask_of(std::initializer_list<int> flags) {
  std::vector<std::uint8_t> f;
  for (int v : flags) f.push_back(static_cast<std::uint8_t>(v));
  return MaskSequence(f);
}

}  // namespace

TEST_CASE("phoneme sequence validation") {
  CHECK(PhonemeSequence({0, 3, 4}, 5).size() == 3);
  CHECK_THROWS_AS(PhonemeSequence({}, 5), StructuralError);
  CHECK_THROWS_AS(PhonemeSequence({5}, 5), DomainError);
  CHECK_THROWS_AS(PhonemeSequence({-1}, 5), DomainError);
}

TEST_CASE("build_context zeroes masked positions") {
  const std::vector<int> a{5, 7, 3};
  CHECK(build_context(std::span<const int>(a), mask_of({0, 1, 0})).values == RealDurations{5, 0, 3});
  const std::vector<int> b{4, 4};
  CHECK(build_context(std::span<const int>(b), mask_of({1, 1})).values == RealDurations{0, 0});
  const std::vector<int> c{2, 9, 9, 2};
  CHECK(build_context(std::span<const int>(c), mask_of({0, 0, 1, 1})).values == RealDurations{2, 9, 0, 0});
  CHECK_THROWS_AS(build_context(std::span<const int>(c), mask_of({0, 1})), StructuralError);
}

TEST_CASE("build_context round trip reconstructs the sequence") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    std::vector<int> d(n);
    std::vector<std::uint8_t> f(n);
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = 1 + static_cast<int>(rng.below(50));
      f[i] = static_cast<std::uint8_t>(rng.below(2));
    }
    const MaskSequence m(f);
    DurationContext ctx = build_context(std::span<const int>(d), m);
    for (std::size_t i = 0; i < n; ++i) {
      if (m[i]) ctx.values[i] = d[i];
    }
    for (std::size_t i = 0; i < n; ++i) CHECK(ctx.values[i] == d[i]);
  }
}

TEST_CASE("target track") {
  CHECK(build_target_track(mask_of({1, 0, 1}), 50).track == RealDurations{50, 0, 50});
  CHECK(build_target_track(mask_of({0, 0}), 100).track == RealDurations{0, 0});
  CHECK(build_target_track(mask_of({1, 1, 1}), 0).track == RealDurations{0, 0, 0});
  CHECK_THROWS_AS(build_target_track(mask_of({1}), -1), DomainError);
}

TEST_CASE("target features are the per-phoneme share") {
  const auto f = target_features(build_target_track(mask_of({1, 0, 1, 1}), 30));
  CHECK(f[0] == doctest::Approx(std::log(11.0)).epsilon(1e-12));
  CHECK(f[1] == 0.0);
  CHECK(f[3] == f[0]);
}

TEST_CASE("log transform") {
  CHECK(log_transform(0.0) == 0.0);
  CHECK(log_transform(std::numbers::e - 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<double> xs{0.0, std::numbers::e - 1.0};
  const auto ys = log_transform(xs);
  CHECK(ys[0] == 0.0);
  CHECK(ys[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(log_transform(-1e-9), DomainError);
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double x = rng.uniform(0.0, 1e6);
    CHECK(std::abs(inverse_log_transform(log_transform(x)) - x) <= 1e-9 * std::max(x, 1.0));
  }
}

TEST_CASE("masked sum") {
  const std::vector<int> a{10, 20, 30};
  CHECK(masked_sum(std::span<const int>(a), mask_of({0, 1, 1})) == 50);
  const std::vector<int> b{5, 5};
  CHECK(masked_sum(std::span<const int>(b), mask_of({0, 0})) == 0);
  const std::vector<int> c{7};
  CHECK(masked_sum(std::span<const int>(c), mask_of({1})) == 7);
  CHECK_THROWS_AS(masked_sum(std::span<const int>(c), mask_of({1, 0})), StructuralError);
}

TEST_CASE("masked sum is linear") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(10);
    std::vector<double> d1(n), d2(n), comb(n);
    std::vector<std::uint8_t> f(n);
    const double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3);
    for (std::size_t i = 0; i < n; ++i) {
      d1[i] = rng.uniform(0, 10);
      d2[i] = rng.uniform(0, 10);
      comb[i] = a * d1[i] + b * d2[i];
      f[i] = static_cast<std::uint8_t>(rng.below(2));
    }
    const MaskSequence m(f);
    CHECK(masked_sum(comb, m) == doctest::Approx(a * masked_sum(d1, m) + b * masked_sum(d2, m)).epsilon(1e-12));
  }
}
