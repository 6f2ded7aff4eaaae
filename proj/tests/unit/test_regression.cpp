#include <cmath>

#include "doctest.h"
#include "support/oracles.hpp"
#include "tdadur/error.hpp"
#include "tdadur/regression.hpp"

using namespace tdadur;

namespace {

nn::ModelCheckpoint make(Variant v, std::uint64_t seed, int vocab = 8) {
  ModelSpec spec;
  spec.family = Family::regression;
  spec.variant = v;
  spec.phone_vocab = vocab;
  spec.net = nn::TransformerConfig::preset("tiny");
  return create_checkpoint(spec, seed);
}

struct Case {
  std::vector<int> phones;
  std::vector<int> truth;
  MaskSequence mask;
};

Case random_case(Rng& rng, int vocab = 8) {
  Case c;
  const std::size_t n = 1 + rng.below(12);
  std::vector<std::uint8_t> f(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.phones.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab))));
    c.truth.push_back(1 + static_cast<int>(rng.below(30)));
    f[i] = static_cast<std::uint8_t>(rng.below(2));
  }
  f[rng.below(n)] = 1;
  c.mask = MaskSequence(f);
  return c;
}

}  // namespace

TEST_CASE("regression loss examples") {
  const MaskSequence m({1, 0, 1});
  const std::vector<int> truth{4, 9, 2};
  const std::vector<double> exact{std::log(5.0), 123.0, std::log(3.0)};
  CHECK(regression_loss(exact, truth, m) == doctest::Approx(0.0));
  const MaskSequence single({0, 1, 0});
  const std::vector<double> off{0.0, std::log(10.0) + 2.0, 0.0};
  CHECK(regression_loss(off, truth, single) == doctest::Approx(4.0));
  const std::vector<double> e1{std::log(5.0) + 0.3, 0.0, std::log(3.0) - 0.1};
  const std::vector<double> e2{std::log(5.0) + 0.6, 0.0, std::log(3.0) - 0.2};
  CHECK(regression_loss(e2, truth, m) == doctest::Approx(4.0 * regression_loss(e1, truth, m)));
  CHECK_THROWS_AS(regression_loss(exact, truth, MaskSequence::none(3)), DegenerateInputError);
}

TEST_CASE("regression loss ignores unmasked positions") {
  nn::Tape tape;
  nn::Var p = tape.variable(nn::Tensor({3, 1}, {0.5, 1.5, 2.5}));
  const std::vector<int> truth{3, 3, 3};
  tape.backward(regression_loss(p, truth, MaskSequence({1, 0, 1})));
  CHECK(tape.grad(p)[0] != 0.0);
  CHECK(tape.grad(p)[1] == 0.0);
  CHECK(tape.grad(p)[2] != 0.0);
}

TEST_CASE("variant and target compatibility") {
  const auto base = make(Variant::baseline, 1);
  const auto tda = make(Variant::tda, 1);
  const PhonemeSequence ph({1, 2, 3}, 8);
  const MaskSequence m({0, 1, 1});
  const DurationContext ctx = build_context(std::vector<int>{4, 5, 6}, m);
  CHECK_THROWS_AS(regression_forward(ph, ctx, build_target_track(m, 10), Variant::baseline, base), StructuralError);
  CHECK_THROWS_AS(regression_forward(ph, ctx, std::nullopt, Variant::tda, tda), StructuralError);
}

TEST_CASE("E2E masked sum equals the target for random parameters") {
  Rng rng(2);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto ck = make(Variant::tda_e2e, seed);
    const Case c = random_case(rng);
    const double total = rng.uniform(static_cast<double>(c.mask.count()), 400.0);
    const auto out = regression_forward(PhonemeSequence(c.phones, 8), build_context(c.truth, c.mask),
                                        build_target_track(c.mask, total), Variant::tda_e2e, ck);
    CHECK(std::abs(masked_sum(out, c.mask) - total) <= 1e-4 * total);
  }
}

TEST_CASE("baseline is blind to the target") {
  const auto ck = make(Variant::baseline, 4);
  const PhonemeSequence ph({1, 5, 2, 7}, 8);
  const DurationContext ctx = build_context(std::vector<int>{3, 3, 3, 3}, MaskSequence::all(4));
  const Prediction a = predict_with_lr(ph, ctx, 20, Variant::baseline, ck);
  const Prediction b = predict_with_lr(ph, ctx, 90, Variant::baseline, ck);
  CHECK(a.raw == b.raw);
  CHECK(a.pre_lr_sum == b.pre_lr_sum);
}

TEST_CASE("predict with LR meets the target exactly") {
  Rng rng(6);
  for (Variant v : {Variant::baseline, Variant::tda, Variant::tda_e2e}) {
    const auto ck = make(v, 9);
    for (int trial = 0; trial < 100; ++trial) {
      const Case c = random_case(rng);
      const long long target = static_cast<long long>(c.mask.count() + rng.below(200));
      const DurationContext ctx = build_context(c.truth, c.mask);
      const Prediction p = predict_with_lr(PhonemeSequence(c.phones, 8), ctx, target, v, ck);
      CHECK(masked_sum(std::span<const int>(p.durations), c.mask) == target);
      for (std::size_t i = 0; i < c.truth.size(); ++i) {
        if (!c.mask[i]) CHECK(p.durations[i] == c.truth[i]);
        if (c.mask[i]) CHECK(p.durations[i] >= 1);
      }
    }
  }
  const auto ck = make(Variant::tda, 1);
  const MaskSequence m({1, 1, 1});
  CHECK_THROWS_AS(
      predict_with_lr(PhonemeSequence({1, 2, 3}, 8), build_context(std::vector<int>{1, 1, 1}, m), 2, Variant::tda, ck),
      InfeasibleTargetError);
}

TEST_CASE("E2E may skip the final LR") {
  const auto ck = make(Variant::tda_e2e, 3);
  const MaskSequence m({0, 1, 1, 1});
  const DurationContext ctx = build_context(std::vector<int>{7, 1, 1, 1}, m);
  const PhonemeSequence ph({0, 1, 2, 3}, 8);
  const Prediction p = predict_with_lr(ph, ctx, 60, Variant::tda_e2e, ck, false);
  CHECK(p.durations[0] == 7);
  for (std::size_t i = 1; i < 4; ++i) CHECK(p.durations[i] == std::max(1L, std::lround(p.raw[i])));
  CHECK(std::abs(p.pre_lr_sum - 60.0) < 60e-4);
  CHECK_THROWS_AS(predict_with_lr(ph, ctx, 60, Variant::tda, make(Variant::tda, 3), false), DomainError);
}

TEST_CASE("regression training loss gradients") {
  Rng rng(10);
  for (Variant v : {Variant::baseline, Variant::tda, Variant::tda_e2e}) {
    auto ck = make(v, 12, 6);
    const Case c = random_case(rng, 6);
    const PhonemeSequence ph(c.phones, 6);
    auto loss = [&](nn::GradientSet* g) {
      nn::Tape tape;
      nn::ParamBinder binder(tape, ck.params, g);
      nn::Var l = regression_training_loss(binder, ck, v, ph, c.truth, c.mask);
      if (g) tape.backward(l);
      return l.value()[0];
    };
    nn::GradientSet g = nn::zero_gradients(ck.params);
    loss(&g);
    const auto numeric = oracle::finite_difference(ck.params, [&] { return loss(nullptr); }, 1e-4);
    CHECK(oracle::max_relative_error(g, numeric, 1e-6) < 1e-4);
  }
}
