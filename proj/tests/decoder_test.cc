#include <cmath>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "beam_oracle.h"
#include "diffcap/decoder.h"
#include "diffcap/ops.h"
#include "diffcap/vocab.h"
#include "gradcheck.h"

namespace diffcap {
namespace {

using testing::check_gradients;
using testing::parameter_tensors;
using testing::probe;
using testing::random_tensor;
using testing::randomize;
using TensorD = Tensor<double>;

DecoderConfig small_config(std::size_t V = 7, std::size_t w = 3) {
  DecoderConfig c;
  c.vocab_size = V;
  c.embed = 4;
  c.hidden = 5;
  c.attention = 3;
  c.annotation_width = w;
  return c;
}

void zero_all(ParameterStore<double>& store) {
  for (const auto& p : store.parameters()) {
    TensorD t = p.tensor;
    for (double& x : t.data()) x = 0;
  }
}

TensorD find(ParameterStore<double>& store, const std::string& name) {
  for (const auto& p : store.parameters()) {
    if (p.name == name) return p.tensor;
  }
  throw std::runtime_error("no parameter " + name);
}

TEST(VocabularyTest, ReservedIdsAndRoundTrip) {
  Vocabulary v({"red", "circle"});
  EXPECT_EQ(v.size(), 6u);
  EXPECT_EQ(v.id("<pad>"), 0);
  EXPECT_EQ(v.id("<end>"), 2);
  EXPECT_EQ(v.id("red"), 4);
  EXPECT_EQ(v.id("blue"), Vocabulary::kUnk);
  EXPECT_EQ(v.encode("Red, CIRCLE!"), (std::vector<int>{4, 5}));
  std::vector<int> ids{1, 4, 5, 2, 4};
  EXPECT_EQ(v.decode(ids), "red circle");
  EXPECT_THROW(v.token(6), std::out_of_range);
  EXPECT_THROW(Vocabulary({"a", "a"}), std::invalid_argument);
}

TEST(VocabularyTest, TokenizerSplitsOnPunctuation) {
  EXPECT_EQ(tokenize("  Is red;and\tis-LARGE "),
            (std::vector<std::string>{"is", "red", "and", "is", "large"}));
  EXPECT_TRUE(tokenize(" ,. ").empty());
}

TEST(AttendTest, SingleAnnotationAndIdenticalAnnotations) {
  std::mt19937_64 rng(1);
  Decoder<double> dec(small_config(), rng);
  TensorD one = random_tensor(rng, {2, 1, 3}, -1, 1, false);
  TensorD h = random_tensor(rng, {2, 5}, -1, 1, false);
  auto a1 = dec.attend(dec.prepare(one), h);
  for (double a : a1.alpha.values()) EXPECT_DOUBLE_EQ(a, 1.0);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(a1.z.values()[i], one.values()[i]);

  TensorD rho = random_tensor(rng, {1, 1, 3}, -1, 1, false);
  TensorD same = concat(std::vector<TensorD>{rho, rho, rho, rho}, 1);
  auto a4 = dec.attend(dec.prepare(same), slice(h, 0, 0, 1));
  for (double a : a4.alpha.values()) EXPECT_NEAR(a, 0.25, 1e-15);
}

TEST(AttendTest, WeightsNormalizedAndContextInHull) {
  for (int trial = 0; trial < 20; ++trial) {
    std::mt19937_64 rng(10 + trial);
    Decoder<double> dec(small_config(), rng);
    randomize(dec.params(), rng, 2.0);
    const std::size_t B = 2, d = 1 + trial % 6;
    TensorD ann = random_tensor(rng, {B, d, 3}, -2, 2, false);
    auto att = dec.attend(dec.prepare(ann), random_tensor(rng, {B, 5}, -1, 1, false));
    for (std::size_t b = 0; b < B; ++b) {
      double total = 0;
      for (std::size_t i = 0; i < d; ++i) {
        EXPECT_GT(att.alpha.values()[b * d + i], 0.0);
        total += att.alpha.values()[b * d + i];
      }
      EXPECT_NEAR(total, 1.0, 1e-6);
      for (std::size_t j = 0; j < 3; ++j) {
        double lo = 1e9, hi = -1e9;
        for (std::size_t i = 0; i < d; ++i) {
          lo = std::min(lo, ann.values()[(b * d + i) * 3 + j]);
          hi = std::max(hi, ann.values()[(b * d + i) * 3 + j]);
        }
        const double z = att.z.values()[b * 3 + j];
        EXPECT_GE(z, lo - 1e-12);
        EXPECT_LE(z, hi + 1e-12);
      }
    }
  }
}

TEST(StepTest, ZeroWeightsGiveUniformDistribution) {
  std::mt19937_64 rng(2);
  Decoder<double> dec(small_config(), rng);
  zero_all(dec.params());
  TensorD ann = random_tensor(rng, {1, 2, 3}, -1, 1, false);
  auto ctx = dec.prepare(ann);
  std::vector<int> y{Vocabulary::kStart};
  auto out = dec.step(y, dec.init_state(ctx), ctx);
  TensorD p = softmax(out.logits, 1);
  for (double v : p.values()) EXPECT_NEAR(v, 1.0 / 7, 1e-15);
}

TEST(StepTest, DeterministicAndRejectsBadIds) {
  std::mt19937_64 rng(3);
  Decoder<double> dec(small_config(), rng);
  TensorD ann = random_tensor(rng, {1, 2, 3}, -1, 1, false);
  auto ctx = dec.prepare(ann);
  auto s = dec.init_state(ctx);
  std::vector<int> y{5};
  EXPECT_EQ(dec.step(y, s, ctx).logits.values(), dec.step(y, s, ctx).logits.values());
  std::vector<int> bad{7};
  EXPECT_ANY_THROW(dec.step(bad, s, ctx));
}

TEST(StepTest, GradientMatchesFiniteDifferencesOnEveryGroup) {
  for (int instance = 0; instance < 20; ++instance) {
    std::mt19937_64 rng(300 + instance);
    Decoder<double> dec(small_config(), rng);
    randomize(dec.params(), rng, 0.8);
    TensorD ann = random_tensor(rng, {2, 3, 3});
    LstmState<double> s{random_tensor(rng, {2, 5}), random_tensor(rng, {2, 5})};
    std::vector<int> y{1, 5};
    auto loss = [&] {
      auto ctx = dec.prepare(ann);
      auto out = dec.step(y, s, ctx);
      return add(add(probe(out.logits, 1), probe(out.state.h, 2)), probe(out.state.c, 3));
    };
    std::vector<TensorD> wrt = parameter_tensors(dec.params());
    wrt.push_back(ann);
    wrt.push_back(s.h);
    wrt.push_back(s.c);
    auto result = check_gradients(loss, wrt, 1e-5, 24);
    EXPECT_LT(result.max_rel_error, 1e-4) << "instance " << instance;
  }
}

TEST(InitStateTest, ZeroAnnotationsAndGradient) {
  std::mt19937_64 rng(4);
  Decoder<double> dec(small_config(), rng);
  auto s = dec.init_state(dec.prepare(TensorD::zeros({1, 2, 3})));
  for (double v : s.h.values()) EXPECT_EQ(v, 0.0);
  for (double v : s.c.values()) EXPECT_EQ(v, 0.0);
  TensorD ann = random_tensor(rng, {1, 2, 3}, -1, 1, false);
  backward(probe(dec.init_state(dec.prepare(ann)).h, 4));
  double total = 0;
  for (double g : find(dec.params(), "init.W_h").grad()) total += std::abs(g);
  EXPECT_GT(total, 0.0);
}

TEST(SequenceNllTest, UniformPredictorClosedForm) {
  std::mt19937_64 rng(5);
  Decoder<double> dec(small_config(), rng);
  zero_all(dec.params());
  TensorD ann = random_tensor(rng, {1, 2, 3}, -1, 1, false);
  const double nll = dec.sequence_nll(ann, {{4, 6}}).item();
  EXPECT_NEAR(nll, 3 * std::log(7.0), 1e-12);
}

TEST(SequenceNllTest, SaturatedGoldPathApproachesZero) {
  std::mt19937_64 rng(6);
  Decoder<double> dec(small_config(), rng);
  zero_all(dec.params());
  // start -> e0 -> token 5; token 5 -> e1 -> end.
  TensorD emb = find(dec.params(), "embedding");
  emb.data()[Vocabulary::kStart * 4 + 0] = 1;
  emb.data()[5 * 4 + 1] = 1;
  TensorD Lo = find(dec.params(), "out.L_o");
  Lo.data()[0 * 7 + 5] = 20;
  Lo.data()[1 * 7 + Vocabulary::kEnd] = 20;
  TensorD ann = random_tensor(rng, {1, 2, 3}, -1, 1, false);
  EXPECT_LT(dec.sequence_nll(ann, {{5}}).item(), 1e-3);
}

TEST(SequenceNllTest, BatchAdditivityAndMasking) {
  std::mt19937_64 rng(7);
  Decoder<double> dec(small_config(), rng);
  TensorD one = random_tensor(rng, {1, 2, 3}, -1, 1, false);
  const double single = dec.sequence_nll(one, {{4, 5, 6}}).item();
  EXPECT_EQ(dec.sequence_nll(concat(one, one, 0), {{4, 5, 6}, {4, 5, 6}}).item(), 2 * single);
  TensorD other = random_tensor(rng, {1, 2, 3}, -1, 1, false);
  const double short_nll = dec.sequence_nll(other, {{5}}).item();
  EXPECT_NEAR(dec.sequence_nll(concat(one, other, 0), {{4, 5, 6}, {5}}).item(),
              single + short_nll, 1e-12);
  EXPECT_THROW(dec.sequence_nll(one, {{}}), std::invalid_argument);
}

TEST(SequenceNllTest, GradientMatchesFiniteDifferences) {
  for (int instance = 0; instance < 5; ++instance) {
    std::mt19937_64 rng(400 + instance);
    Decoder<double> dec(small_config(), rng);
    randomize(dec.params(), rng, 0.5);
    TensorD ann = random_tensor(rng, {2, 2, 3});
    auto loss = [&] { return dec.sequence_nll(ann, {{4, 5, 6}, {6}}); };
    std::vector<TensorD> wrt = parameter_tensors(dec.params());
    wrt.push_back(ann);
    EXPECT_LT(check_gradients(loss, wrt, 1e-5, 16).max_rel_error, 1e-3);
  }
}

TEST(BeamSearchTest, MatchesBruteForceOnRandomTables) {
  for (int instance = 0; instance < 60; ++instance) {
    std::mt19937_64 rng(500 + instance);
    const std::size_t V = 2 + instance % 4;
    const std::size_t max_len = 1 + (instance / 4) % 4;
    testing::TableModel model{V, static_cast<std::uint64_t>(instance)};
    BeamOptions options;
    options.max_len = max_len;
    options.end_id = static_cast<int>(instance % V);
    options.start_id = -1;
    options.beam_size = static_cast<std::size_t>(std::pow(V, max_len));
    auto beams = beam_search(model, testing::TableModel::State{{}}, options);
    auto oracle = testing::brute_force(model, options);
    ASSERT_FALSE(beams.empty());
    EXPECT_EQ(beams.front().tokens, oracle.tokens) << "instance " << instance;
    EXPECT_NEAR(beams.front().log_prob, oracle.log_prob, 1e-12);
    for (std::size_t i = 1; i < beams.size(); ++i) {
      EXPECT_GE(beams[i - 1].log_prob, beams[i].log_prob);
    }
    for (const auto& b : beams) {
      EXPECT_EQ(b.terminated, b.tokens.back() == options.end_id);
    }
  }
}

TEST(BeamSearchTest, TiesPreferEarlierTerminationThenLexicographic) {
  testing::TableModel model{3, 0, true};
  BeamOptions options;
  options.end_id = 2;
  options.start_id = -1;
  options.max_len = 3;
  options.beam_size = 3;
  auto beams = beam_search(model, testing::TableModel::State{{}}, options);
  ASSERT_FALSE(beams.empty());
  EXPECT_EQ(beams.front().tokens, (std::vector<int>{2}));
  options.beam_size = 2;
  beams = beam_search(model, testing::TableModel::State{{}}, options);
  ASSERT_EQ(beams.size(), 2u);
  EXPECT_EQ(beams[0].tokens, (std::vector<int>{0, 0, 0}));
  EXPECT_EQ(beams[1].tokens, (std::vector<int>{0, 0, 1}));
}

TEST(BeamSearchTest, DecoderMatchesBruteForceAndGreedy) {
  for (int instance = 0; instance < 10; ++instance) {
    std::mt19937_64 rng(600 + instance);
    Decoder<double> dec(small_config(6), rng);
    randomize(dec.params(), rng, 1.5);
    TensorD ann = random_tensor(rng, {1, 2, 3}, -1, 1, false);
    const std::size_t max_len = 3;
    auto beams = dec.beam_search(ann, 64, max_len);
    auto oracle = testing::decoder_brute_force(dec, ann, max_len);
    ASSERT_FALSE(beams.empty());
    EXPECT_EQ(beams.front().tokens, oracle.tokens);
    EXPECT_NEAR(beams.front().log_prob, oracle.log_prob, 1e-9);

    auto greedy = testing::decoder_greedy(dec, ann, max_len);
    auto one = dec.beam_search(ann, 1, max_len);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one.front().tokens, greedy);
    for (int t : beams.front().tokens) {
      EXPECT_NE(t, Vocabulary::kPad);
      EXPECT_NE(t, Vocabulary::kStart);
    }
  }
}

}  // namespace
}  // namespace diffcap
