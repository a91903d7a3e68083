#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "diffcap/referee.h"
#include "diffcap/vocab.h"
#include "gradcheck.h"

namespace diffcap {
namespace {

using testing::check_gradients;
using testing::parameter_tensors;
using testing::probe;
using testing::random_tensor;
using testing::randomize;
using testing::TensorD;

RefereeConfig tiny_referee(std::size_t vocab = 9) {
  RefereeConfig c;
  c.visual.channels = {2, 3};
  c.visual.k = 4;
  c.visual.l = 2;
  c.visual.image_size = 8;
  c.vocab_size = vocab;
  c.embed = 5;
  c.kernels = 3;
  c.joint = 6;
  return c;
}

std::vector<std::vector<int>> random_captions(std::mt19937_64& rng, std::size_t n, int vocab,
                                              std::size_t max_len = 6) {
  std::uniform_int_distribution<int> word(Vocabulary::kReserved, vocab - 1);
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::vector<std::vector<int>> out(n);
  for (auto& c : out) {
    c.resize(len(rng));
    for (int& w : c) w = word(rng);
  }
  return out;
}

template <typename T>
Tensor<T> random_images(std::mt19937_64& rng, std::size_t n, std::size_t side) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<T> v(n * 3 * side * side);
  for (T& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>::from({n, 3, side, side}, std::move(v));
}

TEST(JudgmentTest, SoftmaxOfScores) {
  RefereeJudgment tie = judgment_from_scores(2.5, 2.5);
  EXPECT_EQ(tie.p0, 0.5);
  EXPECT_EQ(tie.predicted, 0);
  RefereeJudgment j = judgment_from_scores(std::log(3.0), 0.0);
  EXPECT_NEAR(j.p0, 0.75, 1e-12);
  EXPECT_EQ(j.predicted, 0);
  EXPECT_EQ(judgment_from_scores(0.0, std::log(3.0)).predicted, 1);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d(0.0, 20.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = d(rng), b = d(rng);
    const double p = judgment_from_scores(a, b).p0, q = judgment_from_scores(b, a).p0;
    EXPECT_NEAR(p + q, 1.0, 1e-12);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
    if (std::abs(a - b) < 30) {
      EXPECT_GT(p, 0.0);
      EXPECT_LT(p, 1.0);
    }
  }
}

TEST(VlScoreTest, InnerProduct) {
  TensorD e1 = TensorD::from({4}, {1, 0, 0, 0});
  EXPECT_EQ(vl_score(e1, e1).item(), 1.0);
  EXPECT_EQ(vl_score(e1, TensorD::zeros({4})).item(), 0.0);
  TensorD v = TensorD::from({2, 3}, {1, 2, 3, -1, 0.5, 2});
  TensorD l = TensorD::from({2, 3}, {4, 5, 6, 2, 2, 2});
  TensorD s = vl_score(v, l);
  EXPECT_EQ(s.shape(), (Shape{2}));
  EXPECT_DOUBLE_EQ(s.at(0), 32.0);
  EXPECT_DOUBLE_EQ(s.at(1), 3.0);
  EXPECT_DOUBLE_EQ(vl_score(scale(v, 2.5), l).at(0), 80.0);
  EXPECT_THROW(vl_score(e1, v), ShapeError);
}

TEST(RefereeTest, TowersEmitJointWidth) {
  std::mt19937_64 rng(1);
  RefereeConfig c = tiny_referee();
  c.joint = 1024;
  Referee<float> ref(c, rng);
  for (std::size_t len = 1; len <= 8; ++len) {
    std::vector<std::vector<int>> caps{std::vector<int>(len, 5), std::vector<int>(len, 6)};
    EXPECT_EQ(ref.embed_text(caps, false).shape(), (Shape{2, 1024}));
  }
  EXPECT_EQ(ref.embed_images(random_images<float>(rng, 3, 8)).shape(), (Shape{3, 1024}));
  EXPECT_THROW(ref.embed_text({{}}, false), std::invalid_argument);
  EXPECT_THROW(ref.embed_text({}, false), std::invalid_argument);
}

TEST(RefereeTest, RejectsBadConfig) {
  std::mt19937_64 rng(1);
  RefereeConfig c = tiny_referee(4);
  EXPECT_THROW(Referee<float>(c, rng), std::invalid_argument);
  c = tiny_referee();
  c.widths = {3, 0};
  EXPECT_THROW(Referee<float>(c, rng), std::invalid_argument);
}

TEST(RefereeTest, TextEmbeddingIgnoresPadPlacementAndBatchmates) {
  std::mt19937_64 rng(2);
  Referee<double> ref(tiny_referee(), rng);
  randomize(ref.params(), rng, 1.0);
  const int p = Vocabulary::kPad;
  TensorD a = ref.embed_text({{7, p, p}, {p, 7, p}, {p, p, 7}}, false);
  for (std::size_t i = 0; i < a.dim(1); ++i) {
    EXPECT_NEAR(a.at(i), a.at(a.dim(1) + i), 1e-12);
    EXPECT_NEAR(a.at(i), a.at(2 * a.dim(1) + i), 1e-12);
  }
  TensorD alone = ref.embed_text({{5, 6, 7}}, false);
  TensorD mixed = ref.embed_text({{4}, {5, 6, 7}, {8, 8, 8, 8, 8, 8}}, false);
  for (std::size_t i = 0; i < alone.numel(); ++i) {
    EXPECT_NEAR(alone.at(i), mixed.at(alone.numel() + i), 1e-12);
  }
  TensorD swapped = ref.embed_text({{7, 6, 5}}, false);
  double diff = 0;
  for (std::size_t i = 0; i < alone.numel(); ++i) diff += std::abs(alone.at(i) - swapped.at(i));
  EXPECT_GT(diff, 1e-6);
}

TEST(RefereeTest, JudgeAntisymmetryTiesAndDeterminism) {
  std::mt19937_64 rng(4);
  Referee<float> ref(tiny_referee(), rng);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<float> imgs = random_images<float>(rng, 2, 8);
    Tensor<float> a = reshape(slice(imgs, 0, 0, 1), {3, 8, 8});
    Tensor<float> b = reshape(slice(imgs, 0, 1, 1), {3, 8, 8});
    auto cap = random_captions(rng, 1, 9).front();
    RefereeJudgment ab = ref.judge(a, b, cap), ba = ref.judge(b, a, cap);
    EXPECT_NEAR(ab.p0 + ba.p0, 1.0, 1e-6);
    EXPECT_EQ(ab.s1, ba.s2);
    RefereeJudgment again = ref.judge(a, b, cap);
    EXPECT_EQ(again.p0, ab.p0);
    RefereeJudgment same = ref.judge(a, a, cap);
    EXPECT_EQ(same.p0, 0.5);
    EXPECT_EQ(same.predicted, 0);
  }
}

TEST(RefereeTest, PositiveTextScalingKeepsPrediction) {
  std::mt19937_64 rng(5);
  Referee<double> ref(tiny_referee(), rng);
  randomize(ref.params(), rng, 1.0);
  NoGradGuard guard;
  for (int trial = 0; trial < 30; ++trial) {
    TensorD v = ref.embed_images(random_images<double>(rng, 2, 8));
    TensorD l = ref.embed_text(random_captions(rng, 1, 9), false);
    TensorD v1 = slice(v, 0, 0, 1), v2 = slice(v, 0, 1, 1);
    const int base = judgment_from_scores(vl_score(v1, l).item(), vl_score(v2, l).item()).predicted;
    for (double c : {1e-3, 0.5, 7.0, 1e3}) {
      TensorD lc = scale(l, c);
      EXPECT_EQ(judgment_from_scores(vl_score(v1, lc).item(), vl_score(v2, lc).item()).predicted,
                base);
    }
  }
}

TEST(RefereeLossTest, NllAgreesWithJudgmentAndIsBounded) {
  std::mt19937_64 rng(6);
  RefereeConfig c = tiny_referee();
  Referee<double> ref(c, rng);
  randomize(ref.params(), rng, 0.5);
  TensorD a = random_images<double>(rng, 4, 8), b = random_images<double>(rng, 4, 8);
  auto caps = random_captions(rng, 4, 9);
  std::vector<int> labels{0, 1, 1, 0};
  auto judged = ref.judge_batch(a, b, caps);
  double expected = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    expected -= std::log(labels[i] == 0 ? judged[i].p0 : 1 - judged[i].p0);
  }
  const double loss = ref.loss(a, b, caps, labels, false).item();
  EXPECT_NEAR(loss, expected / 4, 1e-9);
  EXPECT_GE(loss, 0.0);
  EXPECT_NEAR(ref.loss(a, a, caps, labels, false).item(), std::log(2.0), 1e-12);
  EXPECT_THROW(ref.loss(a, b, caps, {0, 1, 2, 0}, false), std::invalid_argument);
  EXPECT_THROW(ref.loss(a, b, caps, {0, 1}, false), std::invalid_argument);

  c.linear_objective = true;
  std::mt19937_64 rng2(6);
  Referee<double> lin(c, rng2);
  EXPECT_NEAR(lin.loss(a, a, caps, labels, false).item(), 0.5, 1e-12);
}

TEST(RefereeLossTest, SaturatedCorrectScoreDrivesLossToZero) {
  const double big = 40.0;
  RefereeJudgment j = judgment_from_scores(big, -big);
  EXPECT_LT(-std::log(j.p0), 1e-30);
  TensorD s = TensorD::from({1, 2}, {big, -big});
  const int y = 0;
  EXPECT_LT(-gather_rows(log_softmax(s, 1), std::span<const int>(&y, 1)).item(), 1e-30);
}

TEST(RefereeGradientTest, TowersAndLossMatchFiniteDifferences) {
  for (int instance = 0; instance < 20; ++instance) {
    std::mt19937_64 rng(300 + instance);
    RefereeConfig c = tiny_referee();
    Referee<double> ref(c, rng);
    randomize(ref.params(), rng, 0.7);
    TensorD a = random_tensor(rng, {3, 3, 8, 8});
    TensorD b = random_tensor(rng, {3, 3, 8, 8});
    auto caps = random_captions(rng, 3, 9, 4);
    std::vector<int> labels{0, 1, 0};
    std::vector<TensorD> wrt = parameter_tensors(ref.params());
    wrt.push_back(a);
    wrt.push_back(b);
    auto loss = [&] { return ref.loss(a, b, caps, labels, true); };
    auto result = check_gradients(loss, wrt, 1e-5, 24);
    EXPECT_LT(result.max_rel_error, 1e-3) << "loss instance " << instance;
    auto text = [&] { return probe(ref.embed_text(caps, true), 11); };
    result = check_gradients(text, parameter_tensors(ref.params()), 1e-5, 24);
    EXPECT_LT(result.max_rel_error, 1e-3) << "text instance " << instance;
    auto visual = [&] { return probe(ref.embed_images(a), 12); };
    result = check_gradients(visual, {a}, 1e-5, 48);
    EXPECT_LT(result.max_rel_error, 1e-3) << "visual instance " << instance;
  }
}

TEST(RefereeAccuracyTest, UntrainedIsNearChance) {
  std::mt19937_64 rng(7);
  Referee<float> ref(tiny_referee(), rng);
  const std::size_t n = 1200;
  Tensor<float> a = random_images<float>(rng, n, 8), b = random_images<float>(rng, n, 8);
  auto caps = random_captions(rng, n, 9);
  RefereeEvaluation eval = referee_accuracy(ref, a, b, caps, 11);
  EXPECT_NEAR(eval.accuracy, 0.5, 0.05);
  ASSERT_EQ(eval.records.size(), n);
  EXPECT_EQ(referee_accuracy(ref, a, b, caps, 11).accuracy, eval.accuracy);
  std::size_t ones = 0;
  for (const auto& r : eval.records) ones += r.truth;
  EXPECT_NEAR(static_cast<double>(ones) / n, 0.5, 0.05);
}

TEST(RefereeAccuracyTest, IdenticalPairsScoreTheCoinRate) {
  std::mt19937_64 rng(8);
  Referee<float> ref(tiny_referee(), rng);
  const std::size_t n = 400;
  Tensor<float> a = random_images<float>(rng, n, 8);
  auto caps = random_captions(rng, n, 9);
  RefereeEvaluation eval = referee_accuracy(ref, a, a, caps, 3, 0, 64);
  std::size_t zeros = 0;
  for (const auto& r : eval.records) {
    EXPECT_EQ(r.judgment.predicted, 0);
    zeros += r.truth == 0;
  }
  EXPECT_DOUBLE_EQ(eval.accuracy, static_cast<double>(zeros) / n);
  EXPECT_NEAR(eval.accuracy, 0.5, 0.08);
  EXPECT_THROW(referee_accuracy(ref, a, a, {}, 3), std::invalid_argument);
}

TEST(RefereeTest, TrainingModeUpdatesOnlyBufferStatistics) {
  std::mt19937_64 rng(9);
  Referee<float> ref(tiny_referee(), rng);
  ASSERT_EQ(ref.params().buffers().size(), 2u);
  const auto before = ref.params().buffers()[0].tensor.values();
  ref.embed_text(random_captions(rng, 4, 9), true);
  EXPECT_NE(ref.params().buffers()[0].tensor.values(), before);
  EXPECT_THROW(ref.embed_text(random_captions(rng, 1, 9), true), std::exception);
}

}  // namespace
}  // namespace diffcap
