#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "diffcap/ops.h"
#include "gradcheck.h"

namespace diffcap {
namespace {

using testing::check_gradients;
using testing::probe;
using testing::random_off_zero;
using testing::random_tensor;
using TensorD = Tensor<double>;
using TensorF = Tensor<float>;

constexpr int kInstances = 20;
constexpr double kOpTolerance = 1e-4;

TEST(TensorTest, RejectsMismatchedValueCount) {
  EXPECT_THROW(TensorF::from({2, 3}, std::vector<float>(5)), ShapeError);
  EXPECT_THROW(TensorF::zeros({2, 0}), ShapeError);
}

TEST(TensorTest, BackwardOnSumGivesOnes) {
  TensorD x = TensorD::from({3}, {1, 2, 3}, true);
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(TensorTest, BackwardOfSquare) {
  TensorD x = TensorD::scalar(3.0, true);
  backward(mul(x, x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(TensorTest, BackwardRejectsNonScalar) {
  TensorD x = TensorD::from({2}, {1, 2}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), ShapeError);
}

TEST(TensorTest, GradientsAccumulateUntilZeroed) {
  TensorD x = TensorD::scalar(2.0, true);
  backward(scale(x, 3.0));
  backward(scale(x, 3.0));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  x.zero_grad();
  backward(scale(x, 3.0));
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
}

TEST(TensorTest, SharedUseSumsPathGradients) {
  // f = sum(tanh(x) * x + tanh(x)) uses tanh(x) twice; compare with the
  // expanded form computed through separate records.
  std::mt19937_64 rng(7);
  TensorD x = random_tensor(rng, {5});
  TensorD t = tanh(x);
  backward(sum(add(mul(t, x), t)));
  std::vector<double> shared(x.grad().begin(), x.grad().end());
  x.zero_grad();
  backward(add(sum(mul(tanh(x), x)), sum(tanh(x))));
  for (std::size_t i = 0; i < shared.size(); ++i) EXPECT_NEAR(shared[i], x.grad()[i], 1e-14);
}

TEST(TensorTest, NoGradGuardSkipsRecording) {
  TensorD x = TensorD::scalar(1.0, true);
  NoGradGuard guard;
  EXPECT_FALSE(tanh(x).requires_grad());
}

TEST(TensorTest, NonFiniteOutputIsAnError) {
  TensorF big = TensorF::from({1}, {3e38f});
  EXPECT_THROW(scale(big, 10.0f), NumericError);
}

TEST(MatmulTest, IdentityAndSelector) {
  TensorD eye = TensorD::from({2, 2}, {1, 0, 0, 1});
  TensorD m = TensorD::from({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(matmul(eye, m).values(), m.values());
  TensorD sel = TensorD::from({1, 2}, {1, 0});
  TensorD col = TensorD::from({2, 1}, {2, 3});
  EXPECT_EQ(matmul(sel, col).values(), std::vector<double>{2});
}

TEST(MatmulTest, ShapeErrorNamesBothShapes) {
  TensorD a = TensorD::zeros({2, 3});
  TensorD b = TensorD::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
  }
}

TEST(MatmulTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < kInstances; ++i) {
    TensorD a = random_tensor(rng, {3, 4});
    TensorD b = random_tensor(rng, {4, 2});
    auto r = check_gradients([&] { return probe(matmul(a, b), 11); }, {a, b});
    EXPECT_LT(r.max_rel_error, kOpTolerance);
  }
}

TEST(BmmTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < kInstances; ++i) {
    TensorD a = random_tensor(rng, {2, 1, 3});
    TensorD b = random_tensor(rng, {2, 3, 4});
    auto r = check_gradients([&] { return probe(bmm(a, b), 12); }, {a, b});
    EXPECT_LT(r.max_rel_error, kOpTolerance);
  }
}

TEST(AffineTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < kInstances; ++i) {
    TensorD x = random_tensor(rng, {3, 5});
    TensorD w = random_tensor(rng, {5, 4});
    TensorD b = random_tensor(rng, {4});
    auto r = check_gradients([&] { return probe(affine(x, w, b), 13); }, {x, w, b});
    EXPECT_LT(r.max_rel_error, kOpTolerance);
  }
}

TEST(ConcatTest, VectorsAndChannelMaps) {
  TensorD a = TensorD::from({2}, {1, 2});
  TensorD b = TensorD::from({2}, {3, 4});
  EXPECT_EQ(concat(a, b, 0).values(), (std::vector<double>{1, 2, 3, 4}));
  TensorD m1 = TensorD::zeros({2, 3, 3});
  TensorD m2 = TensorD::zeros({2, 3, 3});
  EXPECT_EQ(concat(m1, m2, 0).shape(), (Shape{4, 3, 3}));
  EXPECT_THROW(concat(m1, TensorD::zeros({2, 3, 4}), 0), ShapeError);
}

TEST(ConcatTest, GradientOfSumRoutesOnes) {
  TensorD a = TensorD::from({2, 2}, {1, 2, 3, 4}, true);
  TensorD b = TensorD::from({2, 1}, {5, 6}, true);
  backward(sum(concat(a, b, 1)));
  for (double g : a.grad()) EXPECT_EQ(g, 1.0);
  for (double g : b.grad()) EXPECT_EQ(g, 1.0);
}

TEST(ConcatTest, SliceInvertsConcat) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < kInstances; ++i) {
    std::uniform_int_distribution<int> ext(1, 4);
    const std::size_t axis = static_cast<std::size_t>(ext(rng) % 3);
    Shape sa{2, 3, 2};
    Shape sb = sa;
    sa[axis] = ext(rng);
    sb[axis] = ext(rng);
    TensorD a = random_tensor(rng, sa);
    TensorD b = random_tensor(rng, sb);
    TensorD c = concat(a, b, axis);
    EXPECT_EQ(slice(c, axis, 0, sa[axis]).values(), a.values());
    EXPECT_EQ(slice(c, axis, sa[axis], sb[axis]).values(), b.values());
    auto r = check_gradients([&] { return probe(concat(a, b, axis), 14); }, {a, b});
    EXPECT_LT(r.max_rel_error, kOpTolerance);
  }
}

TEST(ReluTest, ClipsNegativesAndZero) {
  TensorD x = TensorD::from({3}, {-1, 0, 2}, true);
  TensorD y = relu(x);
  EXPECT_EQ(y.values(), (std::vector<double>{0, 0, 2}));
  backward(sum(y));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()),
            (std::vector<double>{0, 0, 1}));
}

TEST(ReluTest, AllNegativeGivesZeroGradient) {
  TensorD x = TensorD::from({3}, {-1, -2, -3}, true);
  backward(sum(relu(x)));
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(ElementwiseTest, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < kInstances; ++i) {
    TensorD x = random_off_zero(rng, {3, 4});
    TensorD y = random_tensor(rng, {3, 4});
    TensorD row = random_tensor(rng, {4});
    TensorD col = random_tensor(rng, {3, 1});
    EXPECT_LT(check_gradients([&] { return probe(relu(x), 21); }, {x}).max_rel_error, kOpTolerance);
    EXPECT_LT(check_gradients([&] { return probe(tanh(x), 22); }, {x}).max_rel_error, kOpTolerance);
    EXPECT_LT(check_gradients([&] { return probe(sigmoid(x), 23); }, {x}).max_rel_error, kOpTolerance);
    EXPECT_LT(check_gradients([&] { return probe(mul(x, y), 24); }, {x, y}).max_rel_error, kOpTolerance);
    EXPECT_LT(check_gradients([&] { return probe(sub(x, row), 25); }, {x, row}).max_rel_error, kOpTolerance);
    EXPECT_LT(check_gradients([&] { return probe(mul(x, col), 26); }, {x, col}).max_rel_error, kOpTolerance);
    EXPECT_LT(check_gradients([&] { return probe(add(row, col), 27); }, {row, col}).max_rel_error, kOpTolerance);
  }
}

TEST(ElementwiseTest, SigmoidAndTanhAtZero) {
  TensorD z = TensorD::scalar(0.0);
  EXPECT_DOUBLE_EQ(sigmoid(z).item(), 0.5);
  EXPECT_DOUBLE_EQ(tanh(z).item(), 0.0);
}

TEST(ReductionTest, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < kInstances; ++i) {
    TensorD x = random_tensor(rng, {2, 3, 4});
    EXPECT_LT(check_gradients([&] { return mean(x); }, {x}).max_rel_error, kOpTolerance);
    EXPECT_LT(check_gradients([&] { return probe(sum(x, 1), 31); }, {x}).max_rel_error, kOpTolerance);
    EXPECT_LT(check_gradients([&] { return probe(mean(x, 2), 32); }, {x}).max_rel_error, kOpTolerance);
    EXPECT_LT(check_gradients([&] { return probe(max_over_axis(x, 1), 33); }, {x}).max_rel_error,
              kOpTolerance);
    EXPECT_LT(check_gradients([&] { return probe(transpose(x), 34); }, {x}).max_rel_error, kOpTolerance);
  }
}

TEST(SoftmaxTest, KnownValues) {
  auto s = softmax(TensorD::from({2}, {0, 0}), 0);
  EXPECT_DOUBLE_EQ(s.at(0), 0.5);
  auto t = softmax(TensorD::from({2}, {std::log(3.0), 0}), 0);
  EXPECT_NEAR(t.at(0), 0.75, 1e-15);
  EXPECT_NEAR(t.at(1), 0.25, 1e-15);
  auto big = softmax(TensorF::from({2}, {1000.0f, 0.0f}), 0);
  EXPECT_FLOAT_EQ(big.at(0), 1.0f);
  EXPECT_GE(big.at(1), 0.0f);
}

TEST(SoftmaxTest, SumsToOneAndGradients) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < kInstances; ++i) {
    TensorD x = random_tensor(rng, {3, 5}, -5, 5);
    for (std::size_t axis : {0u, 1u}) {
      TensorD y = softmax(x, axis);
      TensorD totals = sum(y, axis);
      for (double t : totals.values()) EXPECT_NEAR(t, 1.0, 1e-6);
      for (double v : y.values()) EXPECT_GT(v, 0.0);
      EXPECT_LT(check_gradients([&] { return probe(softmax(x, axis), 41); }, {x}).max_rel_error,
                kOpTolerance);
      EXPECT_LT(check_gradients([&] { return probe(log_softmax(x, axis), 42); }, {x}).max_rel_error,
                kOpTolerance);
    }
  }
}

TEST(Conv2dTest, PointwiseIdentity) {
  std::mt19937_64 rng(9);
  TensorD x = random_tensor(rng, {1, 4, 4}, -1, 1, false);
  TensorD k = TensorD::from({1, 1, 1, 1}, {1.0});
  EXPECT_EQ(conv2d(x, k, TensorD()).values(), x.values());
}

TEST(Conv2dTest, ChannelAverageOfConstantIsConstant) {
  const double c = 2.5;
  TensorD x = TensorD::full({3, 4, 4}, c);
  TensorD k = TensorD::full({1, 3, 1, 1}, 1.0 / 3.0);
  TensorD y = conv2d(x, k, TensorD());
  for (double v : y.values()) EXPECT_NEAR(v, c, 1e-12);
}

TEST(Conv2dTest, OutputGeometry) {
  TensorD x = TensorD::zeros({2, 3, 8, 8});
  TensorD k = TensorD::zeros({5, 3, 3, 3});
  EXPECT_EQ(conv2d(x, k, TensorD(), {2, 1, 1}).shape(), (Shape{2, 5, 4, 4}));
  EXPECT_THROW(conv2d(TensorD::zeros({3, 2, 2}), k, TensorD()), ShapeError);
  EXPECT_THROW(conv2d(TensorD::zeros({4, 8, 8}), k, TensorD()), ShapeError);
}

TEST(Conv2dTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  for (int i = 0; i < kInstances; ++i) {
    TensorD x = random_tensor(rng, {3, 5, 5});
    TensorD k = random_tensor(rng, {2, 3, 3, 3});
    TensorD b = random_tensor(rng, {2});
    auto r = check_gradients([&] { return probe(conv2d(x, k, b, {1, 1, 1}), 51); }, {x, k, b});
    EXPECT_LT(r.max_rel_error, kOpTolerance);
    TensorD xb = random_tensor(rng, {2, 3, 6, 5});
    auto rs = check_gradients([&] { return probe(conv2d(xb, k, b, {2, 1, 0}), 52); }, {xb, k, b});
    EXPECT_LT(rs.max_rel_error, kOpTolerance);
    TensorD k1 = random_tensor(rng, {4, 3, 1, 1});
    auto rp = check_gradients([&] { return probe(conv2d(xb, k1, TensorD()), 53); }, {xb, k1});
    EXPECT_LT(rp.max_rel_error, kOpTolerance);
  }
}

TEST(AvgPoolTest, ConstantAndHandAverage) {
  TensorD seven = TensorD::full({2, 5, 7}, 7.0);
  TensorD pooled = avg_pool2d(seven, 3, 2);
  for (double v : pooled.values()) EXPECT_NEAR(v, 7.0, 1e-12);
  TensorD m = TensorD::from({1, 2, 2}, {1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(avg_pool2d(m, 1, 1).item(), 2.5);
  EXPECT_THROW(avg_pool2d(m, 3, 1), ShapeError);
}

TEST(AvgPoolTest, GlobalPoolIsArithmeticMean) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < kInstances; ++i) {
    TensorD x = random_tensor(rng, {1, 3, 3}, -1, 1, false);
    double total = 0;
    for (double v : x.values()) total += v;
    EXPECT_EQ(avg_pool2d(x, 1, 1).item(), total / 9.0);
  }
}

TEST(AvgPoolTest, GradientSharesOverWindow) {
  TensorD x = TensorD::zeros({1, 4, 4}, true);
  backward(sum(avg_pool2d(x, 2, 2)));
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 0.25);
  std::mt19937_64 rng(12);
  for (int i = 0; i < kInstances; ++i) {
    TensorD y = random_tensor(rng, {2, 3, 7, 5});
    auto r = check_gradients([&] { return probe(avg_pool2d(y, 3, 2), 61); }, {y});
    EXPECT_LT(r.max_rel_error, kOpTolerance);
  }
}

TEST(BatchNormTest, ZeroVarianceChannelGivesBeta) {
  auto stats = BatchNormStats<double>::create(2);
  TensorD x = TensorD::from({3, 2}, {1, 5, 2, 5, 3, 5});
  TensorD gamma = TensorD::full({2}, 1.0);
  TensorD beta = TensorD::from({2}, {0.0, 0.7});
  TensorD y = batch_norm(x, gamma, beta, stats, {});
  for (std::size_t b = 0; b < 3; ++b) EXPECT_DOUBLE_EQ(y.at(b * 2 + 1), 0.7);
}

TEST(BatchNormTest, StandardizedBatchPassesThrough) {
  auto stats = BatchNormStats<double>::create(1);
  TensorD x = TensorD::from({4, 1}, {-1.5, -0.5, 0.5, 1.5});
  // population std of x is sqrt(1.25)
  TensorD xs = scale(x, 1.0 / std::sqrt(1.25));
  TensorD y = batch_norm(xs, TensorD::full({1}, 1.0), TensorD::zeros({1}), stats, {});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y.at(i), xs.at(i), 1e-5);
}

TEST(BatchNormTest, RandomBatchIsStandardized) {
  std::mt19937_64 rng(13);
  auto stats = BatchNormStats<double>::create(3);
  TensorD x = random_tensor(rng, {8, 3, 2, 2}, -3, 5, false);
  TensorD y = batch_norm(x, TensorD::full({3}, 1.0), TensorD::zeros({3}), stats, {});
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t b = 0; b < 8; ++b)
      for (std::size_t i = 0; i < 4; ++i) m += y.at((b * 3 + c) * 4 + i);
    m /= 32;
    for (std::size_t b = 0; b < 8; ++b)
      for (std::size_t i = 0; i < 4; ++i) v += std::pow(y.at((b * 3 + c) * 4 + i) - m, 2);
    v /= 32;
    EXPECT_NEAR(m, 0.0, 1e-4);
    EXPECT_NEAR(v, 1.0, 1e-4);
  }
}

TEST(BatchNormTest, RunningStatsAndEvalMode) {
  auto stats = BatchNormStats<double>::create(1);
  TensorD x = TensorD::from({2, 1}, {1.0, 3.0});
  batch_norm(x, TensorD::full({1}, 1.0), TensorD::zeros({1}), stats, {});
  EXPECT_NEAR(stats.running_mean.at(0), 0.2, 1e-12);
  // unbiased variance of {1, 3} is 2
  EXPECT_NEAR(stats.running_var.at(0), 0.9 + 0.1 * 2.0, 1e-12);
  BatchNormOptions eval;
  eval.training = false;
  TensorD y = batch_norm(TensorD::from({1, 1}, {2.0}), TensorD::full({1}, 1.0),
                         TensorD::zeros({1}), stats, eval);
  EXPECT_NEAR(y.item(), (2.0 - 0.2) / std::sqrt(1.1 + 1e-5), 1e-12);
}

TEST(BatchNormTest, SingleExampleBatchRejectedInTraining) {
  auto stats = BatchNormStats<double>::create(2);
  EXPECT_THROW(batch_norm(TensorD::zeros({1, 2}), TensorD::full({2}, 1.0), TensorD::zeros({2}),
                          stats, {}),
               std::invalid_argument);
}

TEST(BatchNormTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(14);
  for (int i = 0; i < kInstances; ++i) {
    auto stats = BatchNormStats<double>::create(3);
    TensorD x = random_tensor(rng, {4, 3, 2, 2});
    TensorD gamma = random_tensor(rng, {3}, 0.5, 1.5);
    TensorD beta = random_tensor(rng, {3});
    auto r = check_gradients([&] { return probe(batch_norm(x, gamma, beta, stats, {}), 71); },
                             {x, gamma, beta});
    EXPECT_LT(r.max_rel_error, kOpTolerance);
    BatchNormOptions eval;
    eval.training = false;
    auto re = check_gradients([&] { return probe(batch_norm(x, gamma, beta, stats, eval), 72); },
                              {x, gamma, beta});
    EXPECT_LT(re.max_rel_error, kOpTolerance);
  }
}

TEST(BilinearFormTest, HandContraction) {
  EXPECT_EQ(bilinear_form(TensorD::from({2}, {2, 3}), TensorD::zeros({2, 2, 2}),
                          TensorD::from({2}, {5, 7}))
                .values(),
            (std::vector<double>{0, 0}));
  std::vector<double> m(8, 0.0);
  m[0 * 4 + 0 * 2 + 0] = 1.0;  // M[0,0,0]
  m[1 * 4 + 1 * 2 + 1] = 1.0;  // M[1,1,1]
  auto out = bilinear_form(TensorD::from({2}, {2, 3}), TensorD::from({2, 2, 2}, m),
                           TensorD::from({2}, {5, 7}));
  EXPECT_EQ(out.values(), (std::vector<double>{10, 21}));
  EXPECT_THROW(bilinear_form(TensorD::zeros({2}), TensorD::zeros({3, 3, 3}), TensorD::zeros({2})),
               ShapeError);
}

TEST(BilinearFormTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(15);
  for (int i = 0; i < kInstances; ++i) {
    TensorD u = random_tensor(rng, {2, 4});
    TensorD v = random_tensor(rng, {2, 4});
    TensorD m = random_tensor(rng, {4, 4, 4});
    auto r = check_gradients([&] { return probe(bilinear_form(u, m, v), 81); }, {u, m, v});
    EXPECT_LT(r.max_rel_error, kOpTolerance);
  }
}

TEST(EmbeddingTest, LookupAndPadding) {
  TensorD table = TensorD::from({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  std::vector<int> ids{0, 2, 0};
  TensorD e = embedding<double>(table, ids);
  EXPECT_EQ(e.shape(), (Shape{3, 2}));
  EXPECT_EQ(e.at(0), 1.0);
  EXPECT_EQ(e.at(1), 2.0);
  backward(sum(e));
  EXPECT_EQ(table.grad()[0], 2.0);
  EXPECT_EQ(table.grad()[2], 0.0);
  table.zero_grad();
  TensorD padded = embedding<double>(table, ids, 0);
  EXPECT_EQ(padded.at(0), 0.0);
  backward(sum(padded));
  EXPECT_EQ(table.grad()[0], 0.0);
  std::vector<int> bad{3};
  EXPECT_THROW(embedding<double>(table, bad), std::out_of_range);
}

TEST(EmbeddingTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(16);
  for (int i = 0; i < kInstances; ++i) {
    TensorD table = random_tensor(rng, {5, 3});
    std::vector<int> ids{1, 4, 1, 0};
    auto r = check_gradients([&] { return probe(embedding<double>(table, ids), 91); }, {table});
    EXPECT_LT(r.max_rel_error, kOpTolerance);
    TensorD x = random_tensor(rng, {4, 5});
    std::vector<int> pick{0, 4, 2, 2};
    auto rg = check_gradients([&] { return probe(gather_rows<double>(x, pick), 92); }, {x});
    EXPECT_LT(rg.max_rel_error, kOpTolerance);
  }
}

}  // namespace
}  // namespace diffcap
