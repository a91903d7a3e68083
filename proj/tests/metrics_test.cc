#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "diffcap/metrics.h"
#include "diffcap/vocab.h"
#include "metrics_oracle.h"

namespace diffcap {
namespace {

TokenSeq T(const char* s) { return tokenize(s); }

TEST(BleuTest, IdentityScoresOne) {
  std::vector<TokenSeq> c{T("is red and is a large circle")};
  for (int n = 1; n <= 4; ++n) EXPECT_DOUBLE_EQ(bleu_n(c, c, n), 1.0);
}

TEST(BleuTest, ClippedUnigramCount) {
  EXPECT_DOUBLE_EQ(bleu_n({T("the the the")}, {T("the cat")}, 1), 1.0 / 3);
  EXPECT_DOUBLE_EQ(bleu_n({T("a a")}, {T("a")}, 1), 0.5);
}

TEST(BleuTest, BrevityPenaltyClosedForm) {
  EXPECT_DOUBLE_EQ(bleu_n({T("a b")}, {T("a b c d")}, 2), std::exp(1.0 - 4.0 / 2.0));
  EXPECT_DOUBLE_EQ(bleu_n({T("a b c")}, {T("a b c d")}, 1), std::exp(1.0 - 4.0 / 3.0));
}

TEST(BleuTest, HandComputedBigram) {
  EXPECT_DOUBLE_EQ(bleu_n({T("a b c d")}, {T("a b d c")}, 2), std::sqrt(1.0 / 3.0));
}

TEST(BleuTest, CorpusPoolsCounts) {
  EXPECT_DOUBLE_EQ(bleu_n({T("a b"), T("c")}, {T("a b"), T("d")}, 1), 2.0 / 3.0);
}

TEST(BleuTest, ZeroPrecisionWithoutSmoothing) {
  EXPECT_EQ(bleu_n({T("a b c")}, {T("a b c")}, 4), 0.0);
  EXPECT_EQ(bleu_n({T("x y")}, {T("a b")}, 1), 0.0);
  EXPECT_DOUBLE_EQ(bleu_n({T("a b c")}, {T("a b c")}, 4, true), 1.0);
  EXPECT_DOUBLE_EQ(bleu_n({T("a x")}, {T("a y")}, 2, true), 0.5);
}

TEST(BleuTest, RejectsEmptyCorpusAndBadOrder) {
  EXPECT_THROW(bleu_n({}, {}, 1), std::invalid_argument);
  EXPECT_THROW(bleu_n({T("a")}, {T("a")}, 5), std::invalid_argument);
  EXPECT_THROW(bleu_n({T("a")}, {}, 1), std::invalid_argument);
}

TEST(RougeTest, IdentityAndDisjoint) {
  EXPECT_DOUBLE_EQ(rouge_l({T("a b c")}, {T("a b c")}), 1.0);
  EXPECT_EQ(rouge_l({T("a b")}, {T("c d")}), 0.0);
}

TEST(RougeTest, HandComputedF) {
  const double b2 = 1.44;
  const double r = 2.0 / 3.0, p = 0.5;
  EXPECT_DOUBLE_EQ(rouge_l({T("a b c d")}, {T("a c e")}), (1 + b2) * r * p / (r + b2 * p));
  EXPECT_DOUBLE_EQ(rouge_l({T("a b")}, {T("a b c d")}), (1 + b2) * 0.5 / (0.5 + b2));
  EXPECT_DOUBLE_EQ(rouge_l({T("a b c"), T("x")}, {T("a b c"), T("y")}), 0.5);
}

TEST(MetricPropertyTest, BleuNonIncreasingInOrder) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    auto corpus = testing::random_corpus(rng, 1 + trial % 8, 3 + trial % 4);
    double prev = 2.0;
    for (int n = 1; n <= 4; ++n) {
      const double b = bleu_n(corpus.first, corpus.second, n);
      EXPECT_LE(b, prev + 1e-15) << "trial " << trial << " n=" << n;
      prev = b;
    }
  }
}

TEST(MetricPropertyTest, InvariantUnderRelabeling) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto corpus = testing::random_corpus(rng, 5, 4);
    auto renamed = testing::relabel(corpus, trial);
    for (int n = 1; n <= 4; ++n) {
      EXPECT_EQ(bleu_n(corpus.first, corpus.second, n),
                bleu_n(renamed.first, renamed.second, n));
    }
    EXPECT_EQ(rouge_l(corpus.first, corpus.second), rouge_l(renamed.first, renamed.second));
  }
}

TEST(MetricPropertyTest, LcsMatchesEnumerationOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    auto corpus = testing::random_corpus(rng, 1, 3);
    const auto& a = corpus.first[0];
    const auto& b = corpus.second[0];
    EXPECT_EQ(lcs_length(a, b), testing::lcs_by_enumeration(a, b));
  }
}

TEST(MetricReportTest, FormatsAllColumns) {
  auto report = evaluate_captions({T("a b c d e")}, {T("a b c d e")});
  EXPECT_EQ(report.bleu[3], 1.0);
  const std::string kv = report_key_values(report);
  EXPECT_NE(kv.find("bleu4=1.000000"), std::string::npos);
  EXPECT_NE(kv.find("rouge_l=1.000000"), std::string::npos);
  EXPECT_NE(format_report(report).find("ROUGE_L"), std::string::npos);
}

}  // namespace
}  // namespace diffcap
