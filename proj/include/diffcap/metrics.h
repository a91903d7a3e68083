#ifndef DIFFCAP_METRICS_H_
#define DIFFCAP_METRICS_H_

#include <array>
#include <string>
#include <vector>

namespace diffcap {

using TokenSeq = std::vector<std::string>;

// Corpus BLEU over n-gram orders 1..n with one reference per candidate:
// BP * exp(mean log p_i), BP = min(1, exp(1 - r/c)). Without smoothing any
// zero precision gives 0; with smoothing orders above 1 use (m+1)/(t+1).
double bleu_n(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references,
              int n, bool smoothing = false);

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b);

// Sentence ROUGE-L F-measure, recall weight beta.
double rouge_l_sentence(const TokenSeq& candidate, const TokenSeq& reference, double beta = 1.2);

// Mean sentence ROUGE-L over the corpus.
double rouge_l(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references,
               double beta = 1.2);

struct MetricReport {
  std::array<double, 4> bleu{};
  double rouge_l = 0.0;
  std::size_t sentences = 0;
  std::size_t candidate_tokens = 0;
  std::size_t reference_tokens = 0;
};

MetricReport evaluate_captions(const std::vector<TokenSeq>& candidates,
                               const std::vector<TokenSeq>& references, bool smoothing = false);

// Aligned human-readable table.
std::string format_report(const MetricReport& report);
// One key=value per line.
std::string report_key_values(const MetricReport& report);

}  // namespace diffcap

#endif  // DIFFCAP_METRICS_H_
