#include "diffcap/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace diffcap {

namespace {

void check_corpus(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references) {
  if (candidates.empty()) throw std::invalid_argument("metric over an empty corpus");
  if (candidates.size() != references.size()) {
    throw std::invalid_argument("metric: " + std::to_string(candidates.size()) +
                                " candidates vs " + std::to_string(references.size()) +
                                " references");
  }
}

std::map<TokenSeq, std::size_t> ngram_counts(const TokenSeq& s, std::size_t n) {
  std::map<TokenSeq, std::size_t> counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    ++counts[TokenSeq(s.begin() + i, s.begin() + i + n)];
  }
  return counts;
}

}  // namespace

double bleu_n(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references,
              int n, bool smoothing) {
  check_corpus(candidates, references);
  if (n < 1 || n > 4) throw std::invalid_argument("bleu order must be in 1..4");
  std::vector<std::size_t> matched(n, 0), total(n, 0);
  std::size_t c = 0, r = 0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    c += candidates[s].size();
    r += references[s].size();
    for (int k = 1; k <= n; ++k) {
      auto ref = ngram_counts(references[s], k);
      for (const auto& [gram, count] : ngram_counts(candidates[s], k)) {
        auto it = ref.find(gram);
        matched[k - 1] += std::min(count, it == ref.end() ? std::size_t{0} : it->second);
        total[k - 1] += count;
      }
    }
  }
  if (c == 0) return 0.0;
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    double p;
    if (smoothing && k > 0) {
      p = (matched[k] + 1.0) / (total[k] + 1.0);
    } else {
      if (matched[k] == 0) return 0.0;
      p = static_cast<double>(matched[k]) / static_cast<double>(total[k]);
    }
    log_sum += std::log(p);
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return bp * std::exp(log_sum / n);
}

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_sentence(const TokenSeq& candidate, const TokenSeq& reference, double beta) {
  const std::size_t lcs = lcs_length(candidate, reference);
  if (lcs == 0) return 0.0;
  const double rec = static_cast<double>(lcs) / reference.size();
  const double prec = static_cast<double>(lcs) / candidate.size();
  const double b2 = beta * beta;
  return (1 + b2) * rec * prec / (rec + b2 * prec);
}

double rouge_l(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references,
               double beta) {
  check_corpus(candidates, references);
  double total = 0.0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    total += rouge_l_sentence(candidates[s], references[s], beta);
  }
  return total / static_cast<double>(candidates.size());
}

MetricReport evaluate_captions(const std::vector<TokenSeq>& candidates,
                               const std::vector<TokenSeq>& references, bool smoothing) {
  MetricReport report;
  for (int n = 1; n <= 4; ++n) report.bleu[n - 1] = bleu_n(candidates, references, n, smoothing);
  report.rouge_l = rouge_l(candidates, references);
  report.sentences = candidates.size();
  for (const auto& c : candidates) report.candidate_tokens += c.size();
  for (const auto& r : references) report.reference_tokens += r.size();
  return report;
}

std::string format_report(const MetricReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%-8s %-8s %-8s %-8s %-8s\n%-8.4f %-8.4f %-8.4f %-8.4f %-8.4f\n", "BLEU-1",
                "BLEU-2", "BLEU-3", "BLEU-4", "ROUGE_L", r.bleu[0], r.bleu[1], r.bleu[2],
                r.bleu[3], r.rouge_l);
  return buf;
}

std::string report_key_values(const MetricReport& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "bleu1=%.6f\nbleu2=%.6f\nbleu3=%.6f\nbleu4=%.6f\nrouge_l=%.6f\nsentences=%zu\n"
                "candidate_tokens=%zu\nreference_tokens=%zu\n",
                r.bleu[0], r.bleu[1], r.bleu[2], r.bleu[3], r.rouge_l, r.sentences,
                r.candidate_tokens, r.reference_tokens);
  return buf;
}

}  // namespace diffcap
