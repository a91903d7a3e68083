#ifndef DIFFCAP_TESTS_METRICS_ORACLE_H_
#define DIFFCAP_TESTS_METRICS_ORACLE_H_

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "diffcap/metrics.h"

namespace diffcap::testing {

using Corpus = std::pair<std::vector<TokenSeq>, std::vector<TokenSeq>>;

// Random candidate/reference pairs of 1..8 tokens over a small alphabet.
inline Corpus random_corpus(std::mt19937_64& rng, std::size_t sentences, std::size_t alphabet) {
  std::uniform_int_distribution<std::size_t> len(1, 8), tok(0, alphabet - 1);
  auto sentence = [&] {
    TokenSeq s(len(rng));
    for (auto& t : s) t = "w" + std::to_string(tok(rng));
    return s;
  };
  Corpus c;
  for (std::size_t i = 0; i < sentences; ++i) {
    c.first.push_back(sentence());
    c.second.push_back(sentence());
  }
  return c;
}

inline Corpus relabel(const Corpus& c, int salt) {
  auto rename = [salt](const TokenSeq& s) {
    TokenSeq out;
    for (const auto& t : s) out.push_back("q" + std::to_string(salt) + "_" + t + "_z");
    return out;
  };
  Corpus out;
  for (const auto& s : c.first) out.first.push_back(rename(s));
  for (const auto& s : c.second) out.second.push_back(rename(s));
  return out;
}

// Longest common subsequence by trying every subsequence of `a`.
inline std::size_t lcs_by_enumeration(const TokenSeq& a, const TokenSeq& b) {
  std::size_t best = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << a.size()); ++mask) {
    std::size_t j = 0, taken = 0;
    bool ok = true;
    for (std::size_t i = 0; i < a.size() && ok; ++i) {
      if (!(mask >> i & 1)) continue;
      while (j < b.size() && b[j] != a[i]) ++j;
      if (j == b.size()) ok = false;
      else {
        ++j;
        ++taken;
      }
    }
    if (ok) best = std::max(best, taken);
  }
  return best;
}

}  // namespace diffcap::testing

#endif  // DIFFCAP_TESTS_METRICS_ORACLE_H_
