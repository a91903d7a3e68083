#ifndef DIFFCAP_BEAM_SEARCH_H_
#define DIFFCAP_BEAM_SEARCH_H_

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace diffcap {

struct BeamHypothesis {
  std::vector<int> tokens;  // generated tokens, including the end token when terminated
  double log_prob = 0.0;
  bool terminated = false;
};

struct BeamOptions {
  std::size_t beam_size = 10;
  // Maximum number of emitted tokens, the end token included.
  std::size_t max_len = 22;
  int start_id = 1;
  int end_id = 2;
  std::vector<int> banned;
};

// Higher log-probability first; ties go to the shorter (earlier
// terminated) hypothesis, then to the lexicographically smaller sequence.
inline bool beam_before(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

// Length-capped beam search with no length normalization.
//
// Model must provide
//   std::vector<std::vector<double>> step(State& state, const std::vector<int>& last)
// returning next-token log-probabilities for every live row and advancing
// `state` in place, and
//   State select(const State& state, const std::vector<std::size_t>& rows)
// which keeps the given rows in the given order. `initial` holds one row.
template <typename State, typename Model>
std::vector<BeamHypothesis> beam_search(Model& model, State initial, const BeamOptions& options) {
  if (options.beam_size == 0) throw std::invalid_argument("beam_size must be >= 1");
  if (options.max_len == 0) throw std::invalid_argument("max_len must be >= 1");

  struct Candidate {
    BeamHypothesis hyp;
    std::size_t parent;
  };
  std::vector<BeamHypothesis> live{BeamHypothesis{}};
  std::vector<int> last{options.start_id};
  std::vector<BeamHypothesis> finished;
  State state = std::move(initial);

  for (std::size_t t = 0; t < options.max_len && !live.empty(); ++t) {
    const std::vector<std::vector<double>> log_probs = model.step(state, last);
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < live.size(); ++i) {
      for (std::size_t v = 0; v < log_probs[i].size(); ++v) {
        const int token = static_cast<int>(v);
        if (std::find(options.banned.begin(), options.banned.end(), token) !=
            options.banned.end()) {
          continue;
        }
        Candidate c{live[i], i};
        c.hyp.tokens.push_back(token);
        c.hyp.log_prob += log_probs[i][v];
        c.hyp.terminated = token == options.end_id;
        candidates.push_back(std::move(c));
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) { return beam_before(a.hyp, b.hyp); });

    // The top beam_size candidates survive; terminated or length-capped
    // ones leave the beam and the rest are expanded next step.
    std::vector<BeamHypothesis> next;
    std::vector<std::size_t> parents;
    std::vector<int> next_last;
    const bool last_step = t + 1 == options.max_len;
    for (std::size_t r = 0; r < candidates.size() && r < options.beam_size; ++r) {
      auto& c = candidates[r];
      if (c.hyp.terminated || last_step) {
        finished.push_back(std::move(c.hyp));
      } else {
        next_last.push_back(c.hyp.tokens.back());
        parents.push_back(c.parent);
        next.push_back(std::move(c.hyp));
      }
    }
    live = std::move(next);
    last = std::move(next_last);
    if (!live.empty()) state = model.select(state, parents);
  }
  std::sort(finished.begin(), finished.end(), beam_before);
  if (finished.size() > options.beam_size) finished.resize(options.beam_size);
  return finished;
}

}  // namespace diffcap

#endif  // DIFFCAP_BEAM_SEARCH_H_
