#ifndef DIFFCAP_COMMANDS_H_
#define DIFFCAP_COMMANDS_H_

#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffcap/config.h"
#include "diffcap/metrics.h"
#include "diffcap/training.h"

namespace diffcap {

// Bad flags, paths or inputs: exit code 1. Everything else that escapes a
// command is a runtime failure: exit code 2.
class UserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthOptions {
  std::string out;
  std::size_t pairs = 200;
  std::uint64_t seed = 1;
  std::size_t size = 64;
  bool force = false;
};
void cmd_synth(const SynthOptions& options, std::ostream& log);

enum class TrainTarget { kGenerator, kReferee };

struct TrainCommand {
  RunConfig config;
  std::string data;
  std::string out;
  TrainTarget target = TrainTarget::kGenerator;
  std::string resume;
};
TrainSummary cmd_train(const TrainCommand& command, std::ostream& log);

struct CaptionOptions {
  std::string checkpoint;
  std::string img1, img2;
  std::string features;
  std::size_t beam = 10;
  std::size_t nbest = 5;
  std::optional<std::size_t> max_len;  // checkpoint's value when unset
};
// Prints the best caption, then "rank<TAB>log_prob<TAB>caption" lines.
std::vector<BeamHypothesis> cmd_caption(const CaptionOptions& options, std::ostream& out);

struct EvaluateOptions {
  std::string checkpoint;  // generator; may be empty with ground_truth
  std::string data;
  std::string split = "test";  // train, val, test or heldout (val then test)
  std::string referee_checkpoint;
  std::string out;  // metrics.txt and judgments.tsv; empty writes nothing
  bool ground_truth = false;  // score the reference captions themselves
  std::optional<std::size_t> beam;
};

struct EvaluationResult {
  MetricReport report;
  std::optional<double> referee_accuracy;
  std::vector<TokenSeq> candidates;
};
EvaluationResult cmd_evaluate(const EvaluateOptions& options, std::ostream& out);

struct JudgeOptions {
  std::string referee_checkpoint;
  std::string img1, img2;
  std::string caption;
};
// Prints "s1=.. s2=.. p0=.. predicted=.." for one pair and caption.
RefereeJudgment cmd_judge(const JudgeOptions& options, std::ostream& out);

struct AblationRow {
  FusionTactic tactic;
  double final_loss = 0;
  double bleu1 = 0;
  double referee_accuracy = 0;
};

struct AblationResult {
  double ground_truth_accuracy = 0;
  std::vector<AblationRow> rows;
  std::string table;
};
// Trains one referee on ground-truth captions, then one generator per
// tactic under the same seed, and scores held-out captions of each.
AblationResult cmd_ablate(const RunConfig& config, const std::string& data, const std::string& out,
                          std::ostream& log);

// Held-out or named split of a manifest; throws UserError when empty.
std::vector<const PairExample*> select_split(const Dataset& dataset, const std::string& split);

}  // namespace diffcap

#endif  // DIFFCAP_COMMANDS_H_
