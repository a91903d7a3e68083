#ifndef DIFFCAP_REFEREE_H_
#define DIFFCAP_REFEREE_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "diffcap/encoder.h"
#include "diffcap/nn.h"
#include "diffcap/ops.h"
#include "diffcap/tensor.h"

namespace diffcap {

struct RefereeConfig {
  EncoderConfig visual;
  std::size_t vocab_size = 0;
  std::size_t embed = 128;
  std::vector<std::size_t> widths{3, 4, 5};
  std::size_t kernels = 100;
  std::size_t joint = 1024;
  // Train by maximizing the mean correct-class probability instead of
  // minimizing its negative log.
  bool linear_objective = false;
};

struct RefereeJudgment {
  double s1 = 0, s2 = 0;
  double p0 = 0.5;     // probability the caption describes the first image shown
  int predicted = 0;   // 0 iff p0 >= 0.5
};

// Two-way softmax of (s1, s2), evaluated so that swapping the scores gives
// exactly 1 - p0.
RefereeJudgment judgment_from_scores(double s1, double s2);

// Row-wise inner product of [N, D] embeddings -> [N]. Also accepts [D].
template <typename T>
Tensor<T> vl_score(const Tensor<T>& v, const Tensor<T>& l);

template <typename T>
class Referee {
 public:
  Referee(const RefereeConfig& config, std::mt19937_64& rng);

  // [N, 3, H, W] -> [N, joint]
  Tensor<T> embed_images(const Tensor<T>& images) const;
  // Each caption is convolved at its own length with w - 1 zero rows on both
  // sides per kernel width, max-pooled over time, batch-normalized and
  // mapped to [N, joint]. Training mode needs at least two captions.
  Tensor<T> embed_text(const std::vector<std::vector<int>>& captions, bool training);

  // [N, 2] scores of the caption against each presented image.
  Tensor<T> scores(const Tensor<T>& images1, const Tensor<T>& images2,
                   const std::vector<std::vector<int>>& captions, bool training);

  // Mean over the batch of -log p(y) (or 1 - p(y) under the linear
  // objective). labels[i] = 0 means caption i describes images1[i].
  Tensor<T> loss(const Tensor<T>& images1, const Tensor<T>& images2,
                 const std::vector<std::vector<int>>& captions, const std::vector<int>& labels,
                 bool training);

  // Eval mode, no gradient recording. Images are [3, H, W].
  RefereeJudgment judge(const Tensor<T>& image1, const Tensor<T>& image2,
                        const std::vector<int>& caption);
  std::vector<RefereeJudgment> judge_batch(const Tensor<T>& images1, const Tensor<T>& images2,
                                           const std::vector<std::vector<int>>& captions);

  const RefereeConfig& config() const { return config_; }
  ParameterStore<T>& params() { return params_; }
  const ParameterStore<T>& params() const { return params_; }

 private:
  RefereeConfig config_;
  Encoder<T> visual_;
  ParameterStore<T> params_;
  Tensor<T> visual_W_, visual_b_;
  Tensor<T> embedding_;
  std::vector<Tensor<T>> conv_w_, conv_b_;
  Tensor<T> bn_gamma_, bn_beta_;
  BatchNormStats<T> bn_stats_;
  Tensor<T> text_W_, text_b_;
};

struct JudgmentRecord {
  std::size_t index = 0;  // position in the evaluated list
  RefereeJudgment judgment;
  int truth = 0;
};

struct RefereeEvaluation {
  double accuracy = 0;
  std::vector<JudgmentRecord> records;
};

// images1[i] is the image captions[i] describes. A fair coin drawn from the
// referee-coin stream (seed, counter) decides per pair whether the two
// images are presented swapped; the prediction is correct when it names the
// described image's position. Throws std::invalid_argument when empty.
template <typename T>
RefereeEvaluation referee_accuracy(Referee<T>& referee, const Tensor<T>& images1,
                                   const Tensor<T>& images2,
                                   const std::vector<std::vector<int>>& captions,
                                   std::uint64_t seed, std::uint64_t counter = 0,
                                   std::size_t batch_size = 32);

}  // namespace diffcap

#endif  // DIFFCAP_REFEREE_H_
