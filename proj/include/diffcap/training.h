#ifndef DIFFCAP_TRAINING_H_
#define DIFFCAP_TRAINING_H_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffcap/checkpoint.h"
#include "diffcap/config.h"
#include "diffcap/dataset.h"
#include "diffcap/decoder.h"
#include "diffcap/encoder.h"
#include "diffcap/fusion.h"
#include "diffcap/metrics.h"
#include "diffcap/referee.h"
#include "diffcap/vocab.h"

namespace diffcap {

// Non-finite loss or gradient during training.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamOptions {
  double lr = 0.0004;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam update at step t >= 1.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 std::size_t t, const AdamOptions& options);

template <typename T>
class Adam {
 public:
  Adam(std::vector<NamedTensor<T>> params, AdamOptions options);

  // Updates every parameter that requires and holds a gradient. With
  // clip > 0 the gradients are first scaled so their global norm is at most
  // clip. Returns the global norm before clipping.
  double step(double clip = 0);

  std::size_t steps() const { return steps_; }
  void set_steps(std::size_t steps) { steps_ = steps; }
  const std::vector<NamedTensor<T>>& first_moments() const { return m_; }
  const std::vector<NamedTensor<T>>& second_moments() const { return v_; }

 private:
  std::vector<NamedTensor<T>> params_, m_, v_;
  AdamOptions options_;
  std::size_t steps_ = 0;
};

// Siamese encoder, fusion and attention decoder.
template <typename T>
class Generator {
 public:
  Generator(const RunConfig& config, std::size_t vocab_size, std::mt19937_64& rng);

  // [N, 3, S, S] pairs -> annotations [N, d, w].
  Tensor<T> annotations(const Tensor<T>& images1, const Tensor<T>& images2, bool training);
  // Summed over the batch; see Decoder::sequence_nll.
  Tensor<T> nll(const Tensor<T>& images1, const Tensor<T>& images2,
                const std::vector<std::vector<int>>& captions, bool training);
  // Eval mode; images are [3, S, S]. Hypotheses best first.
  std::vector<BeamHypothesis> caption(const Tensor<T>& image1, const Tensor<T>& image2,
                                      std::size_t beam, std::size_t max_len);
  // From precomputed encoder features of one pair.
  std::vector<BeamHypothesis> caption(const FeaturePair<T>& features, std::size_t beam,
                                      std::size_t max_len);

  Encoder<T>& encoder() { return encoder_; }
  Fusion<T>& fusion() { return fusion_; }
  Decoder<T>& decoder() { return decoder_; }
  ParameterStore<T>& params() { return params_; }
  const ParameterStore<T>& params() const { return params_; }

 private:
  std::size_t d_;
  Encoder<T> encoder_;
  Fusion<T> fusion_;
  Decoder<T> decoder_;
  ParameterStore<T> params_;
};

std::vector<int> encode_tokens(const Vocabulary& vocab, const std::vector<std::string>& tokens);
// Word tokens of a hypothesis, stopping at the end token.
TokenSeq decode_tokens(const Vocabulary& vocab, std::span<const int> ids);
// Referee input for a caption; an empty caption reads as a single unknown word.
std::vector<int> referee_ids(const Vocabulary& vocab, const TokenSeq& tokens);

// Decoded pair images by manifest entry.
class PairImages {
 public:
  PairImages(const Dataset& dataset, std::size_t image_size);

  // Resized to S x S only.
  ImagePair plain(const PairExample& example);
  ImagePair augmented(const PairExample& example, std::uint64_t seed, const AugmentOptions& options);

 private:
  const Dataset& dataset_;
  std::size_t size_;
  ImageCache cache_;
};

// [N, 3, S, S] batches of the first and second images.
std::pair<Tensor<float>, Tensor<float>> stack_pairs(const std::vector<ImagePair>& pairs);

// Shuffled index batches for one epoch. A trailing batch of one example is
// merged into the previous batch.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch);

struct TrainOptions {
  std::string out_dir;  // empty: no files written
  std::string resume;   // checkpoint to continue from
  std::function<void(const std::string&)> on_epoch;  // receives each loss.log line
};

struct TrainSummary {
  std::vector<std::string> log;  // lines written this run
  std::size_t epoch = 0;         // last completed epoch
  std::string checkpoint;        // final checkpoint path, if written
};

TrainSummary train_generator(const RunConfig& config, const Dataset& dataset, const TrainOptions& options);
TrainSummary train_referee(const RunConfig& config, const Dataset& dataset, const TrainOptions& options);

struct LoadedGenerator {
  RunConfig config;
  Vocabulary vocab;
  std::size_t epoch = 0;
  std::unique_ptr<Generator<float>> model;
};

struct LoadedReferee {
  RunConfig config;
  Vocabulary vocab;
  std::size_t epoch = 0;
  std::unique_ptr<Referee<float>> model;
};

// `expected`, when given, must agree on every structural key; a fusion
// mismatch names both tactics.
LoadedGenerator load_generator(const std::string& path, const RunConfig* expected = nullptr);
LoadedReferee load_referee(const std::string& path);

// Beam-search captions (best hypothesis) for each example.
std::vector<TokenSeq> generate_captions(Generator<float>& model, const Vocabulary& vocab,
                                        PairImages& images,
                                        const std::vector<const PairExample*>& examples,
                                        std::size_t beam, std::size_t max_len);

// Referee accuracy of captions[i] against examples[i] with evaluation coins
// (counter 0 of the referee-coin stream).
RefereeEvaluation evaluate_referee(Referee<float>& referee, const Vocabulary& vocab,
                                   PairImages& images,
                                   const std::vector<const PairExample*>& examples,
                                   const std::vector<TokenSeq>& captions, std::uint64_t seed);

}  // namespace diffcap

#endif  // DIFFCAP_TRAINING_H_
