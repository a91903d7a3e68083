#ifndef DIFFCAP_DECODER_H_
#define DIFFCAP_DECODER_H_

#include <random>
#include <span>
#include <vector>

#include "diffcap/beam_search.h"
#include "diffcap/nn.h"
#include "diffcap/tensor.h"

namespace diffcap {

struct DecoderConfig {
  std::size_t vocab_size = 0;
  std::size_t embed = 512;
  std::size_t hidden = 512;
  std::size_t attention = 512;
  std::size_t annotation_width = 0;  // w
};

template <typename T>
struct LstmState {
  Tensor<T> h, c;  // [B, hidden]
};

// Annotations [B, d, w] with their attention projection [B, d, attention]
// computed once per sequence.
template <typename T>
struct AttentionContext {
  Tensor<T> annotations;
  Tensor<T> projected;
};

template <typename T>
struct AttentionResult {
  Tensor<T> alpha;  // [B, d]
  Tensor<T> z;      // [B, w]
};

template <typename T>
struct StepOutput {
  Tensor<T> logits;  // [B, V]
  LstmState<T> state;
  Tensor<T> alpha;
};

// Soft-attention LSTM with deep-output logits
//   logits = (E y_prev + h' L_h + z L_z) L_o + b_o.
template <typename T>
class Decoder {
 public:
  Decoder(const DecoderConfig& config, std::mt19937_64& rng);

  AttentionContext<T> prepare(const Tensor<T>& annotations) const;
  // e_i = v . tanh(W_rho rho_i + W_h h_prev + b), alpha = softmax(e), z = sum alpha_i rho_i.
  AttentionResult<T> attend(const AttentionContext<T>& ctx, const Tensor<T>& h_prev) const;
  // h0, c0 = tanh of affine maps of the mean annotation.
  LstmState<T> init_state(const AttentionContext<T>& ctx) const;
  StepOutput<T> step(std::span<const int> y_prev, const LstmState<T>& state,
                     const AttentionContext<T>& ctx) const;

  // Teacher-forced negative log-likelihood summed over the batch. Each
  // caption holds the word ids only; start and end framing is added here.
  // The end token is scored, padding is not.
  Tensor<T> sequence_nll(const Tensor<T>& annotations,
                         const std::vector<std::vector<int>>& captions) const;

  // annotations is [1, d, w]. pad and start are never proposed.
  std::vector<BeamHypothesis> beam_search(const Tensor<T>& annotations, std::size_t beam_size,
                                          std::size_t max_len) const;

  const DecoderConfig& config() const { return config_; }
  ParameterStore<T>& params() { return params_; }
  const ParameterStore<T>& params() const { return params_; }

 private:
  DecoderConfig config_;
  ParameterStore<T> params_;
  Tensor<T> embedding_;
  Tensor<T> att_W_rho_, att_b_, att_W_h_, att_v_;
  Tensor<T> lstm_W_x_, lstm_W_h_, lstm_b_;
  Tensor<T> out_L_h_, out_L_z_, out_L_o_, out_b_o_;
  Tensor<T> init_W_h_, init_b_h_, init_W_c_, init_b_c_;
};

}  // namespace diffcap

#endif  // DIFFCAP_DECODER_H_
