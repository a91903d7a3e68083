#include "diffcap/decoder.h"

#include <algorithm>
#include <stdexcept>

#include "diffcap/ops.h"
#include "diffcap/vocab.h"

namespace diffcap {

namespace {

// Copies the given leading-axis rows of an untracked tensor.
template <typename T>
Tensor<T> take_rows(const Tensor<T>& x, const std::vector<std::size_t>& rows) {
  const std::size_t row = x.numel() / x.dim(0);
  std::vector<T> out;
  out.reserve(rows.size() * row);
  const auto& v = x.values();
  for (std::size_t r : rows) out.insert(out.end(), v.begin() + r * row, v.begin() + (r + 1) * row);
  Shape s = x.shape();
  s[0] = rows.size();
  return Tensor<T>::from(s, std::move(out));
}

}  // namespace

template <typename T>
Decoder<T>::Decoder(const DecoderConfig& config, std::mt19937_64& rng) : config_(config) {
  const std::size_t V = config_.vocab_size, E = config_.embed, H = config_.hidden,
                    A = config_.attention, w = config_.annotation_width;
  if (V < static_cast<std::size_t>(Vocabulary::kReserved) + 1) {
    throw std::invalid_argument("decoder vocabulary must hold at least one non-reserved token");
  }
  if (E == 0 || H == 0 || A == 0 || w == 0) {
    throw std::invalid_argument("decoder dimensions must be positive");
  }
  std::uniform_real_distribution<double> emb_dist(-0.1, 0.1);
  std::vector<T> emb(V * E);
  for (T& x : emb) x = static_cast<T>(emb_dist(rng));
  embedding_ = params_.add("embedding", Tensor<T>::from({V, E}, std::move(emb)));

  att_W_rho_ = params_.add("att.W_rho", xavier_uniform<T>(rng, {w, A}, w, A));
  att_b_ = params_.add("att.b", Tensor<T>::zeros({A}));
  att_W_h_ = params_.add("att.W_h", xavier_uniform<T>(rng, {H, A}, H, A));
  att_v_ = params_.add("att.v", xavier_uniform<T>(rng, {A, 1}, A, 1));

  lstm_W_x_ = params_.add("lstm.W_x", xavier_uniform<T>(rng, {E + w, 4 * H}, E + w, H));
  lstm_W_h_ = params_.add("lstm.W_h", xavier_uniform<T>(rng, {H, 4 * H}, H, H));
  Tensor<T> bias = Tensor<T>::zeros({4 * H});
  for (std::size_t i = H; i < 2 * H; ++i) bias.data()[i] = T(1);
  lstm_b_ = params_.add("lstm.b", bias);

  out_L_h_ = params_.add("out.L_h", xavier_uniform<T>(rng, {H, E}, H, E));
  out_L_z_ = params_.add("out.L_z", xavier_uniform<T>(rng, {w, E}, w, E));
  out_L_o_ = params_.add("out.L_o", xavier_uniform<T>(rng, {E, V}, E, V));
  out_b_o_ = params_.add("out.b_o", Tensor<T>::zeros({V}));

  init_W_h_ = params_.add("init.W_h", xavier_uniform<T>(rng, {w, H}, w, H));
  init_b_h_ = params_.add("init.b_h", Tensor<T>::zeros({H}));
  init_W_c_ = params_.add("init.W_c", xavier_uniform<T>(rng, {w, H}, w, H));
  init_b_c_ = params_.add("init.b_c", Tensor<T>::zeros({H}));
}

template <typename T>
AttentionContext<T> Decoder<T>::prepare(const Tensor<T>& annotations) const {
  if (annotations.rank() != 3 || annotations.dim(2) != config_.annotation_width) {
    throw ShapeError("decoder expects annotations [B x d x " +
                     std::to_string(config_.annotation_width) + "], got " +
                     shape_str(annotations.shape()));
  }
  const std::size_t B = annotations.dim(0), d = annotations.dim(1);
  Tensor<T> flat = reshape(annotations, {B * d, config_.annotation_width});
  return {annotations, reshape(affine(flat, att_W_rho_, att_b_), {B, d, config_.attention})};
}

template <typename T>
AttentionResult<T> Decoder<T>::attend(const AttentionContext<T>& ctx, const Tensor<T>& h_prev) const {
  const std::size_t B = ctx.annotations.dim(0), d = ctx.annotations.dim(1);
  const std::size_t A = config_.attention, w = config_.annotation_width;
  Tensor<T> hp = reshape(matmul(h_prev, att_W_h_), {B, 1, A});
  Tensor<T> pre = tanh(add(ctx.projected, hp));
  Tensor<T> e = reshape(matmul(reshape(pre, {B * d, A}), att_v_), {B, d});
  Tensor<T> alpha = softmax(e, 1);
  Tensor<T> z = reshape(bmm(reshape(alpha, {B, 1, d}), ctx.annotations), {B, w});
  return {alpha, z};
}

template <typename T>
LstmState<T> Decoder<T>::init_state(const AttentionContext<T>& ctx) const {
  Tensor<T> m = mean(ctx.annotations, 1);
  return {tanh(affine(m, init_W_h_, init_b_h_)), tanh(affine(m, init_W_c_, init_b_c_))};
}

template <typename T>
StepOutput<T> Decoder<T>::step(std::span<const int> y_prev, const LstmState<T>& state,
                               const AttentionContext<T>& ctx) const {
  const std::size_t H = config_.hidden;
  if (y_prev.size() != state.h.dim(0)) {
    throw ShapeError("step: " + std::to_string(y_prev.size()) + " tokens for a state batch of " +
                     std::to_string(state.h.dim(0)));
  }
  Tensor<T> emb = embedding(embedding_, y_prev);
  AttentionResult<T> att = attend(ctx, state.h);
  Tensor<T> gates =
      add(affine(concat(emb, att.z, 1), lstm_W_x_, lstm_b_), matmul(state.h, lstm_W_h_));
  Tensor<T> i = sigmoid(slice(gates, 1, 0, H));
  Tensor<T> f = sigmoid(slice(gates, 1, H, H));
  Tensor<T> g = tanh(slice(gates, 1, 2 * H, H));
  Tensor<T> o = sigmoid(slice(gates, 1, 3 * H, H));
  Tensor<T> c = add(mul(f, state.c), mul(i, g));
  Tensor<T> h = mul(o, tanh(c));
  Tensor<T> deep = add(add(emb, matmul(h, out_L_h_)), matmul(att.z, out_L_z_));
  return {affine(deep, out_L_o_, out_b_o_), {h, c}, att.alpha};
}

template <typename T>
Tensor<T> Decoder<T>::sequence_nll(const Tensor<T>& annotations,
                                   const std::vector<std::vector<int>>& captions) const {
  const std::size_t B = captions.size();
  if (B == 0 || annotations.dim(0) != B) {
    throw ShapeError("sequence_nll: " + std::to_string(B) + " captions for annotations " +
                     shape_str(annotations.shape()));
  }
  std::size_t longest = 0;
  for (const auto& c : captions) {
    if (c.empty()) throw std::invalid_argument("sequence_nll: empty caption");
    longest = std::max(longest, c.size());
  }
  AttentionContext<T> ctx = prepare(annotations);
  LstmState<T> state = init_state(ctx);
  Tensor<T> total;
  std::vector<int> inputs(B), targets(B);
  std::vector<T> mask(B);
  for (std::size_t t = 0; t <= longest; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      const auto& cap = captions[b];
      inputs[b] = t == 0 ? Vocabulary::kStart : (t - 1 < cap.size() ? cap[t - 1] : Vocabulary::kPad);
      targets[b] = t < cap.size() ? cap[t] : (t == cap.size() ? Vocabulary::kEnd : Vocabulary::kPad);
      mask[b] = t <= cap.size() ? T(1) : T(0);
    }
    StepOutput<T> out = step(inputs, state, ctx);
    state = out.state;
    Tensor<T> picked = gather_rows(log_softmax(out.logits, 1), targets);
    Tensor<T> term = sum(mul(picked, Tensor<T>::from({B}, mask)));
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, T(-1));
}

template <typename T>
std::vector<BeamHypothesis> Decoder<T>::beam_search(const Tensor<T>& annotations,
                                                    std::size_t beam_size,
                                                    std::size_t max_len) const {
  if (annotations.rank() != 3 || annotations.dim(0) != 1) {
    throw ShapeError("beam_search expects annotations [1 x d x w], got " +
                     shape_str(annotations.shape()));
  }
  NoGradGuard no_grad;
  struct State {
    LstmState<T> lstm;
    AttentionContext<T> ctx;
  };
  struct Model {
    const Decoder* self;
    std::vector<std::vector<double>> step(State& s, const std::vector<int>& last) {
      StepOutput<T> out = self->step(last, s.lstm, s.ctx);
      s.lstm = out.state;
      Tensor<T> lp = log_softmax(out.logits, 1);
      const std::size_t V = lp.dim(1);
      std::vector<std::vector<double>> rows(last.size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        rows[r].assign(lp.values().begin() + r * V, lp.values().begin() + (r + 1) * V);
      }
      return rows;
    }
    State select(const State& s, const std::vector<std::size_t>& rows) {
      return {{take_rows(s.lstm.h, rows), take_rows(s.lstm.c, rows)},
              {take_rows(s.ctx.annotations, rows), take_rows(s.ctx.projected, rows)}};
    }
  };
  AttentionContext<T> ctx = prepare(annotations);
  State initial{init_state(ctx), ctx};
  Model model{this};
  BeamOptions options;
  options.beam_size = beam_size;
  options.max_len = max_len;
  options.start_id = Vocabulary::kStart;
  options.end_id = Vocabulary::kEnd;
  options.banned = {Vocabulary::kPad, Vocabulary::kStart};
  return diffcap::beam_search(model, std::move(initial), options);
}

template class Decoder<float>;
template class Decoder<double>;

}  // namespace diffcap
