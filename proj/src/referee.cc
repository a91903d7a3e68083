#include "diffcap/referee.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "diffcap/vocab.h"

namespace diffcap {

RefereeJudgment judgment_from_scores(double s1, double s2) {
  const double d = s1 - s2;
  RefereeJudgment j;
  j.s1 = s1;
  j.s2 = s2;
  j.p0 = d >= 0 ? 1.0 / (1.0 + std::exp(-d)) : 1.0 - 1.0 / (1.0 + std::exp(d));
  j.predicted = j.p0 >= 0.5 ? 0 : 1;
  return j;
}

template <typename T>
Tensor<T> vl_score(const Tensor<T>& v, const Tensor<T>& l) {
  if (v.shape() != l.shape() || v.rank() < 1 || v.rank() > 2) {
    throw ShapeError("vl_score: shapes " + shape_str(v.shape()) + " and " + shape_str(l.shape()));
  }
  return sum(mul(v, l), v.rank() - 1);
}

template <typename T>
Referee<T>::Referee(const RefereeConfig& config, std::mt19937_64& rng)
    : config_(config), visual_(config.visual, rng) {
  const std::size_t V = config_.vocab_size, E = config_.embed, K = config_.kernels,
                    J = config_.joint, k = config_.visual.k;
  if (V <= static_cast<std::size_t>(Vocabulary::kReserved)) {
    throw std::invalid_argument("referee vocabulary must hold at least one non-reserved token");
  }
  if (E == 0 || K == 0 || J == 0 || config_.widths.empty()) {
    throw std::invalid_argument("referee dimensions must be positive");
  }
  params_.merge("visual", visual_.params());
  visual_W_ = params_.add("visual.W", xavier_uniform<T>(rng, {k, J}, k, J));
  visual_b_ = params_.add("visual.b", Tensor<T>::zeros({J}));

  std::normal_distribution<double> emb_dist(0.0, 1.0);
  std::vector<T> emb(V * E);
  for (T& x : emb) x = static_cast<T>(emb_dist(rng));
  for (std::size_t e = 0; e < E; ++e) emb[Vocabulary::kPad * E + e] = T(0);
  embedding_ = params_.add("text.embedding", Tensor<T>::from({V, E}, std::move(emb)));
  for (std::size_t width : config_.widths) {
    if (width == 0) throw std::invalid_argument("referee kernel width must be positive");
    const std::string name = "text.conv" + std::to_string(width);
    conv_w_.push_back(params_.add(name + ".w", he_normal<T>(rng, {K, 1, width, E}, width * E)));
    conv_b_.push_back(params_.add(name + ".b", Tensor<T>::zeros({K})));
  }
  const std::size_t F = K * config_.widths.size();
  bn_gamma_ = params_.add("text.bn.gamma", Tensor<T>::full({F}, T(1)));
  bn_beta_ = params_.add("text.bn.beta", Tensor<T>::zeros({F}));
  bn_stats_ = BatchNormStats<T>::create(F);
  params_.add_buffer("text.bn.running_mean", bn_stats_.running_mean);
  params_.add_buffer("text.bn.running_var", bn_stats_.running_var);
  text_W_ = params_.add("text.W", xavier_uniform<T>(rng, {F, J}, F, J));
  text_b_ = params_.add("text.b", Tensor<T>::zeros({J}));
}

template <typename T>
Tensor<T> Referee<T>::embed_images(const Tensor<T>& images) const {
  return affine(visual_.encode(images).fc, visual_W_, visual_b_);
}

template <typename T>
Tensor<T> Referee<T>::embed_text(const std::vector<std::vector<int>>& captions, bool training) {
  if (captions.empty()) throw std::invalid_argument("embed_text: no captions");
  const std::size_t E = config_.embed, K = config_.kernels;
  std::vector<Tensor<T>> pooled;
  pooled.reserve(captions.size());
  for (const auto& ids : captions) {
    if (ids.empty()) throw std::invalid_argument("embed_text: empty caption");
    const std::size_t L = ids.size();
    Tensor<T> x = reshape(embedding(embedding_, ids, Vocabulary::kPad), {1, 1, L, E});
    std::vector<Tensor<T>> parts;
    for (std::size_t i = 0; i < conv_w_.size(); ++i) {
      const std::size_t width = config_.widths[i];
      Conv2dOptions opts;
      opts.pad_h = width - 1;
      Tensor<T> maps = conv2d(x, conv_w_[i], conv_b_[i], opts);
      parts.push_back(max_over_axis(reshape(maps, {K, L + width - 1}), 1));
    }
    pooled.push_back(concat(parts, 0));
  }
  BatchNormOptions bn;
  bn.training = training;
  Tensor<T> h = batch_norm(stack(pooled), bn_gamma_, bn_beta_, bn_stats_, bn);
  return affine(h, text_W_, text_b_);
}

template <typename T>
Tensor<T> Referee<T>::scores(const Tensor<T>& images1, const Tensor<T>& images2,
                             const std::vector<std::vector<int>>& captions, bool training) {
  if (images1.rank() != 4 || images1.shape() != images2.shape() ||
      images1.dim(0) != captions.size()) {
    throw ShapeError("referee scores: images " + shape_str(images1.shape()) + " and " +
                     shape_str(images2.shape()) + " for " + std::to_string(captions.size()) +
                     " captions");
  }
  const std::size_t N = captions.size();
  Tensor<T> v = embed_images(concat(images1, images2, 0));
  Tensor<T> l = embed_text(captions, training);
  Tensor<T> s1 = vl_score(slice(v, 0, 0, N), l);
  Tensor<T> s2 = vl_score(slice(v, 0, N, N), l);
  return concat(reshape(s1, {N, 1}), reshape(s2, {N, 1}), 1);
}

template <typename T>
Tensor<T> Referee<T>::loss(const Tensor<T>& images1, const Tensor<T>& images2,
                           const std::vector<std::vector<int>>& captions,
                           const std::vector<int>& labels, bool training) {
  if (labels.size() != captions.size()) {
    throw std::invalid_argument("referee loss: label count differs from caption count");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("referee label must be 0 or 1");
  }
  Tensor<T> s = scores(images1, images2, captions, training);
  if (config_.linear_objective) {
    return sub(Tensor<T>::scalar(T(1)), mean(gather_rows(softmax(s, 1), labels)));
  }
  return scale(mean(gather_rows(log_softmax(s, 1), labels)), T(-1));
}

template <typename T>
std::vector<RefereeJudgment> Referee<T>::judge_batch(const Tensor<T>& images1,
                                                     const Tensor<T>& images2,
                                                     const std::vector<std::vector<int>>& captions) {
  NoGradGuard guard;
  Tensor<T> s = scores(images1, images2, captions, false);
  std::vector<RefereeJudgment> out;
  out.reserve(captions.size());
  for (std::size_t i = 0; i < captions.size(); ++i) {
    out.push_back(judgment_from_scores(static_cast<double>(s.at(2 * i)),
                                       static_cast<double>(s.at(2 * i + 1))));
  }
  return out;
}

template <typename T>
RefereeJudgment Referee<T>::judge(const Tensor<T>& image1, const Tensor<T>& image2,
                                  const std::vector<int>& caption) {
  if (image1.rank() != 3) throw ShapeError("judge expects [3, H, W] images");
  Shape s = image1.shape();
  s.insert(s.begin(), 1);
  return judge_batch(reshape(image1, s), reshape(image2, s), {caption}).front();
}

template <typename T>
RefereeEvaluation referee_accuracy(Referee<T>& referee, const Tensor<T>& images1,
                                   const Tensor<T>& images2,
                                   const std::vector<std::vector<int>>& captions,
                                   std::uint64_t seed, std::uint64_t counter,
                                   std::size_t batch_size) {
  const std::size_t n = captions.size();
  if (n == 0) throw std::invalid_argument("referee accuracy over an empty set");
  if (images1.rank() != 4 || images1.dim(0) != n || images2.shape() != images1.shape()) {
    throw ShapeError("referee accuracy: images " + shape_str(images1.shape()) + " for " +
                     std::to_string(n) + " captions");
  }
  batch_size = std::max<std::size_t>(batch_size, 1);
  std::mt19937_64 coin = make_rng(seed, SeedStream::kRefereeCoin, counter);
  std::bernoulli_distribution fair(0.5);
  std::vector<int> truth(n);
  for (int& t : truth) t = fair(coin) ? 1 : 0;

  const std::size_t row = images1.numel() / n;
  const auto& a = images1.values();
  const auto& b = images2.values();
  RefereeEvaluation eval;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t m = std::min(batch_size, n - start);
    std::vector<T> first, second;
    first.reserve(m * row);
    second.reserve(m * row);
    for (std::size_t i = start; i < start + m; ++i) {
      const auto& x = truth[i] == 0 ? a : b;
      const auto& y = truth[i] == 0 ? b : a;
      first.insert(first.end(), x.begin() + i * row, x.begin() + (i + 1) * row);
      second.insert(second.end(), y.begin() + i * row, y.begin() + (i + 1) * row);
    }
    Shape s = images1.shape();
    s[0] = m;
    std::vector<std::vector<int>> caps(captions.begin() + start, captions.begin() + start + m);
    auto judged = referee.judge_batch(Tensor<T>::from(s, std::move(first)),
                                      Tensor<T>::from(s, std::move(second)), caps);
    for (std::size_t i = 0; i < m; ++i) {
      const int t = truth[start + i];
      if (judged[i].predicted == t) ++correct;
      eval.records.push_back({start + i, judged[i], t});
    }
  }
  eval.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return eval;
}

#define DIFFCAP_INSTANTIATE_REFEREE(T)                                                   \
  template Tensor<T> vl_score(const Tensor<T>&, const Tensor<T>&);                      \
  template class Referee<T>;                                                            \
  template RefereeEvaluation referee_accuracy(Referee<T>&, const Tensor<T>&,            \
                                              const Tensor<T>&,                         \
                                              const std::vector<std::vector<int>>&,     \
                                              std::uint64_t, std::uint64_t, std::size_t);

DIFFCAP_INSTANTIATE_REFEREE(float)
DIFFCAP_INSTANTIATE_REFEREE(double)

}  // namespace diffcap
