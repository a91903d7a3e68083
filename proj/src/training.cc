#include "diffcap/training.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "diffcap/ops.h"

namespace fs = std::filesystem;

namespace diffcap {

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 std::size_t t, const AdamOptions& o) {
  if (param.size() != grad.size() || m.size() != param.size() || v.size() != param.size()) {
    throw ShapeError("adam_update: parameter, gradient and moment sizes differ");
  }
  if (t == 0) throw std::invalid_argument("adam_update: step must be >= 1");
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = o.beta1 * m[i] + (1.0 - o.beta1) * g;
    const double vi = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    param[i] = static_cast<T>(param[i] - o.lr * (mi / c1) / (std::sqrt(vi / c2) + o.epsilon));
  }
}

template <typename T>
Adam<T>::Adam(std::vector<NamedTensor<T>> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.push_back({p.name, Tensor<T>::zeros(p.tensor.shape())});
    v_.push_back({p.name, Tensor<T>::zeros(p.tensor.shape())});
  }
}

template <typename T>
double Adam<T>::step(double clip) {
  double sq = 0;
  for (const auto& p : params_) {
    if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw TrainingError("non-finite gradient norm");
  const double factor = clip > 0 && norm > clip ? clip / norm : 1.0;
  ++steps_;
  std::vector<T> scaled;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<T> p = params_[i].tensor;
    if (!p.requires_grad() || !p.has_grad()) continue;
    std::span<const T> g = p.grad();
    if (factor != 1.0) {
      scaled.assign(g.begin(), g.end());
      for (T& x : scaled) x = static_cast<T>(x * factor);
      g = scaled;
    }
    Tensor<T> m = m_[i].tensor, v = v_[i].tensor;
    adam_update<T>(p.data(), g, m.data(), v.data(), steps_, options_);
  }
  return norm;
}

template <typename T>
Generator<T>::Generator(const RunConfig& config, std::size_t vocab_size, std::mt19937_64& rng)
    : d_(config.annotation_count()),
      encoder_(config.encoder_config(), rng),
      fusion_(config.fusion_config(), rng),
      decoder_(config.decoder_config(vocab_size), rng) {
  params_.merge("encoder", encoder_.params());
  params_.merge("fusion", fusion_.params());
  params_.merge("decoder", decoder_.params());
}

template <typename T>
Tensor<T> Generator<T>::annotations(const Tensor<T>& images1, const Tensor<T>& images2, bool training) {
  return diffcap::annotations(fusion_.fuse(encoder_.encode_pair(images1, images2), training), d_);
}

template <typename T>
Tensor<T> Generator<T>::nll(const Tensor<T>& images1, const Tensor<T>& images2,
                            const std::vector<std::vector<int>>& captions, bool training) {
  return decoder_.sequence_nll(annotations(images1, images2, training), captions);
}

template <typename T>
std::vector<BeamHypothesis> Generator<T>::caption(const Tensor<T>& image1, const Tensor<T>& image2,
                                                  std::size_t beam, std::size_t max_len) {
  NoGradGuard guard;
  Shape s = image1.shape();
  s.insert(s.begin(), 1);
  return decoder_.beam_search(annotations(reshape(image1, s), reshape(image2, s), false), beam, max_len);
}

template <typename T>
std::vector<BeamHypothesis> Generator<T>::caption(const FeaturePair<T>& features, std::size_t beam,
                                                  std::size_t max_len) {
  NoGradGuard guard;
  if (features.batch() != 1) throw ShapeError("caption expects features of a single pair");
  return decoder_.beam_search(diffcap::annotations(fusion_.fuse(features, false), d_), beam, max_len);
}

template class Adam<float>;
template class Adam<double>;
template class Generator<float>;
template class Generator<double>;
template void adam_update(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                          std::size_t, const AdamOptions&);
template void adam_update(std::span<double>, std::span<const double>, std::span<double>,
                          std::span<double>, std::size_t, const AdamOptions&);

std::vector<int> encode_tokens(const Vocabulary& vocab, const std::vector<std::string>& tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.id(t));
  return ids;
}

TokenSeq decode_tokens(const Vocabulary& vocab, std::span<const int> ids) {
  TokenSeq out;
  for (int id : ids) {
    if (id == Vocabulary::kEnd) break;
    if (id == Vocabulary::kPad || id == Vocabulary::kStart) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

std::vector<int> referee_ids(const Vocabulary& vocab, const TokenSeq& tokens) {
  if (tokens.empty()) return {Vocabulary::kUnk};
  return encode_tokens(vocab, tokens);
}

PairImages::PairImages(const Dataset& dataset, std::size_t image_size)
    : dataset_(dataset), size_(image_size) {}

ImagePair PairImages::plain(const PairExample& example) {
  const Image& a = cache_.get(dataset_.resolve(example.image1));
  const Image& b = cache_.get(dataset_.resolve(example.image2));
  return {resize_bilinear(a, size_, size_), resize_bilinear(b, size_, size_)};
}

ImagePair PairImages::augmented(const PairExample& example, std::uint64_t seed,
                                const AugmentOptions& options) {
  ImagePair raw{cache_.get(dataset_.resolve(example.image1)), cache_.get(dataset_.resolve(example.image2))};
  AugmentOptions o = options;
  o.output_size = size_;
  return augment(raw, example, seed, o);
}

std::pair<Tensor<float>, Tensor<float>> stack_pairs(const std::vector<ImagePair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("stack_pairs: no pairs");
  const std::size_t w = pairs[0].first.width, h = pairs[0].first.height;
  std::vector<float> a, b;
  a.reserve(pairs.size() * 3 * w * h);
  b.reserve(pairs.size() * 3 * w * h);
  for (const auto& p : pairs) {
    if (p.first.width != w || p.first.height != h || p.second.width != w || p.second.height != h) {
      throw ShapeError("stack_pairs: images of different sizes");
    }
    const auto ta = image_to_tensor<float>(p.first), tb = image_to_tensor<float>(p.second);
    a.insert(a.end(), ta.values().begin(), ta.values().end());
    b.insert(b.end(), tb.values().begin(), tb.values().end());
  }
  const Shape s{pairs.size(), 3, h, w};
  return {Tensor<float>::from(s, std::move(a)), Tensor<float>::from(s, std::move(b))};
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng = make_rng(seed, SeedStream::kShuffle, epoch);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    batches.emplace_back(order.begin() + i, order.begin() + std::min(n, i + batch_size));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

namespace {

const std::vector<std::string> kGeneratorStructure = {
    "image_size", "channels", "blocks_per_stage", "k",      "l",      "fusion",
    "m",          "hc_layers", "annotations",     "embed", "hidden", "attention"};
const std::vector<std::string> kRefereeStructure = {
    "image_size", "blocks_per_stage", "referee_channels", "referee_k",
    "referee_l",  "referee_embed",    "referee_kernels",  "referee_joint"};

struct Blob {
  RunConfig config;
  std::string kind;
  std::size_t epoch = 0;
  std::size_t adam_step = 0;
  Vocabulary vocab;
};

std::string make_blob(const std::string& kind, const RunConfig& config, const Vocabulary& vocab,
                      std::size_t epoch, std::size_t adam_step) {
  std::string words;
  for (std::size_t i = Vocabulary::kReserved; i < vocab.size(); ++i) {
    words += (i > Vocabulary::kReserved ? " " : "") + vocab.tokens()[i];
  }
  return config.echo() + "kind = " + kind + "\nepoch = " + std::to_string(epoch) +
         "\nadam_step = " + std::to_string(adam_step) + "\nvocab = " + words + "\n";
}

Blob parse_blob(const std::string& text, const std::string& origin) {
  Blob b;
  std::stringstream in(text);
  std::string line;
  try {
    while (std::getline(in, line)) {
      const auto eq = line.find(" = ");
      if (eq == std::string::npos) {
        const auto bare = line.find(" =");
        if (bare == std::string::npos || bare + 2 != line.size()) {
          throw CheckpointError(origin + ": malformed config line '" + line + "'");
        }
      }
      const std::string key = line.substr(0, line.find(" ="));
      const std::string value = eq == std::string::npos ? "" : line.substr(eq + 3);
      if (key == "kind") {
        b.kind = value;
      } else if (key == "epoch") {
        b.epoch = std::stoull(value);
      } else if (key == "adam_step") {
        b.adam_step = std::stoull(value);
      } else if (key == "vocab") {
        std::stringstream words(value);
        std::vector<std::string> tokens;
        for (std::string w; words >> w;) tokens.push_back(w);
        b.vocab = Vocabulary(tokens);
      } else {
        b.config.set(key, value);
      }
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(origin + ": bad config blob: " + e.what());
  }
  return b;
}

void check_structure(const RunConfig& stored, const RunConfig& expected,
                     const std::vector<std::string>& keys, const std::string& origin) {
  for (const auto& key : keys) {
    const std::string a = stored.get(key), b = expected.get(key);
    if (a == b) continue;
    if (key == "fusion") {
      throw CheckpointError(origin + ": checkpoint fusion tactic '" + a +
                            "' does not match the configured tactic '" + b + "'");
    }
    throw CheckpointError(origin + ": checkpoint has " + key + " = " + a + " but the configuration has " + b);
  }
}

Checkpoint make_checkpoint(const std::string& blob, const ParameterStore<float>& store,
                           const Adam<float>& adam) {
  Checkpoint c;
  c.config = blob;
  for (const auto& p : store.parameters()) c.tensors.push_back({"param." + p.name, p.tensor});
  for (const auto& p : store.buffers()) c.tensors.push_back({"buffer." + p.name, p.tensor});
  for (const auto& p : adam.first_moments()) c.tensors.push_back({"adam.m." + p.name, p.tensor});
  for (const auto& p : adam.second_moments()) c.tensors.push_back({"adam.v." + p.name, p.tensor});
  return c;
}

void restore_model(const Checkpoint& c, const ParameterStore<float>& store) {
  restore_tensors(c, "param.", store.parameters());
  restore_tensors(c, "buffer.", store.buffers());
}

// Shared epoch bookkeeping: loss.log, per-epoch checkpoints, pruning.
class RunFiles {
 public:
  RunFiles(const std::string& out_dir, const std::string& prefix, std::size_t keep)
      : dir_(out_dir), prefix_(prefix), keep_(keep) {
    if (!dir_.empty()) fs::create_directories(dir_);
  }

  void log(const std::string& line) {
    if (dir_.empty()) return;
    std::ofstream out(fs::path(dir_) / "loss.log", std::ios::app);
    out << line << "\n";
    if (!out) throw std::runtime_error("cannot append to " + (fs::path(dir_) / "loss.log").string());
  }

  std::string epoch_path(std::size_t epoch) const {
    char name[64];
    std::snprintf(name, sizeof name, "%s-epoch-%04zu.dcck", prefix_.c_str(), epoch);
    return (fs::path(dir_) / name).string();
  }

  void save_epoch(std::size_t epoch, const Checkpoint& c) {
    if (dir_.empty()) return;
    save_checkpoint(epoch_path(epoch), c);
    if (keep_ > 0 && epoch > keep_) fs::remove(epoch_path(epoch - keep_));
  }

  std::string save_final(const Checkpoint& c) {
    if (dir_.empty()) return "";
    const std::string path = (fs::path(dir_) / (prefix_ + ".dcck")).string();
    save_checkpoint(path, c);
    return path;
  }

 private:
  std::string dir_, prefix_;
  std::size_t keep_;
};

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string batch_ids(const std::vector<const PairExample*>& examples, const std::vector<std::size_t>& batch) {
  std::string ids;
  for (std::size_t i = 0; i < batch.size() && i < 8; ++i) ids += (i ? "," : "") + examples[batch[i]]->id;
  if (batch.size() > 8) ids += ",...";
  return ids;
}

std::size_t resume_into(const std::string& path, const std::string& kind, const RunConfig& config,
                        const Vocabulary& vocab, const std::vector<std::string>& structure,
                        const ParameterStore<float>& store, Adam<float>& adam) {
  const Checkpoint c = load_checkpoint(path);
  const Blob b = parse_blob(c.config, path);
  if (b.kind != kind) throw CheckpointError(path + ": holds a " + b.kind + " model, not a " + kind);
  check_structure(b.config, config, structure, path);
  if (b.vocab.tokens() != vocab.tokens()) {
    throw CheckpointError(path + ": vocabulary differs from the one built from this dataset");
  }
  restore_model(c, store);
  restore_tensors(c, "adam.m.", adam.first_moments());
  restore_tensors(c, "adam.v.", adam.second_moments());
  adam.set_steps(b.adam_step);
  return b.epoch;
}

}  // namespace

TrainSummary train_generator(const RunConfig& config, const Dataset& dataset, const TrainOptions& options) {
  config.validate();
  if (dataset.split(Split::kTrain).empty()) throw std::invalid_argument("training split is empty");
  const Dataset data = add_identical_pairs(dataset, config.identical_pairs, config.identical_caption, config.seed);
  const std::vector<const PairExample*> train = data.split(Split::kTrain);
  const Vocabulary vocab = build_vocab(data, config.min_count);

  std::mt19937_64 init = make_rng(config.seed, SeedStream::kInit);
  Generator<float> model(config, vocab.size(), init);
  if (config.freeze_encoder) model.encoder().params().set_trainable(false);
  Adam<float> adam(model.params().parameters(), {config.lr, config.beta1, config.beta2, 1e-8});
  std::size_t epoch = 0;
  if (!options.resume.empty()) {
    epoch = resume_into(options.resume, "generator", config, vocab, kGeneratorStructure, model.params(), adam);
  }

  std::vector<std::vector<int>> captions;
  for (const auto* e : train) captions.push_back(encode_tokens(vocab, e->caption));
  PairImages images(data, config.image_size);
  const AugmentOptions aug = config.augment_options();
  RunFiles files(options.out_dir, "generator", config.keep_checkpoints);
  TrainSummary summary;
  auto blob = [&] { return make_blob("generator", config, vocab, epoch, adam.steps()); };

  while (epoch < config.epochs) {
    ++epoch;
    const auto batches = epoch_batches(train.size(), config.batch_size, config.seed, epoch);
    const std::uint64_t aug_seed = derive_seed(config.seed, static_cast<std::uint64_t>(SeedStream::kAugment), epoch);
    double total = 0;
    std::size_t tokens = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      std::vector<ImagePair> pairs;
      std::vector<std::vector<int>> caps;
      std::size_t batch_tokens = 0;
      for (std::size_t i : batch) {
        pairs.push_back(images.augmented(*train[i], derive_seed(aug_seed, i), aug));
        caps.push_back(captions[i]);
        batch_tokens += captions[i].size() + 1;
      }
      auto [x1, x2] = stack_pairs(pairs);
      try {
        Tensor<float> sum_nll = model.nll(x1, x2, caps, true);
        const double value = sum_nll.item();
        if (!std::isfinite(value)) throw NumericError("non-finite loss");
        backward(scale(sum_nll, 1.0f / static_cast<float>(batch_tokens)));
        adam.step(config.clip);
        total += value;
      } catch (const std::runtime_error& e) {
        if (!dynamic_cast<const NumericError*>(&e) && !dynamic_cast<const TrainingError*>(&e)) throw;
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) + " batch " +
                            std::to_string(bi) + " (pairs " + batch_ids(train, batch) + "): " + e.what());
      }
      model.params().zero_grad();
      tokens += batch_tokens;
    }
    const std::string line = "epoch=" + std::to_string(epoch) + " steps=" + std::to_string(adam.steps()) +
                             " loss=" + format_value(total / static_cast<double>(tokens));
    files.log(line);
    summary.log.push_back(line);
    if (options.on_epoch) options.on_epoch(line);
    files.save_epoch(epoch, make_checkpoint(blob(), model.params(), adam));
  }
  summary.epoch = epoch;
  summary.checkpoint = files.save_final(make_checkpoint(blob(), model.params(), adam));
  return summary;
}

RefereeEvaluation evaluate_referee(Referee<float>& referee, const Vocabulary& vocab, PairImages& images,
                                   const std::vector<const PairExample*>& examples,
                                   const std::vector<TokenSeq>& captions, std::uint64_t seed) {
  if (examples.size() != captions.size()) {
    throw std::invalid_argument("evaluate_referee: caption count differs from example count");
  }
  if (examples.empty()) throw std::invalid_argument("referee evaluation over an empty split");
  std::vector<ImagePair> pairs;
  std::vector<std::vector<int>> ids;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    pairs.push_back(images.plain(*examples[i]));
    ids.push_back(referee_ids(vocab, captions[i]));
  }
  auto [x1, x2] = stack_pairs(pairs);
  return referee_accuracy(referee, x1, x2, ids, seed, 0);
}

TrainSummary train_referee(const RunConfig& config, const Dataset& dataset, const TrainOptions& options) {
  config.validate();
  const Vocabulary vocab = build_vocab(dataset, config.min_count);
  std::vector<const PairExample*> train;
  for (const auto* e : dataset.split(Split::kTrain)) {
    if (!e->identical()) train.push_back(e);
  }
  if (train.empty()) throw std::invalid_argument("training split has no distinguishable pairs");
  const std::vector<const PairExample*> held_out = dataset.held_out();
  std::vector<TokenSeq> held_captions;
  for (const auto* e : held_out) held_captions.push_back(e->caption);

  std::mt19937_64 init = make_rng(config.seed, SeedStream::kInit);
  Referee<float> referee(config.referee_config(vocab.size()), init);
  Adam<float> adam(referee.params().parameters(), {config.referee_lr, config.beta1, config.beta2, 1e-8});
  std::size_t epoch = 0;
  if (!options.resume.empty()) {
    epoch = resume_into(options.resume, "referee", config, vocab, kRefereeStructure, referee.params(), adam);
  }

  std::vector<std::vector<int>> captions;
  for (const auto* e : train) captions.push_back(referee_ids(vocab, e->caption));
  PairImages images(dataset, config.image_size);
  const AugmentOptions aug = config.augment_options();
  RunFiles files(options.out_dir, "referee", config.keep_checkpoints);
  TrainSummary summary;
  auto blob = [&] { return make_blob("referee", config, vocab, epoch, adam.steps()); };

  while (epoch < config.referee_epochs) {
    ++epoch;
    const auto batches = epoch_batches(train.size(), config.referee_batch_size, config.seed, epoch);
    const std::uint64_t aug_seed = derive_seed(config.seed, static_cast<std::uint64_t>(SeedStream::kAugment), epoch);
    std::mt19937_64 coin = make_rng(config.seed, SeedStream::kRefereeCoin, epoch);
    std::bernoulli_distribution fair(0.5);
    double total = 0;
    std::size_t count = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      std::vector<ImagePair> pairs;
      std::vector<std::vector<int>> caps;
      std::vector<int> labels;
      for (std::size_t i : batch) {
        ImagePair p = images.augmented(*train[i], derive_seed(aug_seed, i), aug);
        const int y = fair(coin) ? 1 : 0;
        if (y == 1) std::swap(p.first, p.second);
        pairs.push_back(std::move(p));
        caps.push_back(captions[i]);
        labels.push_back(y);
      }
      auto [x1, x2] = stack_pairs(pairs);
      try {
        Tensor<float> loss = referee.loss(x1, x2, caps, labels, true);
        const double value = loss.item();
        if (!std::isfinite(value)) throw NumericError("non-finite loss");
        backward(loss);
        adam.step(config.clip);
        total += value * static_cast<double>(batch.size());
      } catch (const std::runtime_error& e) {
        if (!dynamic_cast<const NumericError*>(&e) && !dynamic_cast<const TrainingError*>(&e)) throw;
        throw TrainingError("referee training diverged at epoch " + std::to_string(epoch) + " batch " +
                            std::to_string(bi) + " (pairs " + batch_ids(train, batch) + "): " + e.what());
      }
      referee.params().zero_grad();
      count += batch.size();
    }
    std::string line = "epoch=" + std::to_string(epoch) + " steps=" + std::to_string(adam.steps()) +
                       " loss=" + format_value(total / static_cast<double>(count));
    if (!held_out.empty()) {
      const double acc = evaluate_referee(referee, vocab, images, held_out, held_captions, config.seed).accuracy;
      line += " heldout_accuracy=" + format_value(acc);
    }
    files.log(line);
    summary.log.push_back(line);
    if (options.on_epoch) options.on_epoch(line);
    files.save_epoch(epoch, make_checkpoint(blob(), referee.params(), adam));
  }
  summary.epoch = epoch;
  summary.checkpoint = files.save_final(make_checkpoint(blob(), referee.params(), adam));
  return summary;
}

LoadedGenerator load_generator(const std::string& path, const RunConfig* expected) {
  const Checkpoint c = load_checkpoint(path);
  Blob b = parse_blob(c.config, path);
  if (b.kind != "generator") throw CheckpointError(path + ": holds a " + b.kind + " model, not a generator");
  if (expected) check_structure(b.config, *expected, kGeneratorStructure, path);
  LoadedGenerator out;
  out.config = b.config;
  out.vocab = b.vocab;
  out.epoch = b.epoch;
  std::mt19937_64 rng(0);
  out.model = std::make_unique<Generator<float>>(b.config, b.vocab.size(), rng);
  restore_model(c, out.model->params());
  return out;
}

LoadedReferee load_referee(const std::string& path) {
  const Checkpoint c = load_checkpoint(path);
  Blob b = parse_blob(c.config, path);
  if (b.kind != "referee") throw CheckpointError(path + ": holds a " + b.kind + " model, not a referee");
  LoadedReferee out;
  out.config = b.config;
  out.vocab = b.vocab;
  out.epoch = b.epoch;
  std::mt19937_64 rng(0);
  out.model = std::make_unique<Referee<float>>(b.config.referee_config(b.vocab.size()), rng);
  restore_model(c, out.model->params());
  return out;
}

std::vector<TokenSeq> generate_captions(Generator<float>& model, const Vocabulary& vocab, PairImages& images,
                                        const std::vector<const PairExample*>& examples, std::size_t beam,
                                        std::size_t max_len) {
  std::vector<TokenSeq> out;
  out.reserve(examples.size());
  for (const auto* e : examples) {
    const ImagePair p = images.plain(*e);
    const auto hyps = model.caption(image_to_tensor<float>(p.first), image_to_tensor<float>(p.second), beam, max_len);
    out.push_back(hyps.empty() ? TokenSeq{} : decode_tokens(vocab, hyps.front().tokens));
  }
  return out;
}

}  // namespace diffcap
