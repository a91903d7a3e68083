#include "diffcap/encoder.h"

#include <stdexcept>

#include "binary_io.h"
#include "diffcap/ops.h"

namespace diffcap {

namespace {

constexpr char kFeatureMagic[4] = {'D', 'C', 'F', 'T'};
constexpr std::uint32_t kFeatureVersion = 1;

std::size_t downsample_count(const EncoderConfig& c) {
  const std::size_t stages = c.channels.size() + 1;
  std::size_t s = 0, side = c.image_size;
  while (s < stages && (side + 1) / 2 >= c.l) {
    side = (side + 1) / 2;
    ++s;
  }
  return s;
}

}  // namespace

void validate(const EncoderConfig& c) {
  if (c.channels.empty()) throw std::invalid_argument("encoder needs at least one stage width");
  for (std::size_t w : c.channels) {
    if (w == 0) throw std::invalid_argument("encoder stage width must be positive");
  }
  if (c.k == 0 || c.l == 0) throw std::invalid_argument("encoder k and l must be positive");
  if (c.blocks_per_stage == 0) throw std::invalid_argument("encoder needs >= 1 block per stage");
  if (c.image_size < c.l) {
    throw std::invalid_argument("image size " + std::to_string(c.image_size) +
                                " is smaller than grid l=" + std::to_string(c.l));
  }
}

std::vector<std::size_t> stage_sides(const EncoderConfig& c) {
  const std::size_t stages = c.channels.size() + 1;
  const std::size_t down = downsample_count(c);
  std::vector<std::size_t> sides;
  std::size_t side = c.image_size;
  for (std::size_t i = 0; i < stages; ++i) {
    if (i >= stages - down) side = (side + 1) / 2;
    sides.push_back(side);
  }
  return sides;
}

template <typename T>
Tensor<T> residual_block(const Tensor<T>& x, const ResidualBlockParams<T>& p) {
  const Conv2dOptions first{p.stride, 1, 1};
  Tensor<T> branch = relu(conv2d(x, p.conv1_w, p.conv1_b, first));
  branch = conv2d(branch, p.conv2_w, p.conv2_b, Conv2dOptions{1, 1, 1});
  Tensor<T> shortcut = p.proj_w.defined()
                           ? conv2d(x, p.proj_w, Tensor<T>(), Conv2dOptions{p.stride, 0, 0})
                           : x;
  return add(branch, shortcut);
}

template <typename T>
Encoder<T>::Encoder(const EncoderConfig& config, std::mt19937_64& rng) : config_(config) {
  validate(config_);
  const std::size_t c0 = config_.channels[0];
  stem_w_ = params_.add("stem.w", he_normal<T>(rng, {c0, 3, 3, 3}, 27));
  stem_b_ = params_.add("stem.b", Tensor<T>::zeros({c0}));

  std::vector<std::size_t> widths = config_.channels;
  widths.push_back(config_.k);
  const std::size_t down = downsample_count(config_);
  std::size_t in = c0;
  for (std::size_t s = 0; s < widths.size(); ++s) {
    for (std::size_t b = 0; b < config_.blocks_per_stage; ++b) {
      const std::size_t out = widths[s];
      const std::size_t stride = (b == 0 && s >= widths.size() - down) ? 2 : 1;
      const std::string name = "stage" + std::to_string(s) + ".block" + std::to_string(b);
      ResidualBlockParams<T> p;
      p.stride = stride;
      p.conv1_w = params_.add(name + ".conv1.w", he_normal<T>(rng, {out, in, 3, 3}, in * 9));
      p.conv1_b = params_.add(name + ".conv1.b", Tensor<T>::zeros({out}));
      p.conv2_w = params_.add(name + ".conv2.w", Tensor<T>::zeros({out, out, 3, 3}));
      p.conv2_b = params_.add(name + ".conv2.b", Tensor<T>::zeros({out}));
      if (in != out || stride != 1) {
        p.proj_w = params_.add(name + ".proj.w", he_normal<T>(rng, {out, in, 1, 1}, in));
      }
      blocks_.push_back(p);
      in = out;
    }
  }
}

template <typename T>
FeatureMaps<T> Encoder<T>::encode(const Tensor<T>& images) const {
  const bool single = images.rank() == 3;
  if (!single && images.rank() != 4) {
    throw ShapeError("encode expects [3,H,W] or [N,3,H,W], got " + shape_str(images.shape()));
  }
  const Shape& s = images.shape();
  const std::size_t off = single ? 0 : 1;
  if (s[off] != 3 || s[off + 1] != config_.image_size || s[off + 2] != config_.image_size) {
    throw ShapeError("encode: image shape " + shape_str(s) + " does not match configured size " +
                     std::to_string(config_.image_size));
  }
  Tensor<T> x = relu(conv2d(images, stem_w_, stem_b_, Conv2dOptions{1, 1, 1}));
  for (const auto& block : blocks_) x = residual_block(x, block);
  if (x.dim(x.rank() - 1) != config_.l || x.dim(x.rank() - 2) != config_.l) {
    x = avg_pool2d(x, config_.l, config_.l);
  }
  Tensor<T> pooled = avg_pool2d(x, 1, 1);
  Shape fc_shape = single ? Shape{config_.k} : Shape{s[0], config_.k};
  return {x, reshape(pooled, fc_shape)};
}

template <typename T>
FeaturePair<T> Encoder<T>::encode_pair(const Tensor<T>& images1, const Tensor<T>& images2) const {
  if (images1.shape() != images2.shape()) {
    throw ShapeError("encode_pair: " + shape_str(images1.shape()) + " vs " +
                     shape_str(images2.shape()));
  }
  Tensor<T> a = images1, b = images2;
  if (a.rank() == 3) {
    Shape s{1, a.dim(0), a.dim(1), a.dim(2)};
    a = reshape(a, s);
    b = reshape(b, s);
  }
  const std::size_t n = a.dim(0);
  FeatureMaps<T> both = encode(concat(a, b, 0));
  return {slice(both.C, 0, 0, n), slice(both.C, 0, n, n), slice(both.fc, 0, 0, n),
          slice(both.fc, 0, n, n)};
}

template Tensor<float> residual_block(const Tensor<float>&, const ResidualBlockParams<float>&);
template Tensor<double> residual_block(const Tensor<double>&, const ResidualBlockParams<double>&);
template class Encoder<float>;
template class Encoder<double>;

void export_features(const std::string& path, const FeaturePair<float>& pair) {
  if (pair.C1.rank() != 4 || pair.C1.dim(0) != 1) {
    throw ShapeError("export_features expects a single pair, got C1 " +
                     shape_str(pair.C1.shape()));
  }
  const std::size_t k = pair.C1.dim(1), l = pair.C1.dim(2);
  io::Writer w;
  w.raw(kFeatureMagic, 4);
  w.u32(kFeatureVersion);
  w.u32(static_cast<std::uint32_t>(k));
  w.u32(static_cast<std::uint32_t>(l));
  w.floats(pair.C1.values());
  w.floats(pair.fc1.values());
  w.floats(pair.C2.values());
  w.floats(pair.fc2.values());
  io::write_file(path, w.bytes());
}

FeaturePair<float> import_features(const std::string& path) {
  const std::string bytes = io::read_file(path);
  io::Reader r(bytes, path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kFeatureMagic, 4) != 0) throw io::FormatError(path + ": not a feature file");
  const std::uint32_t version = r.u32();
  if (version != kFeatureVersion) {
    throw io::FormatError(path + ": unsupported feature version " + std::to_string(version));
  }
  const std::size_t k = r.u32(), l = r.u32();
  if (k == 0 || l == 0) throw io::FormatError(path + ": zero k or l");
  FeaturePair<float> out;
  out.C1 = Tensor<float>::from({1, k, l, l}, r.floats<float>(k * l * l));
  out.fc1 = Tensor<float>::from({1, k}, r.floats<float>(k));
  out.C2 = Tensor<float>::from({1, k, l, l}, r.floats<float>(k * l * l));
  out.fc2 = Tensor<float>::from({1, k}, r.floats<float>(k));
  if (!r.at_end()) throw io::FormatError(path + ": trailing bytes after feature data");
  return out;
}

FeaturePair<float> import_features(const std::string& path, std::size_t k, std::size_t l) {
  FeaturePair<float> fp = import_features(path);
  const std::size_t fk = fp.C1.dim(1), fl = fp.C1.dim(2);
  if (fk != k || fl != l) {
    throw ShapeError(path + ": feature file has k=" + std::to_string(fk) + ", l=" +
                     std::to_string(fl) + " but the model expects k=" + std::to_string(k) +
                     ", l=" + std::to_string(l));
  }
  return fp;
}

}  // namespace diffcap
