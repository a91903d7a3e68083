#include "diffcap/dataset.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "diffcap/log.h"
#include "diffcap/nn.h"

namespace fs = std::filesystem;

namespace diffcap {

std::string split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw std::invalid_argument("invalid split '" + std::string(name) +
                              "' (expected train, val or test)");
}

std::string Dataset::resolve(const std::string& image) const {
  fs::path p(image);
  if (p.is_absolute() || root.empty()) return p.string();
  return (fs::path(root) / p).string();
}

std::vector<const PairExample*> Dataset::split(Split s) const {
  std::vector<const PairExample*> out;
  for (const auto& e : examples) {
    if (e.split == s) out.push_back(&e);
  }
  return out;
}

std::vector<const PairExample*> Dataset::held_out() const {
  auto out = split(Split::kVal);
  for (const auto* e : split(Split::kTest)) out.push_back(e);
  return out;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Dataset load_manifest(const std::string& path, bool check_images) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot open manifest " + path);
  Dataset ds;
  ds.root = fs::path(path).parent_path().string();
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw ManifestError(path + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_tabs(line);
    if (fields.size() != 5) {
      fail("expected 5 tab-separated fields, found " + std::to_string(fields.size()));
    }
    PairExample e;
    e.id = fields[0];
    e.image1 = fields[1];
    e.image2 = fields[2];
    if (e.id.empty() || e.image1.empty() || e.image2.empty()) fail("empty id or image path");
    try {
      e.split = parse_split(fields[3]);
    } catch (const std::invalid_argument& err) {
      fail(err.what());
    }
    e.caption = tokenize(fields[4]);
    if (e.caption.empty()) fail("empty caption");
    if (e.caption.size() > kMaxCaptionTokens) {
      fail("caption has " + std::to_string(e.caption.size()) + " tokens (max " +
           std::to_string(kMaxCaptionTokens) + ")");
    }
    if (!ids.insert(e.id).second) fail("duplicate pair id '" + e.id + "'");
    if (check_images) {
      for (const auto* img : {&e.image1, &e.image2}) {
        if (!fs::exists(ds.resolve(*img))) fail("missing image " + ds.resolve(*img));
      }
    }
    ds.examples.push_back(std::move(e));
  }
  if (ds.examples.empty()) warn("manifest " + path + " contains no pairs");
  return ds;
}

void write_manifest(const std::string& path, const Dataset& dataset) {
  std::ostringstream out;
  for (const auto& e : dataset.examples) {
    out << e.id << '\t' << e.image1 << '\t' << e.image2 << '\t' << split_name(e.split) << '\t'
        << join(e.caption) << '\n';
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << out.str();
  if (!f) throw std::runtime_error("write failed: " + path);
}

Vocabulary build_vocab(const Dataset& dataset, std::size_t min_count) {
  const auto train = dataset.split(Split::kTrain);
  if (train.empty()) throw std::invalid_argument("build_vocab needs a non-empty training split");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto* e : train) {
    for (const auto& t : e->caption) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [t, c] : counts) {
    if (c >= min_count) kept.emplace_back(t, c);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (kept.empty()) {
    warn("min_count " + std::to_string(min_count) +
         " exceeds every token count; vocabulary holds only reserved tokens");
  }
  std::vector<std::string> tokens;
  for (const auto& [t, c] : kept) tokens.push_back(t);
  return Vocabulary(tokens);
}

Dataset add_identical_pairs(const Dataset& dataset, std::size_t n,
                            const std::string& caption_text, std::uint64_t seed) {
  Dataset out = dataset;
  if (n == 0) return out;
  std::vector<std::string> pool;
  std::set<std::string> seen;
  for (const auto* e : dataset.split(Split::kTrain)) {
    for (const auto* img : {&e->image1, &e->image2}) {
      if (seen.insert(*img).second) pool.push_back(*img);
    }
  }
  if (pool.empty()) throw std::invalid_argument("no training images to build identical pairs from");
  const auto caption = tokenize(caption_text);
  if (caption.empty() || caption.size() > kMaxCaptionTokens) {
    throw std::invalid_argument("invalid identical-pair caption '" + caption_text + "'");
  }
  std::unordered_set<std::string> ids;
  for (const auto& e : dataset.examples) ids.insert(e.id);
  auto rng = make_rng(seed, SeedStream::kIdenticalPairs);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::size_t counter = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::string id;
    do {
      id = "identical-" + std::to_string(counter++);
    } while (ids.count(id));
    const std::string& img = pool[pick(rng)];
    out.examples.push_back({id, img, img, Split::kTrain, caption});
  }
  return out;
}

bool flip_safe(const PairExample& example) {
  for (const auto& t : example.caption) {
    if (t == "left" || t == "right") return false;
  }
  return true;
}

ImagePair augment(const ImagePair& pair, const PairExample& example, std::uint64_t seed,
                  const AugmentOptions& options) {
  const std::size_t out = options.output_size;
  if (example.identical()) {
    Image a = out > 0 ? resize_bilinear(pair.first, out, out) : pair.first;
    return {a, a};
  }
  std::mt19937_64 rng(seed);
  const Image& a = pair.first;
  const std::size_t mx = std::min(options.max_crop, a.width - 1);
  const std::size_t my = std::min(options.max_crop, a.height - 1);
  const std::size_t cut_x = std::uniform_int_distribution<std::size_t>(0, mx)(rng);
  const std::size_t cut_y = std::uniform_int_distribution<std::size_t>(0, my)(rng);
  const std::size_t x0 = std::uniform_int_distribution<std::size_t>(0, cut_x)(rng);
  const std::size_t y0 = std::uniform_int_distribution<std::size_t>(0, cut_y)(rng);
  const bool flip = std::bernoulli_distribution(0.5)(rng) && options.flip && flip_safe(example);
  auto apply = [&](const Image& img) {
    if (img.width != a.width || img.height != a.height) {
      throw std::invalid_argument("pair " + example.id + " has images of different sizes");
    }
    Image r = crop(img, x0, y0, img.width - cut_x, img.height - cut_y);
    if (out > 0) r = resize_bilinear(r, out, out);
    return flip ? flip_horizontal(r) : r;
  };
  return {apply(pair.first), apply(pair.second)};
}

const Image& ImageCache::get(const std::string& path) {
  auto it = images_.find(path);
  if (it == images_.end()) it = images_.emplace(path, read_ppm(path)).first;
  return it->second;
}

const std::vector<std::string>& synth_colors() {
  static const std::vector<std::string> names{"red", "green", "blue", "yellow", "cyan", "magenta"};
  return names;
}

namespace {

constexpr std::uint8_t kPalette[6][3] = {{220, 40, 40},  {40, 170, 60},  {45, 75, 220},
                                         {230, 205, 40}, {40, 200, 210}, {200, 55, 200}};
const char* const kShapeNames[] = {"circle", "square", "triangle"};

}  // namespace

Image render_shape(const ShapeAttributes& attrs, std::size_t size, int dx, int dy) {
  Image img = Image::filled(size, size, 128, 128, 128);
  const double r = (attrs.large ? 0.34 : 0.2) * static_cast<double>(size);
  const double cx = size / 2.0 + dx, cy = size / 2.0 + dy;
  const double period = std::max(2.0, static_cast<double>(size) / 10.0);
  const auto& rgb = kPalette[attrs.color];
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double px = x + 0.5 - cx, py = y + 0.5 - cy;
      bool inside = false;
      switch (attrs.shape) {
        case Shape2d::kCircle: inside = px * px + py * py <= r * r; break;
        case Shape2d::kSquare: inside = std::abs(px) <= 0.85 * r && std::abs(py) <= 0.85 * r; break;
        case Shape2d::kTriangle:
          inside = py >= -r && py <= 0.7 * r && std::abs(px) <= r * (py + r) / (1.7 * r);
          break;
      }
      if (!inside) continue;
      std::uint8_t* p = img.pixel(x, y);
      const bool white = attrs.striped && static_cast<long>(std::floor((py + r) / period)) % 2 == 1;
      for (int c = 0; c < 3; ++c) p[c] = white ? 255 : rgb[c];
    }
  }
  return img;
}

std::string difference_caption(const ShapeAttributes& a, const ShapeAttributes& b) {
  std::vector<std::string> parts;
  if (a.color != b.color) parts.push_back("is " + synth_colors()[a.color]);
  if (a.striped != b.striped) parts.push_back(a.striped ? "is striped" : "is solid");
  const std::string size = a.large ? "large" : "small";
  if (a.shape != b.shape) {
    const std::string shape = kShapeNames[static_cast<int>(a.shape)];
    parts.push_back(a.large != b.large ? "is a " + size + " " + shape : "is a " + shape);
  } else if (a.large != b.large) {
    parts.push_back("is " + size);
  }
  if (parts.empty()) return "no difference";
  std::string out = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) out += " and " + parts[i];
  return out;
}

Dataset generate_synthetic(const SynthSpec& spec, const std::string& out_dir) {
  if (spec.image_size < 16) throw std::invalid_argument("synthetic image size must be >= 16");
  if (spec.pairs == 0) throw std::invalid_argument("synthetic corpus needs >= 1 pair");
  fs::create_directories(fs::path(out_dir) / "images");
  auto rng = make_rng(spec.seed, SeedStream::kSynthetic);
  std::uniform_int_distribution<int> shape_d(0, 2), color_d(0, 5), coin(0, 1);
  const int jitter = static_cast<int>(spec.image_size / 10);
  std::uniform_int_distribution<int> jitter_d(-jitter, jitter);
  auto random_attrs = [&] {
    return ShapeAttributes{static_cast<Shape2d>(shape_d(rng)), color_d(rng), coin(rng) == 1,
                           coin(rng) == 1};
  };
  auto change = [&](const ShapeAttributes& a) {
    ShapeAttributes b = a;
    while (b == a) {
      if (coin(rng)) {
        b.shape = static_cast<Shape2d>((static_cast<int>(a.shape) + 1 + coin(rng)) % 3);
      }
      if (coin(rng)) b.color = (a.color + 1 + std::uniform_int_distribution<int>(0, 4)(rng)) % 6;
      if (coin(rng)) b.large = !a.large;
      if (coin(rng)) b.striped = !a.striped;
    }
    return b;
  };
  Dataset ds;
  ds.root = out_dir;
  const int width = std::max<int>(4, static_cast<int>(std::to_string(spec.pairs).size()));
  for (std::size_t i = 0; i < spec.pairs; ++i) {
    std::string num = std::to_string(i + 1);
    const std::string id = "s" + std::string(width - num.size(), '0') + num;
    const ShapeAttributes a = random_attrs();
    const ShapeAttributes b = change(a);
    const int dx1 = jitter_d(rng), dy1 = jitter_d(rng), dx2 = jitter_d(rng), dy2 = jitter_d(rng);
    PairExample e;
    e.id = id;
    e.image1 = "images/" + id + "_1.ppm";
    e.image2 = "images/" + id + "_2.ppm";
    const std::uint64_t bucket =
        derive_seed(spec.seed, static_cast<std::uint64_t>(SeedStream::kSynthetic), fnv1a(id)) % 10;
    e.split = bucket < 8 ? Split::kTrain : (bucket == 8 ? Split::kVal : Split::kTest);
    e.caption = tokenize(difference_caption(a, b));
    write_ppm(ds.resolve(e.image1), render_shape(a, spec.image_size, dx1, dy1));
    write_ppm(ds.resolve(e.image2), render_shape(b, spec.image_size, dx2, dy2));
    ds.examples.push_back(std::move(e));
  }
  write_manifest((fs::path(out_dir) / "manifest.tsv").string(), ds);
  return ds;
}

}  // namespace diffcap
