#ifndef DIFFCAP_DATASET_H_
#define DIFFCAP_DATASET_H_

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "diffcap/image.h"
#include "diffcap/vocab.h"

namespace diffcap {

enum class Split { kTrain, kVal, kTest };

std::string split_name(Split split);
Split parse_split(std::string_view name);

inline constexpr std::size_t kMaxCaptionTokens = 21;

struct PairExample {
  std::string id;
  std::string image1;  // as written in the manifest, relative to its directory
  std::string image2;
  Split split = Split::kTrain;
  std::vector<std::string> caption;  // tokens

  bool identical() const { return image1 == image2; }
};

struct Dataset {
  std::string root;  // directory the image paths are relative to
  std::vector<PairExample> examples;

  std::string resolve(const std::string& image) const;
  std::vector<const PairExample*> split(Split s) const;
  std::vector<const PairExample*> held_out() const;  // val then test
};

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tab-separated: pair_id, image1, image2, split, caption. Blank lines and
// lines starting with '#' are skipped.
Dataset load_manifest(const std::string& path, bool check_images = true);
void write_manifest(const std::string& path, const Dataset& dataset);

// Tokens of the training split with count >= min_count, ordered by
// descending count then alphabetically.
Vocabulary build_vocab(const Dataset& dataset, std::size_t min_count = 1);

// Appends n training pairs whose two images are the same training image,
// drawn with the identical-pairs seed stream.
Dataset add_identical_pairs(const Dataset& dataset, std::size_t n,
                            const std::string& caption_text, std::uint64_t seed);

struct AugmentOptions {
  std::size_t max_crop = 10;
  bool flip = true;
  std::size_t output_size = 64;  // 0 keeps the cropped size
};

struct ImagePair {
  Image first, second;
};

// flip_safe: the caption carries no left/right tokens.
bool flip_safe(const PairExample& example);

// Random crop removing up to max_crop pixels per axis, then bilinear resize
// to output_size; both images share the crop window and the flip. Identical
// pairs are only resized.
ImagePair augment(const ImagePair& pair, const PairExample& example, std::uint64_t seed,
                  const AugmentOptions& options);

// Decoded images by resolved path.
class ImageCache {
 public:
  const Image& get(const std::string& path);

 private:
  std::map<std::string, Image> images_;
};

struct SynthSpec {
  std::size_t image_size = 64;
  std::size_t pairs = 200;
  std::uint64_t seed = 1;
};

enum class Shape2d { kCircle, kSquare, kTriangle };

struct ShapeAttributes {
  Shape2d shape = Shape2d::kCircle;
  int color = 0;  // index into synth_colors()
  bool large = false;
  bool striped = false;
  bool operator==(const ShapeAttributes&) const = default;
};

const std::vector<std::string>& synth_colors();
Image render_shape(const ShapeAttributes& attrs, std::size_t size, int dx, int dy);
// Names image 1's values of the attributes that differ, e.g.
// "is red and is a large circle"; "no difference" when none differ.
std::string difference_caption(const ShapeAttributes& first, const ShapeAttributes& second);

// Writes images/ and manifest.tsv under out_dir and returns the dataset.
Dataset generate_synthetic(const SynthSpec& spec, const std::string& out_dir);

}  // namespace diffcap

#endif  // DIFFCAP_DATASET_H_
