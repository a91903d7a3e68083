#ifndef DIFFCAP_CONFIG_H_
#define DIFFCAP_CONFIG_H_

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffcap/dataset.h"
#include "diffcap/decoder.h"
#include "diffcap/encoder.h"
#include "diffcap/fusion.h"
#include "diffcap/referee.h"

namespace diffcap {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Every tunable of a run. Generator optimization keys are unprefixed; the
// referee's carry a "referee_" prefix.
struct RunConfig {
  std::uint64_t seed = 1;

  std::size_t image_size = 64;
  std::vector<std::size_t> channels{16, 32, 64};
  std::size_t blocks_per_stage = 1;
  std::size_t k = 64;
  std::size_t l = 8;
  FusionTactic fusion = FusionTactic::kHyperConv;
  std::size_t m = 128;
  std::size_t hc_layers = 2;
  std::size_t annotations = 0;  // 0: 16 for hc (clamped to l*l), 1 otherwise
  std::size_t embed = 512;
  std::size_t hidden = 512;
  std::size_t attention = 512;

  std::size_t min_count = 1;
  std::size_t identical_pairs = 0;
  std::string identical_caption = "no difference";
  std::size_t max_crop = 10;
  bool flip = true;

  double lr = 0.0004;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double clip = 0;  // global gradient-norm bound; 0 disables
  bool freeze_encoder = false;

  double referee_lr = 0.001;
  std::size_t referee_epochs = 50;
  std::size_t referee_batch_size = 16;
  std::vector<std::size_t> referee_channels{16, 32, 64};
  std::size_t referee_k = 64;
  std::size_t referee_l = 8;
  std::size_t referee_embed = 128;
  std::size_t referee_kernels = 100;
  std::size_t referee_joint = 1024;
  bool referee_linear_objective = false;

  std::size_t beam = 10;
  std::size_t max_len = 22;  // emitted tokens including the end token
  std::size_t keep_checkpoints = 2;

  // Throws ConfigError naming the key on unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  // Canonical "key = value" lines in declaration order.
  std::string echo() const;

  EncoderConfig encoder_config() const;
  FusionConfig fusion_config() const;
  std::size_t annotation_count() const;
  DecoderConfig decoder_config(std::size_t vocab_size) const;
  RefereeConfig referee_config(std::size_t vocab_size) const;
  AugmentOptions augment_options() const;
  // Throws ConfigError when the derived module configs are inconsistent.
  void validate() const;
};

struct ConfigKeyInfo {
  std::string key;
  std::string default_value;
  std::string doc;
};
const std::vector<ConfigKeyInfo>& config_keys();

// Parses `key = value` lines; '#' starts a comment. Errors carry "path:line:".
std::map<std::string, std::string> parse_config_text(const std::string& text,
                                                     const std::string& origin);
std::map<std::string, std::string> read_config_file(const std::string& path);
// Applies parsed entries in key order.
void apply_config(RunConfig& config, const std::map<std::string, std::string>& entries);

}  // namespace diffcap

#endif  // DIFFCAP_CONFIG_H_
