#include "diffcap/config.h"

#include <charconv>
#include <cmath>
#include <functional>
#include <sstream>

#include "binary_io.h"

namespace diffcap {

namespace {

struct Field {
  std::string key;
  std::string doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + want);
}

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) bad_value(key, s, "an unsigned integer");
  return v;
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
    bad_value(key, s, "a finite number");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  bad_value(key, s, "a boolean");
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general);
  return std::string(buf, p);
}

std::string format_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_u64(key, item));
  if (out.empty()) bad_value(key, s, "a comma-separated list");
  return out;
}

Field size_field(const char* key, std::size_t RunConfig::*member, const char* doc) {
  return {key, doc, [member](const RunConfig& c) { return std::to_string(c.*member); },
          [key, member](RunConfig& c, const std::string& v) { c.*member = parse_u64(key, v); }};
}

Field double_field(const char* key, double RunConfig::*member, const char* doc) {
  return {key, doc, [member](const RunConfig& c) { return format_double(c.*member); },
          [key, member](RunConfig& c, const std::string& v) { c.*member = parse_double(key, v); }};
}

Field bool_field(const char* key, bool RunConfig::*member, const char* doc) {
  return {key, doc, [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); },
          [key, member](RunConfig& c, const std::string& v) { c.*member = parse_bool(key, v); }};
}

Field list_field(const char* key, std::vector<std::size_t> RunConfig::*member, const char* doc) {
  return {key, doc, [member](const RunConfig& c) { return format_list(c.*member); },
          [key, member](RunConfig& c, const std::string& v) { c.*member = parse_list(key, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"seed", "run seed; every random stream derives from it",
                 [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); }});
    f.push_back(size_field("image_size", &RunConfig::image_size, "square input side in pixels"));
    f.push_back(list_field("channels", &RunConfig::channels, "encoder stage widths before the final k stage"));
    f.push_back(size_field("blocks_per_stage", &RunConfig::blocks_per_stage, "residual blocks per encoder stage"));
    f.push_back(size_field("k", &RunConfig::k, "encoder feature channels"));
    f.push_back(size_field("l", &RunConfig::l, "encoder feature map side"));
    f.push_back({"fusion", "fusion tactic: tc, lnn, fsn or hc",
                 [](const RunConfig& c) { return fusion_name(c.fusion); },
                 [](RunConfig& c, const std::string& v) {
                   try {
                     c.fusion = parse_fusion(v);
                   } catch (const std::invalid_argument&) {
                     bad_value("fusion", v, "one of tc, lnn, fsn, hc");
                   }
                 }});
    f.push_back(size_field("m", &RunConfig::m, "fsn shared width"));
    f.push_back(size_field("hc_layers", &RunConfig::hc_layers, "hyper-convolution layers"));
    f.push_back(size_field("annotations", &RunConfig::annotations,
                           "annotation vectors per pair; 0 picks 16 for hc (at most l*l) and 1 otherwise"));
    f.push_back(size_field("embed", &RunConfig::embed, "decoder word embedding width"));
    f.push_back(size_field("hidden", &RunConfig::hidden, "decoder LSTM width"));
    f.push_back(size_field("attention", &RunConfig::attention, "decoder attention width"));
    f.push_back(size_field("min_count", &RunConfig::min_count, "minimum training-split count for a vocabulary token"));
    f.push_back(size_field("identical_pairs", &RunConfig::identical_pairs,
                           "identical-image pairs added to generator training"));
    f.push_back({"identical_caption", "caption of the added identical pairs",
                 [](const RunConfig& c) { return c.identical_caption; },
                 [](RunConfig& c, const std::string& v) {
                   if (tokenize(v).empty()) bad_value("identical_caption", v, "a non-empty caption");
                   c.identical_caption = v;
                 }});
    f.push_back(size_field("max_crop", &RunConfig::max_crop, "largest random crop per axis in pixels"));
    f.push_back(bool_field("flip", &RunConfig::flip, "random horizontal flip of captions without left/right"));
    f.push_back(double_field("lr", &RunConfig::lr, "generator Adam learning rate"));
    f.push_back(double_field("beta1", &RunConfig::beta1, "Adam beta1 (both models)"));
    f.push_back(double_field("beta2", &RunConfig::beta2, "Adam beta2 (both models)"));
    f.push_back(size_field("epochs", &RunConfig::epochs, "generator epochs"));
    f.push_back(size_field("batch_size", &RunConfig::batch_size, "generator batch size"));
    f.push_back(double_field("clip", &RunConfig::clip, "global gradient-norm clip; 0 disables"));
    f.push_back(bool_field("freeze_encoder", &RunConfig::freeze_encoder, "keep generator encoder weights fixed"));
    f.push_back(double_field("referee_lr", &RunConfig::referee_lr, "referee Adam learning rate"));
    f.push_back(size_field("referee_epochs", &RunConfig::referee_epochs, "referee epochs"));
    f.push_back(size_field("referee_batch_size", &RunConfig::referee_batch_size, "referee batch size"));
    f.push_back(list_field("referee_channels", &RunConfig::referee_channels, "referee visual stage widths"));
    f.push_back(size_field("referee_k", &RunConfig::referee_k, "referee visual feature channels"));
    f.push_back(size_field("referee_l", &RunConfig::referee_l, "referee visual map side"));
    f.push_back(size_field("referee_embed", &RunConfig::referee_embed, "referee word embedding width"));
    f.push_back(size_field("referee_kernels", &RunConfig::referee_kernels, "text kernels per width (3, 4, 5)"));
    f.push_back(size_field("referee_joint", &RunConfig::referee_joint, "shared visual-text embedding width"));
    f.push_back(bool_field("referee_linear_objective", &RunConfig::referee_linear_objective,
                           "maximize the correct-class probability instead of its log"));
    f.push_back(size_field("beam", &RunConfig::beam, "beam width"));
    f.push_back(size_field("max_len", &RunConfig::max_len, "decoded tokens including the end token"));
    f.push_back(size_field("keep_checkpoints", &RunConfig::keep_checkpoints,
                           "per-epoch checkpoints retained (0 keeps all)"));
    return f;
  }();
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) { find_field(key).set(*this, value); }

std::string RunConfig::get(const std::string& key) const { return find_field(key).get(*this); }

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

const std::vector<ConfigKeyInfo>& config_keys() {
  static const std::vector<ConfigKeyInfo> keys = [] {
    std::vector<ConfigKeyInfo> out;
    const RunConfig defaults;
    for (const auto& f : fields()) out.push_back({f.key, f.get(defaults), f.doc});
    return out;
  }();
  return keys;
}

EncoderConfig RunConfig::encoder_config() const {
  EncoderConfig c;
  c.channels = channels;
  c.blocks_per_stage = blocks_per_stage;
  c.k = k;
  c.l = l;
  c.image_size = image_size;
  return c;
}

FusionConfig RunConfig::fusion_config() const {
  FusionConfig c;
  c.tactic = fusion;
  c.k = k;
  c.l = l;
  c.m = m;
  c.hc_layers = hc_layers;
  return c;
}

std::size_t RunConfig::annotation_count() const {
  return annotations > 0 ? annotations : default_annotation_count(fusion_config());
}

DecoderConfig RunConfig::decoder_config(std::size_t vocab_size) const {
  DecoderConfig c;
  c.vocab_size = vocab_size;
  c.embed = embed;
  c.hidden = hidden;
  c.attention = attention;
  const FusionConfig f = fusion_config();
  c.annotation_width = f.tactic == FusionTactic::kHyperConv ? k : fused_size(f) / annotation_count();
  return c;
}

RefereeConfig RunConfig::referee_config(std::size_t vocab_size) const {
  RefereeConfig c;
  c.visual.channels = referee_channels;
  c.visual.blocks_per_stage = blocks_per_stage;
  c.visual.k = referee_k;
  c.visual.l = referee_l;
  c.visual.image_size = image_size;
  c.vocab_size = vocab_size;
  c.embed = referee_embed;
  c.kernels = referee_kernels;
  c.joint = referee_joint;
  c.linear_objective = referee_linear_objective;
  return c;
}

AugmentOptions RunConfig::augment_options() const {
  AugmentOptions a;
  a.max_crop = max_crop;
  a.flip = flip;
  a.output_size = image_size;
  return a;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid config: " + what);
  };
  try {
    diffcap::validate(encoder_config());
    diffcap::validate(referee_config(Vocabulary::kReserved + 1).visual);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  require(m > 0, "m must be positive");
  require(hc_layers > 0, "hc_layers must be positive");
  const std::size_t d = annotation_count();
  if (fusion == FusionTactic::kHyperConv) {
    const auto g = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d))));
    require(g * g == d && g <= l, "hc annotations must be a square grid no wider than l");
  } else {
    require(fused_size(fusion_config()) % d == 0, "annotations must divide the fused vector length");
  }
  require(embed > 0 && hidden > 0 && attention > 0, "decoder widths must be positive");
  require(lr > 0 && referee_lr > 0, "learning rates must be positive");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "Adam betas must lie in [0, 1)");
  require(batch_size > 0 && referee_batch_size > 0, "batch sizes must be positive");
  require(clip >= 0, "clip must be non-negative");
  require(referee_embed > 0 && referee_kernels > 0 && referee_joint > 0, "referee widths must be positive");
  require(beam > 0, "beam must be positive");
  require(max_len > 0, "max_len must be positive");
}

std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::stringstream in(text);
  std::string line;
  std::size_t number = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++number;
    const std::string where = origin + ":" + std::to_string(number) + ": ";
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "missing key");
    try {
      RunConfig probe;
      probe.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
    if (!out.emplace(key, value).second) throw ConfigError(where + "duplicate key '" + key + "'");
  }
  return out;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return parse_config_text(text, path);
}

void apply_config(RunConfig& config, const std::map<std::string, std::string>& entries) {
  for (const auto& [key, value] : entries) config.set(key, value);
}

}  // namespace diffcap
