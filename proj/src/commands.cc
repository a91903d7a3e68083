#include "diffcap/commands.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "diffcap/image.h"

namespace fs = std::filesystem;

namespace diffcap {

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string join(const TokenSeq& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) s += (i ? " " : "") + tokens[i];
  return s;
}

std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

Dataset load_data(const std::string& path) {
  if (path.empty()) throw UserError("--data is required");
  if (!fs::exists(path)) throw UserError("manifest not found: " + path);
  try {
    return load_manifest(path);
  } catch (const ManifestError& e) {
    throw UserError(e.what());
  }
}

}  // namespace

std::vector<const PairExample*> select_split(const Dataset& dataset, const std::string& split) {
  std::vector<const PairExample*> out;
  if (split == "heldout") {
    out = dataset.held_out();
  } else {
    try {
      out = dataset.split(parse_split(split));
    } catch (const std::invalid_argument&) {
      throw UserError("unknown split '" + split + "' (train, val, test or heldout)");
    }
  }
  if (out.empty()) throw UserError("split '" + split + "' is empty");
  return out;
}

void cmd_synth(const SynthOptions& o, std::ostream& log) {
  if (o.out.empty()) throw UserError("--out is required");
  if (o.pairs == 0) throw UserError("--pairs must be positive");
  if (o.size < 16) throw UserError("--size must be at least 16");
  if (fs::exists(o.out) && !fs::is_empty(o.out) && !o.force) {
    throw UserError(o.out + " is not empty; pass --force to overwrite");
  }
  SynthSpec spec;
  spec.pairs = o.pairs;
  spec.seed = o.seed;
  spec.image_size = o.size;
  const Dataset ds = generate_synthetic(spec, o.out);
  RunConfig echo;
  echo.seed = o.seed;
  echo.image_size = o.size;
  write_text(fs::path(o.out) / "config.echo", "# synth pairs = " + std::to_string(o.pairs) + "\n" + echo.echo());
  log << "wrote " << ds.examples.size() << " pairs to " << (fs::path(o.out) / "manifest.tsv").string() << "\n";
}

TrainSummary cmd_train(const TrainCommand& c, std::ostream& log) {
  if (c.out.empty()) throw UserError("--out is required");
  try {
    c.config.validate();
  } catch (const ConfigError& e) {
    throw UserError(e.what());
  }
  const Dataset ds = load_data(c.data);
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "config.echo", c.config.echo());
  TrainOptions options;
  options.out_dir = c.out;
  options.resume = c.resume;
  options.on_epoch = [&log](const std::string& line) { log << line << "\n" << std::flush; };
  if (!c.resume.empty() && !fs::exists(c.resume)) throw UserError("checkpoint not found: " + c.resume);
  try {
    return c.target == TrainTarget::kGenerator ? train_generator(c.config, ds, options)
                                               : train_referee(c.config, ds, options);
  } catch (const ConfigError& e) {
    throw UserError(e.what());
  }
}

std::vector<BeamHypothesis> cmd_caption(const CaptionOptions& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw UserError("--checkpoint is required");
  const bool images = !o.img1.empty() || !o.img2.empty();
  if (images == !o.features.empty()) throw UserError("give either --img1 and --img2 or --features");
  if (images && (o.img1.empty() || o.img2.empty())) throw UserError("--img1 and --img2 go together");
  if (o.beam == 0) throw UserError("--beam must be positive");
  for (const auto& p : {o.checkpoint, o.img1, o.img2, o.features}) {
    if (!p.empty() && !fs::exists(p)) throw UserError("file not found: " + p);
  }
  LoadedGenerator g = load_generator(o.checkpoint);
  const std::size_t max_len = o.max_len.value_or(g.config.max_len);
  std::vector<BeamHypothesis> hyps;
  if (images) {
    const std::size_t s = g.config.image_size;
    const Image a = resize_bilinear(read_ppm(o.img1), s, s), b = resize_bilinear(read_ppm(o.img2), s, s);
    hyps = g.model->caption(image_to_tensor<float>(a), image_to_tensor<float>(b), o.beam, max_len);
  } else {
    hyps = g.model->caption(import_features(o.features, g.config.k, g.config.l), o.beam, max_len);
  }
  out << (hyps.empty() ? "" : join(decode_tokens(g.vocab, hyps.front().tokens))) << "\n";
  for (std::size_t i = 0; i < hyps.size() && i < o.nbest; ++i) {
    char lp[32];
    std::snprintf(lp, sizeof lp, "%.6f", hyps[i].log_prob);
    out << (i + 1) << "\t" << lp << "\t" << join(decode_tokens(g.vocab, hyps[i].tokens)) << "\n";
  }
  return hyps;
}

EvaluationResult cmd_evaluate(const EvaluateOptions& o, std::ostream& out) {
  if (o.checkpoint.empty() && !o.ground_truth) throw UserError("--checkpoint is required unless --ground-truth");
  for (const auto& p : {o.checkpoint, o.referee_checkpoint}) {
    if (!p.empty() && !fs::exists(p)) throw UserError("file not found: " + p);
  }
  const Dataset ds = load_data(o.data);
  const auto examples = select_split(ds, o.split);
  EvaluationResult result;
  std::vector<TokenSeq> refs;
  for (const auto* e : examples) refs.push_back(e->caption);
  RunConfig echo_config;
  if (o.ground_truth) {
    result.candidates = refs;
  } else {
    LoadedGenerator g = load_generator(o.checkpoint);
    echo_config = g.config;
    PairImages images(ds, g.config.image_size);
    result.candidates = generate_captions(*g.model, g.vocab, images, examples, o.beam.value_or(g.config.beam),
                                          g.config.max_len);
  }
  result.report = evaluate_captions(result.candidates, refs);
  std::string table = format_report(result.report);
  std::string kv = report_key_values(result.report);
  std::string judgments;
  if (!o.referee_checkpoint.empty()) {
    LoadedReferee r = load_referee(o.referee_checkpoint);
    if (o.ground_truth) echo_config = r.config;
    PairImages images(ds, r.config.image_size);
    const RefereeEvaluation eval = evaluate_referee(*r.model, r.vocab, images, examples, result.candidates, r.config.seed);
    result.referee_accuracy = eval.accuracy;
    table += "Referee   " + fixed(eval.accuracy) + "\n";
    kv += "referee_accuracy=" + fixed(eval.accuracy, 6) + "\n";
    for (const auto& rec : eval.records) {
      judgments += examples[rec.index]->id + "\t" + fixed(rec.judgment.p0, 6) + "\t" +
                   std::to_string(rec.judgment.predicted) + "\t" + std::to_string(rec.truth) + "\n";
    }
    judgments += "# accuracy=" + fixed(eval.accuracy, 6) + "\n";
  }
  out << table;
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    std::string echo = "# evaluate split = " + o.split + "\n# evaluate ground_truth = " +
                       (o.ground_truth ? "true" : "false") + "\n";
    if (!o.checkpoint.empty()) echo += "# evaluate checkpoint = " + o.checkpoint + "\n";
    if (!o.referee_checkpoint.empty()) echo += "# evaluate referee_checkpoint = " + o.referee_checkpoint + "\n";
    if (o.beam) echo += "# evaluate beam = " + std::to_string(*o.beam) + "\n";
    write_text(fs::path(o.out) / "config.echo", echo + echo_config.echo());
    write_text(fs::path(o.out) / "metrics.txt", kv);
    if (!judgments.empty()) write_text(fs::path(o.out) / "judgments.tsv", judgments);
    std::string captions;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      captions += examples[i]->id + "\t" + join(result.candidates[i]) + "\t" + join(refs[i]) + "\n";
    }
    write_text(fs::path(o.out) / "captions.tsv", captions);
  }
  return result;
}

RefereeJudgment cmd_judge(const JudgeOptions& o, std::ostream& out) {
  if (o.referee_checkpoint.empty() || o.img1.empty() || o.img2.empty()) {
    throw UserError("--referee-checkpoint, --img1 and --img2 are required");
  }
  for (const auto& p : {o.referee_checkpoint, o.img1, o.img2}) {
    if (!fs::exists(p)) throw UserError("file not found: " + p);
  }
  LoadedReferee r = load_referee(o.referee_checkpoint);
  const std::size_t s = r.config.image_size;
  const Image a = resize_bilinear(read_ppm(o.img1), s, s), b = resize_bilinear(read_ppm(o.img2), s, s);
  const RefereeJudgment j = r.model->judge(image_to_tensor<float>(a), image_to_tensor<float>(b),
                                           referee_ids(r.vocab, tokenize(o.caption)));
  char line[160];
  std::snprintf(line, sizeof line, "s1=%.6g s2=%.6g p0=%.6f predicted=%d\n", j.s1, j.s2, j.p0, j.predicted);
  out << line;
  return j;
}

AblationResult cmd_ablate(const RunConfig& config, const std::string& data, const std::string& out,
                          std::ostream& log) {
  if (out.empty()) throw UserError("--out is required");
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw UserError(e.what());
  }
  const Dataset ds = load_data(data);
  const auto held_out = select_split(ds, "heldout");
  fs::create_directories(out);
  write_text(fs::path(out) / "config.echo", config.echo());

  AblationResult result;
  TrainOptions ro;
  ro.out_dir = (fs::path(out) / "referee").string();
  ro.on_epoch = [&log](const std::string& line) { log << "referee " << line << "\n" << std::flush; };
  const TrainSummary rs = train_referee(config, ds, ro);
  LoadedReferee referee = load_referee(rs.checkpoint);
  PairImages referee_images(ds, config.image_size);
  std::vector<TokenSeq> refs;
  for (const auto* e : held_out) refs.push_back(e->caption);
  result.ground_truth_accuracy =
      evaluate_referee(*referee.model, referee.vocab, referee_images, held_out, refs, config.seed).accuracy;

  for (auto tactic : {FusionTactic::kConcat, FusionTactic::kLinear, FusionTactic::kFeatureSharing,
                      FusionTactic::kHyperConv}) {
    RunConfig c = config;
    c.fusion = tactic;
    c.annotations = 0;
    const std::string name = fusion_name(tactic);
    TrainOptions go;
    go.out_dir = (fs::path(out) / name).string();
    go.on_epoch = [&log, name](const std::string& line) { log << name << " " << line << "\n" << std::flush; };
    fs::create_directories(go.out_dir);
    write_text(fs::path(go.out_dir) / "config.echo", c.echo());
    const TrainSummary gs = train_generator(c, ds, go);
    LoadedGenerator g = load_generator(gs.checkpoint);
    PairImages images(ds, c.image_size);
    const auto caps = generate_captions(*g.model, g.vocab, images, held_out, c.beam, c.max_len);
    AblationRow row;
    row.tactic = tactic;
    const std::string& last = gs.log.empty() ? std::string("loss=0") : gs.log.back();
    row.final_loss = std::stod(last.substr(last.find("loss=") + 5));
    row.bleu1 = bleu_n(caps, refs, 1);
    row.referee_accuracy =
        evaluate_referee(*referee.model, referee.vocab, referee_images, held_out, caps, config.seed).accuracy;
    result.rows.push_back(row);
  }

  std::string t = "tactic  final_loss  BLEU-1  referee\n";
  for (const auto& r : result.rows) {
    char line[128];
    std::snprintf(line, sizeof line, "%-6s  %10.6f  %6.4f  %7.4f\n", fusion_name(r.tactic).c_str(),
                  r.final_loss, r.bleu1, r.referee_accuracy);
    t += line;
  }
  t += "ground-truth referee accuracy: " + fixed(result.ground_truth_accuracy) + "\n";
  const double tc = result.rows.front().referee_accuracy, hc = result.rows.back().referee_accuracy;
  t += std::string("hc >= tc on referee accuracy: ") + (hc >= tc ? "yes" : "no") +
       " (single seed; reported, not gated)\n";
  t += "held-out pairs: " + std::to_string(held_out.size()) + ", seed: " + std::to_string(config.seed) + "\n";
  result.table = t;
  write_text(fs::path(out) / "ablation.txt", t);
  log << t;
  return result;
}

}  // namespace diffcap
