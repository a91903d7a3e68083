#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "diffcap/checkpoint.h"
#include "diffcap/commands.h"

namespace {

struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> fusion;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "override one key, key=value (repeatable)");
    app->add_option("--seed", seed, "run seed");
    app->add_option("--fusion", fusion, "fusion tactic: tc, lnn, fsn or hc");
  }

  // defaults < config file < --set < --seed/--fusion
  diffcap::RunConfig resolve() const {
    diffcap::RunConfig config;
    if (!file.empty()) diffcap::apply_config(config, diffcap::read_config_file(file));
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw diffcap::ConfigError("--set expects key=value, got '" + s + "'");
      auto trim = [](std::string v) {
        v.erase(0, v.find_first_not_of(" \t"));
        v.erase(v.find_last_not_of(" \t") + 1);
        return v;
      };
      config.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    if (seed) config.seed = *seed;
    if (fusion) config.set("fusion", *fusion);
    config.validate();
    return config;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dcap: describe the difference between two images"};
  app.require_subcommand(1);

  diffcap::SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic pair corpus");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--pairs", synth.pairs, "number of pairs");
  synth_cmd->add_option("--seed", synth.seed, "corpus seed");
  synth_cmd->add_option("--size", synth.size, "image side in pixels");
  synth_cmd->add_flag("--force", synth.force, "write into a non-empty directory");

  diffcap::TrainCommand train;
  ConfigFlags train_flags;
  bool train_referee = false;
  auto* train_cmd = app.add_subcommand("train", "train the caption generator or the referee");
  train_cmd->add_option("--data", train.data, "manifest.tsv")->required();
  train_cmd->add_option("--out", train.out, "run directory")->required();
  train_cmd->add_option("--resume", train.resume, "checkpoint to continue from");
  train_cmd->add_flag("--referee", train_referee, "train the referee instead of the generator");
  train_flags.attach(train_cmd);

  diffcap::CaptionOptions caption;
  std::size_t caption_max_len = 0;
  auto* caption_cmd = app.add_subcommand("caption", "caption one image pair");
  caption_cmd->add_option("--checkpoint", caption.checkpoint, "generator checkpoint")->required();
  caption_cmd->add_option("--img1", caption.img1, "first image (PPM)");
  caption_cmd->add_option("--img2", caption.img2, "second image (PPM)");
  caption_cmd->add_option("--features", caption.features, "precomputed feature pair");
  caption_cmd->add_option("--beam", caption.beam, "beam width; 1 is greedy");
  caption_cmd->add_option("--nbest", caption.nbest, "hypotheses to list");
  auto* max_len_opt = caption_cmd->add_option("--max-len", caption_max_len, "token limit including the end token");

  diffcap::EvaluateOptions evaluate;
  std::size_t evaluate_beam = 0;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score captions of a split");
  evaluate_cmd->add_option("--checkpoint", evaluate.checkpoint, "generator checkpoint");
  evaluate_cmd->add_option("--data", evaluate.data, "manifest.tsv")->required();
  evaluate_cmd->add_option("--split", evaluate.split, "train, val, test or heldout");
  evaluate_cmd->add_option("--referee-checkpoint,--referee", evaluate.referee_checkpoint, "referee checkpoint");
  evaluate_cmd->add_option("--out", evaluate.out, "directory for metrics.txt and judgments.tsv");
  evaluate_cmd->add_flag("--ground-truth", evaluate.ground_truth, "score the reference captions");
  auto* beam_opt = evaluate_cmd->add_option("--beam", evaluate_beam, "beam width");

  diffcap::JudgeOptions judge;
  auto* judge_cmd = app.add_subcommand("judge", "ask a referee which image a caption describes");
  judge_cmd->add_option("--referee-checkpoint,--referee", judge.referee_checkpoint, "referee checkpoint")->required();
  judge_cmd->add_option("--img1", judge.img1, "first image (PPM)")->required();
  judge_cmd->add_option("--img2", judge.img2, "second image (PPM)")->required();
  judge_cmd->add_option("--caption", judge.caption, "caption text")->required();

  std::string ablate_data, ablate_out;
  ConfigFlags ablate_flags;
  auto* ablate_cmd = app.add_subcommand("ablate", "train every fusion tactic and compare");
  ablate_cmd->add_option("--data", ablate_data, "manifest.tsv")->required();
  ablate_cmd->add_option("--out", ablate_out, "output directory")->required();
  ablate_flags.attach(ablate_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth_cmd) {
      diffcap::cmd_synth(synth, std::cout);
    } else if (*train_cmd) {
      train.config = train_flags.resolve();
      train.target = train_referee ? diffcap::TrainTarget::kReferee : diffcap::TrainTarget::kGenerator;
      const auto summary = diffcap::cmd_train(train, std::cout);
      std::cout << "checkpoint " << summary.checkpoint << "\n";
    } else if (*caption_cmd) {
      if (max_len_opt->count()) caption.max_len = caption_max_len;
      diffcap::cmd_caption(caption, std::cout);
    } else if (*evaluate_cmd) {
      if (beam_opt->count()) evaluate.beam = evaluate_beam;
      diffcap::cmd_evaluate(evaluate, std::cout);
    } else if (*judge_cmd) {
      diffcap::cmd_judge(judge, std::cout);
    } else if (*ablate_cmd) {
      diffcap::cmd_ablate(ablate_flags.resolve(), ablate_data, ablate_out, std::cout);
    }
  } catch (const diffcap::UserError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const diffcap::ManifestError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
