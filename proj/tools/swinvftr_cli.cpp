// Command-line front end: train, predict, eval, gradcheck, bench, synth, config.

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "gradcheck_command.hpp"
#include "swinvftr/bench.hpp"
#include "swinvftr/synthetic.hpp"
#include "swinvftr/trainer.hpp"

namespace fs = std::filesystem;
using namespace swinvftr;

namespace {

BlendMode parse_blend(const std::string& s) {
  if (s == "probability") return BlendMode::Probability;
  if (s == "logit") return BlendMode::Logit;
  throw ConfigError("blend must be probability or logit, got " + s);
}

int run_train(const std::string& config_path, const std::string& data, const std::string& out, bool resume) {
  const RunConfig run = read_run_config(config_path);
  const std::vector<Sample> samples = load_samples(read_manifest(data));
  SwinVftr model(run.model);
  std::cout << "training on " << samples.size() << " volumes, " << model.parameters().scalar_count()
            << " parameters\n";
  const TrainResult result = train(model, samples, run.train, {out, resume, &std::cout});
  std::cout << "done: " << result.steps << " steps, best loss " << result.best_loss << "\n";
  std::cout << "checkpoints in " << out << "\n";
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data, const std::string& report, const std::string& blend) {
  PredictOptions options;
  options.blend = parse_blend(blend);
  const Evaluation ev = evaluate_file(ckpt, data, report, options);
  std::cout << ev.mean.to_text();
  std::cout << "seconds_per_volume=" << std::fixed << std::setprecision(3) << ev.seconds_per_volume << "\n";
  return 0;
}

int run_bench_cmd(const std::string& config_path, const std::vector<int64_t>& timed) {
  const ModelConfig model = config_path.empty() ? ModelConfig::desk() : read_run_config(config_path).model;
  Dims3 input{0, 0, 0};
  if (!timed.empty()) {
    if (timed.size() != 3) throw ConfigError("--time expects D,H,W");
    input = {timed[0], timed[1], timed[2]};
  }
  std::cout << run_bench(model, {}, input).to_text();
  return 0;
}

int run_synth(uint64_t seed, int64_t count, const std::string& out, const std::vector<int64_t>& dims) {
  if (count < 1) throw ConfigError("--count must be at least 1");
  if (dims.size() != 3) throw ConfigError("--dims expects H,W,SCANS");
  fs::create_directories(out);
  std::vector<ManifestEntry> entries;
  for (int64_t i = 0; i < count; ++i) {
    const SyntheticCase c = generate_synthetic(seed + i, {dims[0], dims[1], dims[2]});
    std::ostringstream stem;
    stem << "case" << std::setw(3) << std::setfill('0') << i;
    const std::string image = stem.str() + "_image.svol", label = stem.str() + "_label.svol";
    write_volume(c.volume, (fs::path(out) / image).string());
    write_labels(c.labels, (fs::path(out) / label).string());
    entries.push_back({image, label});
  }
  write_manifest(entries, (fs::path(out) / "manifest.tsv").string());
  std::cout << "wrote " << count << " volumes and manifest.tsv to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D shifted-window transformer for retinal fluid segmentation"};
  app.require_subcommand(1);

  std::string config, data, out, ckpt, in, report, module = "all", blend = "probability";
  uint64_t seed = 0;
  int64_t count = 2;
  bool resume = false;
  std::vector<int64_t> dims{64, 64, 32}, timed;

  auto* train_cmd = app.add_subcommand("train", "train a model on a manifest");
  train_cmd->add_option("--config", config, "key = value config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--data", data, "manifest of image<TAB>label pairs")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out, "output directory")->required();
  train_cmd->add_flag("--resume", resume, "continue from <out>/last.svck");

  auto* predict_cmd = app.add_subcommand("predict", "segment one volume");
  predict_cmd->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--in", in, "input volume")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", out, "output label volume")->required();
  predict_cmd->add_option("--blend", blend, "probability or logit averaging");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  eval_cmd->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", data, "manifest")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--report", report, "report path (key=value; JSON written to <report>.json)")->required();
  eval_cmd->add_option("--blend", blend, "probability or logit averaging");

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad_cmd->add_option("--module", module, "all, ops, conv, windowing, attention, swin-block, va-block, losses, model");
  grad_cmd->add_option("--seed", seed, "input seed");

  auto* bench_cmd = app.add_subcommand("bench", "parameter and attention-cost report");
  bench_cmd->add_option("--config", config, "config file (desk defaults when omitted)")->check(CLI::ExistingFile);
  bench_cmd->add_option("--time", timed, "also time one forward pass at D,H,W")->delimiter(',');

  auto* synth_cmd = app.add_subcommand("synth", "write synthetic OCT-like volumes and a manifest");
  synth_cmd->add_option("--seed", seed, "seed of the first volume");
  synth_cmd->add_option("--count", count, "number of volumes");
  synth_cmd->add_option("--out", out, "output directory")->required();
  synth_cmd->add_option("--dims", dims, "H,W,SCANS")->delimiter(',');

  auto* config_cmd = app.add_subcommand("config", "print every config key with its default");

  CLI11_PARSE(app, argc, argv);
  retain_freed_memory();

  try {
    if (*train_cmd) return run_train(config, data, out, resume);
    if (*predict_cmd) {
      PredictOptions options;
      options.blend = parse_blend(blend);
      predict_file(ckpt, in, out, options);
      std::cout << "wrote " << out << "\n";
      return 0;
    }
    if (*eval_cmd) return run_eval(ckpt, data, report, blend);
    if (*grad_cmd) return run_gradcheck_f64(module, seed) ? 2 : 0;
    if (*bench_cmd) return run_bench_cmd(config, timed);
    if (*synth_cmd) return run_synth(seed, count, out, dims);
    if (*config_cmd) {
      std::cout << default_run_config_text();
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
