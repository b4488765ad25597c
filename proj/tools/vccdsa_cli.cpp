#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vccdsa/error.hpp"
#include "vccdsa/experiment_config.hpp"
#include "vccdsa/harness.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool deterministic = true;
  std::string out;
  std::optional<double> lambda;
  std::optional<int> steps;
  std::optional<bool> mdss;
  std::vector<std::string> methods;
  std::string checkpoint;
  std::string from_manifest;
  std::string ablate_kind;
};

vccdsa::ExperimentConfig resolve(const Options& o) {
  vccdsa::ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = vccdsa::load_experiment_config(o.config_path);
  for (const auto& a : o.overrides) vccdsa::apply_override(cfg, a);
  if (o.seed) cfg.seeds = {*o.seed};
  if (o.lambda) cfg.train.loss.lambda = *o.lambda;
  if (o.steps) cfg.train.total_steps = *o.steps;
  if (o.mdss) cfg.train.mdss.enabled = *o.mdss;
  if (!o.methods.empty()) cfg.methods = o.methods;
  if (!o.out.empty()) cfg.out_dir = o.out;
  cfg.train.deterministic = o.deterministic;
  cfg.validate();
  return cfg;
}

std::optional<fs::path> checkpoint_of(const Options& o) {
  if (o.checkpoint.empty()) return std::nullopt;
  return fs::path(o.checkpoint);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale VCC-DSA laboratory: phantom generation, training, evaluation and sweeps"};
  app.require_subcommand(1);
  Options o;
  app.add_option("-c,--config", o.config_path, "key = value experiment config file")->check(CLI::ExistingFile);
  app.add_option("--set", o.overrides, "override one config key (key=value), repeatable");
  app.add_option("--seed", o.seed, "run seed (replaces the seeds list)");
  app.add_flag("--deterministic,!--no-deterministic", o.deterministic,
               "single-threaded loading and zeroed wall times in logs (default on)");
  app.add_option("-o,--out", o.out, "output root (default: out_dir from the config, vccdsa_out)");
  app.add_option("--lambda", o.lambda, "consistency weight")->check(CLI::Range(0.0, 1.0));
  app.add_option("--steps", o.steps, "training steps")->check(CLI::PositiveNumber);
  app.add_option("--mdss", o.mdss, "enable the vascular bank mixup (true/false)");
  app.add_option("--methods", o.methods, "methods: vccdsa, live_only, subtract, translate_reg")->delimiter(',');
  app.fallthrough();

  auto* gen = app.add_subcommand("generate", "write train/val/test phantom sequences");
  auto* train = app.add_subcommand("train", "train the configured method (vccdsa or live_only)");
  train->add_option("--from-manifest", o.from_manifest, "resume the run described by a run_manifest.json")
      ->check(CLI::ExistingFile);
  auto* eval = app.add_subcommand("eval", "score methods on the test split");
  eval->add_option("--checkpoint", o.checkpoint, "score this checkpoint as vccdsa")->check(CLI::ExistingFile);
  auto* sweep_lambda = app.add_subcommand("sweep-lambda", "train and score one model per sweep.lambdas value");
  auto* sweep_motion = app.add_subcommand("sweep-motion", "score one checkpoint on test sets at each motion level");
  sweep_motion->add_option("--checkpoint", o.checkpoint, "checkpoint to sweep")->check(CLI::ExistingFile);
  auto* ablate = app.add_subcommand("ablate", "component ablation: lsmp, vcs or mdss");
  ablate->add_option("component", o.ablate_kind, "lsmp | vcs | mdss")
      ->required()
      ->check(CLI::IsMember({"lsmp", "vcs", "mdss"}));
  auto* report = app.add_subcommand("report", "collect summaries under the output root into report.md");
  auto* show = app.add_subcommand("config", "print the resolved configuration");

  CLI11_PARSE(app, argc, argv);

  try {
    const vccdsa::ExperimentConfig cfg = resolve(o);
    const fs::path out = cfg.out_dir;
    std::ostream* log = &std::cerr;
    if (*show) {
      std::cout << vccdsa::to_text(cfg);
    } else if (*gen) {
      const auto layout = vccdsa::cmd_generate(cfg, out, log);
      std::cout << layout.root.string() << "\n"
                << "train " << layout.train.size() << ", val " << layout.val.size() << ", test " << layout.test.size()
                << "\n";
    } else if (*train) {
      vccdsa::RunOutcome run;
      if (!o.from_manifest.empty()) {
        run = vccdsa::resume_from_manifest(o.from_manifest, log);
      } else {
        const std::string method = cfg.methods.front() == "live_only" ? "live_only" : "vccdsa";
        run = vccdsa::cmd_train(cfg, vccdsa::default_run(cfg, method), out, log);
      }
      std::cout << run.checkpoint.string() << "\n";
    } else if (*eval) {
      const auto ev = vccdsa::cmd_eval(cfg, out, checkpoint_of(o), log);
      std::cout << (ev.dir / "summary.json").string() << "\n";
      for (const auto& m : ev.methods) {
        std::cout << m.method << "\tSSIM " << m.ssim << " %\tPSNR " << m.psnr << " dB\t" << m.inference_ms
                  << " ms/frame\n";
      }
    } else if (*sweep_lambda) {
      const auto sweep = vccdsa::cmd_sweep_lambda(cfg, out, log);
      std::cout << (sweep.dir / "summary.json").string() << "\n";
      for (const auto& p : sweep.points) {
        std::cout << "lambda " << p.lambda << "\tSSIM " << p.ssim << " %\tPSNR " << p.psnr << " dB\n";
      }
    } else if (*sweep_motion) {
      const auto sweep = vccdsa::cmd_sweep_motion(cfg, out, checkpoint_of(o), log);
      std::cout << (sweep.dir / "summary.json").string() << "\n";
      for (std::size_t i = 0; i < sweep.levels.size(); ++i) {
        std::cout << "level " << sweep.levels[i];
        for (const auto& [method, rows] : sweep.rows) std::cout << "\t" << method << " " << rows[i].psnr << " dB";
        std::cout << "\n";
      }
    } else if (*ablate) {
      const auto ab = vccdsa::cmd_ablate(cfg, o.ablate_kind, out, log);
      std::cout << (ab.dir / "summary.json").string() << "\n";
      for (const auto* arm : {&ab.with, &ab.without}) {
        std::cout << arm->label << "\tmean SSIM " << arm->mean_ssim() << " %\tmean PSNR " << arm->mean_psnr()
                  << " dB\n";
      }
    } else if (*report) {
      std::cout << vccdsa::cmd_report(cfg, out).string() << "\n";
    }
  } catch (const vccdsa::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 3;
  } catch (const vccdsa::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const vccdsa::ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  } catch (const vccdsa::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
