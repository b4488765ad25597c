#include "vccdsa/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "vccdsa/baselines.hpp"
#include "vccdsa/checkpoint.hpp"
#include "vccdsa/dataset_io.hpp"
#include "vccdsa/error.hpp"
#include "vccdsa/hashing.hpp"
#include "vccdsa/metrics.hpp"
#include "vccdsa/plot.hpp"
#include "vccdsa/png_io.hpp"
#include "vccdsa/rng.hpp"

#ifndef VCCDSA_VERSION
#define VCCDSA_VERSION "0.0.0"
#endif

namespace vccdsa {

using nlohmann::json;

namespace {

constexpr double kReferenceParameterCount = 19.32e6;

std::string hash12(const std::string& text) { return sha256_hex(text).substr(0, 12); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

// Config lines whose key starts with one of the prefixes, in canonical order.
std::string config_subset(const ExperimentConfig& cfg, std::initializer_list<const char*> prefixes) {
  std::istringstream in(to_text(cfg));
  std::string line, out;
  while (std::getline(in, line)) {
    for (const char* p : prefixes) {
      if (line.rfind(p, 0) == 0) {
        out += line + "\n";
        break;
      }
    }
  }
  return out;
}

json hardware_json() {
  std::string model = "unknown";
  std::ifstream cpu("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpu, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(colon + 2);
      break;
    }
  }
  return json{{"cpu", model}, {"logical_cores", std::thread::hardware_concurrency()}};
}

json inventory_json(const fs::path& dir, const std::vector<std::string>& exclude = {}) {
  json files = json::array();
  for (const auto& [rel, sha] : file_inventory(dir, exclude)) {
    files.push_back({{"path", rel}, {"sha256", sha}, {"bytes", fs::file_size(dir / rel)}});
  }
  return files;
}

json stats_json(const MdssStats& s) {
  return json{{"inserts", s.inserts}, {"rejections", s.rejections}, {"evictions", s.evictions}, {"mixes", s.mixes}};
}

MdssStats stats_from_json(const json& j) {
  MdssStats s;
  s.inserts = j.value("inserts", std::uint64_t{0});
  s.rejections = j.value("rejections", std::uint64_t{0});
  s.evictions = j.value("evictions", std::uint64_t{0});
  s.mixes = j.value("mixes", std::uint64_t{0});
  return s;
}

json summary_json(const MethodSummary& m) {
  json levels = json::object();
  for (const auto& [level, s] : m.by_level) {
    levels[std::to_string(level)] = {{"frames", s.frames}, {"ssim_percent", s.ssim}, {"psnr_db", s.psnr}};
  }
  return json{{"method", m.method},
              {"frames", m.frames},
              {"ssim_percent", m.ssim},
              {"psnr_db", m.psnr},
              {"inference_ms", m.inference_ms},
              {"by_level", levels}};
}

void say(std::ostream* log, const std::string& msg) {
  if (log) *log << msg << std::endl;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string seq_dir_name(int index, int level) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "seq_%04d_l%d", index, level);
  return buf;
}

}  // namespace

std::string version_string() { return VCCDSA_VERSION; }

std::vector<std::pair<std::string, std::string>> file_inventory(const fs::path& dir,
                                                                const std::vector<std::string>& exclude) {
  std::vector<std::pair<std::string, std::string>> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).generic_string();
    if (std::find(exclude.begin(), exclude.end(), rel) != exclude.end()) continue;
    out.emplace_back(rel, sha256_file(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

SplitCounts split_counts(int sequences, const std::array<int, 3>& percent) {
  SplitCounts c;
  c.train = sequences * percent[0] / 100;
  c.val = sequences * percent[1] / 100;
  c.test = sequences - c.train - c.val;
  return c;
}

std::uint64_t sequence_seed(const DatasetSpec& spec, int index) {
  return derive_seed(spec.seed, "sequence", {static_cast<std::uint64_t>(index)});
}

int sequence_level(const DatasetSpec& spec, int index) {
  return spec.levels[static_cast<std::size_t>(index) % spec.levels.size()];
}

std::string dataset_hash(const ExperimentConfig& cfg) {
  std::string text = "dataset_format=" + std::to_string(kDatasetFormatVersion) + "\n";
  text += config_subset(cfg, {"phantom.", "dataset."});
  if (cfg.dataset.label_source == "translate_reg") text += config_subset(cfg, {"registration."});
  return hash12(text);
}

DSASequence build_dataset_sequence(const ExperimentConfig& cfg, int index, int level) {
  DSASequence seq = make_sequence(cfg.dataset.phantom, level, sequence_seed(cfg.dataset, index));
  if (cfg.dataset.label_source == "translate_reg") {
    for (std::size_t t = 0; t < seq.lives.size(); ++t) {
      seq.weak_labels[t] = translation_registration_subtract(seq.lives[t], seq.masks[0], cfg.registration);
    }
  }
  return seq;
}

std::vector<DSASequence> load_sequences(const std::vector<fs::path>& dirs) {
  std::vector<DSASequence> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back(read_sequence(d));
  return out;
}

DatasetLayout cmd_generate(const ExperimentConfig& cfg, const fs::path& out, std::ostream* log) {
  cfg.validate();
  if (cfg.dataset.phantom.mask_frames < 2) throw DataError("mask_frames must be >= 2");
  DatasetLayout layout;
  layout.hash = dataset_hash(cfg);
  layout.root = out / "datasets" / layout.hash;
  const SplitCounts counts = split_counts(cfg.dataset.sequences, cfg.dataset.split);
  auto split_of = [&](int i) { return i < counts.train ? "train" : (i < counts.train + counts.val ? "val" : "test"); };
  for (int i = 0; i < cfg.dataset.sequences; ++i) {
    const std::string split = split_of(i);
    const fs::path dir = layout.root / split / seq_dir_name(i, sequence_level(cfg.dataset, i));
    if (split == "train") layout.train.push_back(dir);
    else if (split == "val") layout.val.push_back(dir);
    else {
      layout.test.push_back(dir);
      layout.test_indices.push_back(i);
    }
  }
  const fs::path index_path = layout.root / "dataset.json";
  if (fs::exists(index_path) && read_json(index_path).value("status", "") == "complete") {
    say(log, "dataset " + layout.hash + " already present, reusing");
    return layout;
  }
  say(log, "generating " + std::to_string(cfg.dataset.sequences) + " sequences into " + layout.root.string());
  const auto t0 = std::chrono::steady_clock::now();
  json seqs = json::array();
  for (int i = 0; i < cfg.dataset.sequences; ++i) {
    const int level = sequence_level(cfg.dataset, i);
    const std::string split = split_of(i);
    const fs::path rel = fs::path(split) / seq_dir_name(i, level);
    const DSASequence seq = build_dataset_sequence(cfg, i, level);
    write_sequence(seq, layout.root / rel);
    seqs.push_back({{"index", i}, {"split", split}, {"dir", rel.generic_string()}, {"id", seq.id},
                    {"seed", seq.seed}, {"level", level}});
  }
  json index{{"format_version", kDatasetFormatVersion},
             {"hash", layout.hash},
             {"config_text", config_subset(cfg, {"phantom.", "dataset.", "registration."})},
             {"counts", {{"train", counts.train}, {"val", counts.val}, {"test", counts.test}}},
             {"sequences", seqs},
             {"files", inventory_json(layout.root, {"dataset.json"})},
             {"status", "complete"}};
  write_json(index_path, index);
  say(log, "dataset written in " +
               fmt("%.1f", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) + " s");
  return layout;
}

namespace {

// Test sequences of the dataset regenerated at another motion level.
std::vector<fs::path> motion_test_set(const ExperimentConfig& cfg, const DatasetLayout& layout, int level,
                                      std::ostream* log) {
  const fs::path root = layout.root / "motion" / ("level_" + std::to_string(level));
  std::vector<fs::path> dirs;
  for (int i : layout.test_indices) dirs.push_back(root / seq_dir_name(i, level));
  const fs::path marker = root / "complete.json";
  if (fs::exists(marker)) return dirs;
  say(log, "generating level-" + std::to_string(level) + " test set");
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    write_sequence(build_dataset_sequence(cfg, layout.test_indices[k], level), dirs[k]);
  }
  write_json(marker, json{{"level", level}, {"sequences", dirs.size()}, {"files", inventory_json(root, {"complete.json"})}});
  return dirs;
}

}  // namespace

RunSpec default_run(const ExperimentConfig& cfg, const std::string& method) {
  RunSpec s;
  s.method = method;
  s.lambda = cfg.train.loss.lambda;
  s.mdss = cfg.train.mdss.enabled;
  s.seed = cfg.seeds.front();
  if (method == "live_only") {
    s.lambda = 0.0;
    s.mdss = false;
  } else if (method != "vccdsa") {
    throw ConfigError("not a trainable method: " + method);
  }
  return s;
}

ExperimentConfig resolve_run_config(const ExperimentConfig& cfg, const RunSpec& spec) {
  if (spec.method != "vccdsa" && spec.method != "live_only") throw ConfigError("not a trainable method: " + spec.method);
  ExperimentConfig r = cfg;
  r.train.loss.lambda = spec.lambda;
  r.train.mdss.enabled = spec.mdss;
  r.train.seed = spec.seed;
  r.train.live_only = spec.method == "live_only";
  r.arch.input_channels = r.train.live_only ? 1 : 2;
  r.seeds = {spec.seed};
  r.validate();
  return r;
}

std::string run_hash(const ExperimentConfig& cfg, const RunSpec& spec) {
  const ExperimentConfig r = resolve_run_config(cfg, spec);
  std::string text = "dataset=" + dataset_hash(r) + "\nmethod=" + spec.method + "\nseed=" + std::to_string(spec.seed) +
                     "\ncheckpoint_format=" + std::to_string(kCheckpointFormatVersion) + "\n";
  text += config_subset(r, {"arch.", "train.", "loss.", "mdss."});
  return sha256_hex(text);
}

RunOutcome cmd_train(const ExperimentConfig& cfg, const RunSpec& spec, const fs::path& out, std::ostream* log) {
  const ExperimentConfig r = resolve_run_config(cfg, spec);
  const std::string hash = run_hash(cfg, spec);
  RunOutcome outcome;
  outcome.dir = out / "runs" / (spec.method + "-" + hash.substr(0, 12));
  outcome.checkpoint = outcome.dir / "checkpoint.bin";
  const fs::path manifest_path = outcome.dir / "run_manifest.json";
  const std::string tag = "[" + outcome.dir.filename().string() + "]";
  if (fs::exists(manifest_path) && fs::exists(outcome.checkpoint)) {
    const json m = read_json(manifest_path);
    if (m.value("status", "") == "complete") {
      outcome.reused = true;
      outcome.train_seconds = m.at("timing").at("train_seconds").get<double>();
      outcome.parameter_count = m.at("parameter_count").get<std::size_t>();
      outcome.mdss = stats_from_json(m.at("mdss_stats"));
      say(log, tag + " complete run reused");
      return outcome;
    }
  }
  fs::create_directories(outcome.dir);
  const DatasetLayout layout = cmd_generate(r, out, log);
  const std::vector<DSASequence> data = load_sequences(layout.train);

  Network<float> net(r.arch, spec.seed);
  outcome.parameter_count = net.parameter_count();
  TrainConfig tc = r.train;
  const MdssConfig mdss = tc.mdss.resolved(tc.total_steps);

  json manifest{{"kind", "train"},
                {"status", "running"},
                {"version", version_string()},
                {"method", spec.method},
                {"run_hash", hash},
                {"out_root", fs::absolute(out).lexically_normal().string()},
                {"config_text", to_text(r)},
                {"run", {{"method", spec.method}, {"lambda", spec.lambda}, {"mdss", spec.mdss}, {"seed", spec.seed}}},
                {"seeds", {{"train", spec.seed}, {"network_init", spec.seed}, {"dataset", r.dataset.seed}}},
                {"dataset", {{"hash", layout.hash}, {"root", layout.root.string()}, {"train_sequences", layout.train.size()}}},
                {"hyperparameters",
                 {{"lambda", tc.loss.lambda},
                  {"learning_rate", tc.learning_rate},
                  {"adam_beta1", tc.adam_beta1},
                  {"adam_beta2", tc.adam_beta2},
                  {"adam_epsilon", tc.adam_epsilon},
                  {"batch_size", tc.batch_size},
                  {"crop_size", tc.crop_size},
                  {"total_steps", tc.total_steps},
                  {"live_only", tc.live_only},
                  {"deterministic", tc.deterministic},
                  {"augment",
                   {{"flip", tc.augment.flip},
                    {"rotate", tc.augment.rotate},
                    {"translate_scale", tc.augment.translate_scale},
                    {"random_crop", tc.augment.random_crop}}},
                  {"mdss",
                   {{"enabled", mdss.enabled},
                    {"bank_capacity", mdss.bank_capacity},
                    {"warmup_steps", mdss.warmup_steps},
                    {"mix_probability", mdss.mix_probability},
                    {"insert_every", mdss.insert_every},
                    {"quality_gate", mdss.quality_gate}}},
                  {"arch", json::parse(arch_to_json(r.arch))}}},
                {"parameter_count", net.parameter_count()},
                {"hardware", hardware_json()}};
  write_json(manifest_path, manifest);

  say(log, tag + " training " + std::to_string(tc.total_steps) + " steps, " + std::to_string(net.parameter_count()) +
               " parameters, lambda " + fmt("%.3g", tc.loss.lambda) + ", mdss " + (mdss.enabled ? "on" : "off"));
  std::ofstream train_log(outcome.dir / "train_log.csv", std::ios::trunc);
  if (!train_log) throw IoError("cannot write train_log.csv in " + outcome.dir.string());
  write_train_log_header(train_log);
  TrainHooks hooks;
  const int report_every = std::max(1, tc.total_steps / 20);
  hooks.on_record = [&](const TrainRecord& rec) {
    write_train_log_row(train_log, rec);
    if (rec.step % report_every == 0 || rec.step == tc.total_steps) {
      train_log.flush();
      say(log, tag + " step " + std::to_string(rec.step) + "/" + std::to_string(tc.total_steps) + " L_total " +
                   fmt("%.5f", rec.l_total) + " L_con " + fmt("%.5f", rec.l_con));
    }
  };
  hooks.on_checkpoint = [&](int step, const Network<float>& n, const AdamState& adam) {
    save_checkpoint(outcome.dir / ("checkpoint_step_" + std::to_string(step) + ".bin"), n, step, &adam);
  };
  Trainer trainer(net, data, tc);
  TrainResult result;
  try {
    result = trainer.run(hooks);
  } catch (const DivergenceError& e) {
    train_log.flush();
    manifest["status"] = "diverged";
    manifest["diagnostics"] = {{"error", e.what()}, {"step", e.step()}};
    manifest["files"] = inventory_json(outcome.dir, {"run_manifest.json"});
    write_json(manifest_path, manifest);
    throw;
  }
  train_log.close();
  save_checkpoint(outcome.checkpoint, net, tc.total_steps, &trainer.optimizer());
  if (mdss.enabled && !tc.live_only) export_bank_snapshot(trainer.bank(), outcome.dir / "bank");

  outcome.train_seconds = result.wall_seconds;
  outcome.mdss = result.mdss;
  const TrainRecord& last = result.records.back();
  manifest["status"] = "complete";
  manifest["final_parameter_hash"] = result.parameter_hash;
  manifest["final_losses"] = {{"step", last.step}, {"L_fid1", last.l_fid1}, {"L_fid2", last.l_fid2},
                              {"L_con", last.l_con}, {"L_total", last.l_total}};
  manifest["timing"] = {{"train_seconds", result.wall_seconds},
                        {"seconds_per_step", result.wall_seconds / tc.total_steps}};
  manifest["mdss_stats"] = stats_json(result.mdss);
  manifest["bank_size"] = result.bank_size;
  manifest["files"] = inventory_json(outcome.dir, {"run_manifest.json"});
  write_json(manifest_path, manifest);
  say(log, tag + " done in " + fmt("%.1f", result.wall_seconds) + " s");
  return outcome;
}

RunOutcome resume_from_manifest(const fs::path& manifest, std::ostream* log) {
  const json m = read_json(manifest);
  const ExperimentConfig cfg = parse_experiment_config(m.at("config_text").get<std::string>());
  RunSpec spec;
  const json& run = m.at("run");
  spec.method = run.at("method").get<std::string>();
  spec.lambda = run.at("lambda").get<double>();
  spec.mdss = run.at("mdss").get<bool>();
  spec.seed = run.at("seed").get<std::uint64_t>();
  return cmd_train(cfg, spec, m.at("out_root").get<std::string>(), log);
}

const MethodSummary& EvalOutcome::at(const std::string& method) const {
  for (const auto& m : methods) {
    if (m.method == method) return m;
  }
  throw ArgumentError("no evaluation results for method " + method);
}

EvalOutcome evaluate(const ExperimentConfig& cfg, const std::vector<EvalMethod>& methods,
                     const std::vector<fs::path>& sequences, const fs::path& dir, std::ostream* log) {
  if (methods.empty()) throw ArgumentError("no methods to evaluate");
  if (sequences.empty()) throw DataError("no test sequences");
  const std::vector<DSASequence> data = load_sequences(sequences);
  std::vector<std::optional<Network<float>>> nets(methods.size());
  for (std::size_t k = 0; k < methods.size(); ++k) {
    const auto& m = methods[k];
    if (m.kind == "network") {
      nets[k] = load_checkpoint(m.checkpoint).network;
    } else if (m.kind != "subtract" && m.kind != "translate_reg") {
      throw ConfigError("unknown evaluation method kind " + m.kind);
    }
  }
  auto run_method = [&](std::size_t k, const ImageFrame& mask, const ImageFrame& live) {
    const auto& m = methods[k];
    if (m.kind == "network") return clipped(predict(*nets[k], mask, live));
    if (m.kind == "subtract") return subtract(live, mask);
    return translation_registration_subtract(live, mask, cfg.registration);
  };

  fs::create_directories(dir);
  if (cfg.eval.save_frames > 0) {
    for (const auto& m : methods) fs::create_directories(dir / "frames" / m.name);
    fs::create_directories(dir / "frames" / "gt");
  }
  std::ofstream csv(dir / "metrics.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot write " + (dir / "metrics.csv").string());
  write_metrics_csv_header(csv);
  std::vector<MethodSummary> sums(methods.size());
  for (std::size_t k = 0; k < methods.size(); ++k) sums[k].method = methods[k].name;
  int saved = 0;
  for (const DSASequence& seq : data) {
    for (std::size_t t = 0; t < seq.lives.size(); ++t) {
      const bool save = saved < cfg.eval.save_frames;
      for (std::size_t k = 0; k < methods.size(); ++k) {
        const ImageFrame pred = run_method(k, seq.masks[0], seq.lives[t]);
        const MetricsRecord rec{seq.id, static_cast<int>(t), methods[k].name, ssim(pred, seq.vessels_gt[t]),
                                psnr(pred, seq.vessels_gt[t])};
        write_metrics_csv_row(csv, rec);
        MethodSummary& s = sums[k];
        ++s.frames;
        s.ssim += rec.ssim_percent;
        s.psnr += rec.psnr_db;
        LevelSummary& ls = s.by_level[seq.level];
        ++ls.frames;
        ls.ssim += rec.ssim_percent;
        ls.psnr += rec.psnr_db;
        if (save) write_png16(dir / "frames" / methods[k].name / (seq.id + "_" + std::to_string(t) + ".png"), pred);
      }
      if (save) {
        write_png16(dir / "frames" / "gt" / (seq.id + "_" + std::to_string(t) + ".png"), seq.vessels_gt[t]);
        ++saved;
      }
    }
  }
  csv.close();
  for (auto& s : sums) {
    s.ssim /= static_cast<double>(s.frames);
    s.psnr /= static_cast<double>(s.frames);
    for (auto& [level, ls] : s.by_level) {
      ls.ssim /= static_cast<double>(ls.frames);
      ls.psnr /= static_cast<double>(ls.frames);
    }
  }
  // Single-frame wall time: median over repeats after warmup passes.
  const ImageFrame& mask0 = data.front().masks[0];
  const ImageFrame& live0 = data.front().lives.back();
  for (std::size_t k = 0; k < methods.size(); ++k) {
    for (int w = 0; w < cfg.eval.timing_warmup; ++w) run_method(k, mask0, live0);
    std::vector<double> ms;
    for (int rep = 0; rep < cfg.eval.timing_repeats; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      const ImageFrame out = run_method(k, mask0, live0);
      ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
      if (out.empty()) throw Error("empty prediction");
    }
    std::nth_element(ms.begin(), ms.begin() + static_cast<std::ptrdiff_t>(ms.size() / 2), ms.end());
    sums[k].inference_ms = ms[ms.size() / 2];
  }

  json summary{{"frames_per_method", sums.front().frames}, {"methods", json::array()}};
  for (const auto& s : sums) summary["methods"].push_back(summary_json(s));
  json inputs = json::array();
  for (const auto& m : methods) {
    json e{{"name", m.name}, {"kind", m.kind}};
    if (m.kind == "network") e["checkpoint"] = {{"path", m.checkpoint.string()}, {"sha256", sha256_file(m.checkpoint)}};
    inputs.push_back(e);
  }
  summary["inputs"] = inputs;
  summary["aggregation"] = "unweighted mean over test frames";
  write_json(dir / "summary.json", summary);

  std::vector<int> levels;
  for (const auto& [level, ls] : sums.front().by_level) levels.push_back(level);
  if (levels.size() > 1) {
    PlotSpec psnr_plot{"PSNR by motion level (test split)", "motion level", "PSNR (dB)", {}, false};
    PlotSpec ssim_plot{"SSIM by motion level (test split)", "motion level", "SSIM (%)", {}, false};
    for (const auto& s : sums) {
      PlotSeries ps{s.method, {}, {}}, ss{s.method, {}, {}};
      for (const auto& [level, ls] : s.by_level) {
        ps.x.push_back(level);
        ps.y.push_back(ls.psnr);
        ss.x.push_back(level);
        ss.y.push_back(ls.ssim);
      }
      psnr_plot.series.push_back(ps);
      ssim_plot.series.push_back(ss);
    }
    write_svg(dir / "psnr_vs_level.svg", psnr_plot);
    write_svg(dir / "ssim_vs_level.svg", ssim_plot);
  }
  write_json(dir / "eval_manifest.json", json{{"kind", "eval"},
                                              {"version", version_string()},
                                              {"sequences", sequences.size()},
                                              {"registration", config_subset(cfg, {"registration."})},
                                              {"hardware", hardware_json()},
                                              {"files", inventory_json(dir, {"eval_manifest.json"})}});
  for (const auto& s : sums) {
    say(log, "  " + s.method + ": SSIM " + fmt("%.3f", s.ssim) + " %, PSNR " + fmt("%.3f", s.psnr) + " dB, " +
                 fmt("%.2f", s.inference_ms) + " ms/frame");
  }
  return EvalOutcome{dir, sums};
}

EvalOutcome cmd_eval(const ExperimentConfig& cfg, const fs::path& out, const std::optional<fs::path>& checkpoint,
                     std::ostream* log) {
  cfg.validate();
  const DatasetLayout layout = cmd_generate(cfg, out, log);
  std::vector<EvalMethod> methods;
  std::string key = "dataset=" + layout.hash + "\n" + config_subset(cfg, {"registration.", "eval."});
  for (const auto& m : cfg.methods) {
    EvalMethod em{m, "network", {}};
    if (m == "subtract" || m == "translate_reg") {
      em.kind = m;
    } else if (m == "vccdsa" && checkpoint) {
      em.checkpoint = *checkpoint;
    } else {
      em.checkpoint = cmd_train(cfg, default_run(cfg, m), out, log).checkpoint;
    }
    key += m + "=" + (em.kind == "network" ? sha256_file(em.checkpoint) : em.kind) + "\n";
    methods.push_back(em);
  }
  const fs::path dir = out / "eval" / ("eval-" + hash12(key));
  say(log, "evaluating " + std::to_string(methods.size()) + " methods on " + std::to_string(layout.test.size()) +
               " test sequences -> " + dir.string());
  return evaluate(cfg, methods, layout.test, dir, log);
}

LambdaSweep cmd_sweep_lambda(const ExperimentConfig& cfg, const fs::path& out, std::ostream* log) {
  cfg.validate();
  const DatasetLayout layout = cmd_generate(cfg, out, log);
  LambdaSweep sweep;
  std::string key;
  std::vector<std::pair<double, RunOutcome>> runs;
  for (double l : cfg.lambdas) {
    RunSpec spec = default_run(cfg);
    spec.lambda = l;
    runs.emplace_back(l, cmd_train(cfg, spec, out, log));
    key += run_hash(cfg, spec) + "\n";
  }
  sweep.dir = out / "sweeps" / ("lambda-" + hash12(key + config_subset(cfg, {"registration.", "eval."})));
  std::string csv = "lambda,ssim_percent,psnr_db,run\n";
  PlotSeries ps{"vccdsa", {}, {}}, ss{"vccdsa", {}, {}};
  for (const auto& [l, run] : runs) {
    say(log, "lambda " + fmt("%.3g", l));
    const EvalOutcome ev = evaluate(cfg, {{"vccdsa", "network", run.checkpoint}}, layout.test,
                                    sweep.dir / ("lambda_" + fmt("%.4g", l)), log);
    const MethodSummary& s = ev.at("vccdsa");
    sweep.points.push_back(LambdaPoint{l, s.psnr, s.ssim, run.dir});
    csv += fmt("%.6g", l) + "," + fmt("%.6f", s.ssim) + "," + fmt("%.6f", s.psnr) + "," + run.dir.string() + "\n";
    ps.x.push_back(l);
    ps.y.push_back(s.psnr);
    ss.x.push_back(l);
    ss.y.push_back(s.ssim);
  }
  write_text(sweep.dir / "lambda_sweep.csv", csv);
  json points = json::array();
  for (const auto& p : sweep.points) {
    points.push_back({{"lambda", p.lambda}, {"psnr_db", p.psnr}, {"ssim_percent", p.ssim}, {"run", p.run.string()}});
  }
  write_json(sweep.dir / "summary.json", json{{"kind", "sweep-lambda"}, {"points", points}});
  write_svg(sweep.dir / "psnr_vs_lambda.svg", PlotSpec{"Test PSNR vs lambda", "lambda", "PSNR (dB)", {ps}, false});
  write_svg(sweep.dir / "ssim_vs_lambda.svg", PlotSpec{"Test SSIM vs lambda", "lambda", "SSIM (%)", {ss}, false});
  return sweep;
}

MotionSweep cmd_sweep_motion(const ExperimentConfig& cfg, const fs::path& out, const std::optional<fs::path>& checkpoint,
                             std::ostream* log) {
  cfg.validate();
  const DatasetLayout layout = cmd_generate(cfg, out, log);
  MotionSweep sweep;
  sweep.checkpoint = checkpoint ? *checkpoint : cmd_train(cfg, default_run(cfg), out, log).checkpoint;
  sweep.levels = cfg.eval.motion_levels;
  const std::string ck_sha = sha256_file(sweep.checkpoint);
  sweep.dir = out / "sweeps" /
              ("motion-" + hash12(layout.hash + ck_sha + config_subset(cfg, {"registration.", "eval."})));
  const std::vector<EvalMethod> methods{{"vccdsa", "network", sweep.checkpoint}, {"subtract", "subtract", {}},
                                        {"translate_reg", "translate_reg", {}}};
  std::string csv = "level,method,ssim_percent,psnr_db\n";
  for (int level : sweep.levels) {
    say(log, "motion level " + std::to_string(level));
    const auto dirs = motion_test_set(cfg, layout, level, log);
    const EvalOutcome ev = evaluate(cfg, methods, dirs, sweep.dir / ("level_" + std::to_string(level)), log);
    for (const auto& s : ev.methods) {
      sweep.rows[s.method].push_back(s);
      csv += std::to_string(level) + "," + s.method + "," + fmt("%.6f", s.ssim) + "," + fmt("%.6f", s.psnr) + "\n";
    }
  }
  write_text(sweep.dir / "motion_sweep.csv", csv);
  json rows = json::array();
  PlotSpec psnr_plot{"Test PSNR vs motion level", "motion level", "PSNR (dB)", {}, false};
  PlotSpec ssim_plot{"Test SSIM vs motion level", "motion level", "SSIM (%)", {}, false};
  for (const auto& m : methods) {
    PlotSeries ps{m.name, {}, {}}, ss{m.name, {}, {}};
    const auto& per_level = sweep.rows.at(m.name);
    for (std::size_t i = 0; i < sweep.levels.size(); ++i) {
      rows.push_back({{"level", sweep.levels[i]}, {"method", m.name}, {"ssim_percent", per_level[i].ssim},
                      {"psnr_db", per_level[i].psnr}});
      ps.x.push_back(sweep.levels[i]);
      ps.y.push_back(per_level[i].psnr);
      ss.x.push_back(sweep.levels[i]);
      ss.y.push_back(per_level[i].ssim);
    }
    psnr_plot.series.push_back(ps);
    ssim_plot.series.push_back(ss);
  }
  write_json(sweep.dir / "summary.json", json{{"kind", "sweep-motion"},
                                              {"checkpoint", {{"path", sweep.checkpoint.string()}, {"sha256", ck_sha}}},
                                              {"rows", rows}});
  write_svg(sweep.dir / "psnr_vs_level.svg", psnr_plot);
  write_svg(sweep.dir / "ssim_vs_level.svg", ssim_plot);
  return sweep;
}

double AblationArm::mean_psnr() const {
  double s = 0.0;
  for (double v : psnr) s += v;
  return psnr.empty() ? 0.0 : s / static_cast<double>(psnr.size());
}

double AblationArm::mean_ssim() const {
  double s = 0.0;
  for (double v : ssim) s += v;
  return ssim.empty() ? 0.0 : s / static_cast<double>(ssim.size());
}

Ablation cmd_ablate(const ExperimentConfig& cfg, const std::string& kind, const fs::path& out, std::ostream* log) {
  cfg.validate();
  Ablation ab;
  ab.kind = kind;
  const RunSpec base = default_run(cfg);
  if (kind == "lsmp") {
    ab.with = {"mask+live", {base}, {}, {}};
    RunSpec lo = default_run(cfg, "live_only");
    ab.without = {"live-only", {lo}, {}, {}};
  } else if (kind == "vcs") {
    RunSpec off = base;
    off.lambda = 0.0;
    ab.with = {"lambda=" + fmt("%.3g", base.lambda), {base}, {}, {}};
    ab.without = {"lambda=0", {off}, {}, {}};
  } else if (kind == "mdss") {
    ab.with.label = "mdss on";
    ab.without.label = "mdss off";
    for (std::uint64_t seed : cfg.seeds) {
      RunSpec on = base, off = base;
      on.seed = off.seed = seed;
      on.mdss = true;
      off.mdss = false;
      ab.with.runs.push_back(on);
      ab.without.runs.push_back(off);
    }
  } else {
    throw ArgumentError("ablate expects lsmp, vcs or mdss, got " + kind);
  }
  const DatasetLayout layout = cmd_generate(cfg, out, log);
  std::string key;
  for (const auto* arm : {&ab.with, &ab.without}) {
    for (const auto& r : arm->runs) key += run_hash(cfg, r) + "\n";
  }
  ab.dir = out / "ablations" / (kind + "-" + hash12(key + config_subset(cfg, {"registration.", "eval."})));
  std::string csv = "arm,seed,method,ssim_percent,psnr_db\n";
  json arms = json::array();
  for (auto* arm : {&ab.with, &ab.without}) {
    json seeds = json::array();
    for (const auto& r : arm->runs) {
      const RunOutcome run = cmd_train(cfg, r, out, log);
      const std::string name = arm == &ab.with ? "with" : "without";
      say(log, kind + " ablation, " + arm->label + ", seed " + std::to_string(r.seed));
      const EvalOutcome ev = evaluate(cfg, {{r.method, "network", run.checkpoint}}, layout.test,
                                      ab.dir / (name + "_seed" + std::to_string(r.seed)), log);
      const MethodSummary& s = ev.at(r.method);
      arm->psnr.push_back(s.psnr);
      arm->ssim.push_back(s.ssim);
      csv += arm->label + "," + std::to_string(r.seed) + "," + r.method + "," + fmt("%.6f", s.ssim) + "," +
             fmt("%.6f", s.psnr) + "\n";
      seeds.push_back({{"seed", r.seed}, {"method", r.method}, {"lambda", r.lambda}, {"mdss", r.mdss},
                       {"psnr_db", s.psnr}, {"ssim_percent", s.ssim}, {"run", run.dir.string()},
                       {"mdss_stats", stats_json(run.mdss)}});
    }
    arms.push_back({{"label", arm->label}, {"runs", seeds}, {"mean_psnr_db", arm->mean_psnr()},
                    {"mean_ssim_percent", arm->mean_ssim()}});
  }
  write_text(ab.dir / "ablation.csv", csv);
  write_json(ab.dir / "summary.json", json{{"kind", "ablate-" + kind}, {"arms", arms}});
  return ab;
}

fs::path cmd_report(const ExperimentConfig& cfg, const fs::path& out) {
  std::ostringstream md;
  md << "# VCC-DSA desk-scale report\n\n";
  md << "version " << version_string() << "\n\n";
  ArchConfig full = cfg.arch;
  full.scale_factor = 1.0;
  full.input_channels = 2;
  const std::size_t full_params = count_parameters(full);
  md << "## Architecture\n\n";
  md << "| setting | parameters |\n|---|---|\n";
  md << "| scale 1.0 | " << full_params << " (" << fmt("%+.1f", 100.0 * (full_params / kReferenceParameterCount - 1.0))
     << "% vs 19.32M) |\n";
  md << "| scale " << fmt("%.3g", cfg.arch.scale_factor) << " | " << count_parameters(cfg.arch) << " |\n\n";
  md << "Tail input channels at scale 1.0: " << tail_input_channels(full) << "\n\n";

  std::vector<fs::path> summaries;
  for (const char* sub : {"eval", "sweeps", "ablations"}) {
    const fs::path root = out / sub;
    if (!fs::exists(root)) continue;
    for (const auto& e : fs::directory_iterator(root)) {
      if (fs::exists(e.path() / "summary.json")) summaries.push_back(e.path() / "summary.json");
    }
  }
  std::sort(summaries.begin(), summaries.end());
  for (const auto& p : summaries) {
    const json s = read_json(p);
    const std::string rel = fs::relative(p.parent_path(), out).generic_string();
    if (s.contains("methods")) {
      md << "## Evaluation `" << rel << "`\n\n| method | frames | SSIM (%) | PSNR (dB) | ms/frame |\n|---|---|---|---|---|\n";
      for (const auto& m : s["methods"]) {
        md << "| " << m["method"].get<std::string>() << " | " << m["frames"].get<std::size_t>() << " | "
           << fmt("%.3f", m["ssim_percent"].get<double>()) << " | " << fmt("%.3f", m["psnr_db"].get<double>())
           << " | " << fmt("%.2f", m["inference_ms"].get<double>()) << " |\n";
      }
      md << "\n";
    } else if (s.value("kind", "") == "sweep-lambda") {
      md << "## Lambda sweep `" << rel << "`\n\n| lambda | SSIM (%) | PSNR (dB) |\n|---|---|---|\n";
      for (const auto& pt : s["points"]) {
        md << "| " << fmt("%.3g", pt["lambda"].get<double>()) << " | " << fmt("%.3f", pt["ssim_percent"].get<double>())
           << " | " << fmt("%.3f", pt["psnr_db"].get<double>()) << " |\n";
      }
      md << "\n";
    } else if (s.value("kind", "") == "sweep-motion") {
      md << "## Motion sweep `" << rel << "`\n\n| level | method | SSIM (%) | PSNR (dB) |\n|---|---|---|---|\n";
      for (const auto& r : s["rows"]) {
        md << "| " << r["level"].get<int>() << " | " << r["method"].get<std::string>() << " | "
           << fmt("%.3f", r["ssim_percent"].get<double>()) << " | " << fmt("%.3f", r["psnr_db"].get<double>())
           << " |\n";
      }
      md << "\n";
    } else if (s.value("kind", "").rfind("ablate-", 0) == 0) {
      md << "## Ablation `" << rel << "`\n\n| arm | seeds | mean SSIM (%) | mean PSNR (dB) |\n|---|---|---|---|\n";
      for (const auto& a : s["arms"]) {
        md << "| " << a["label"].get<std::string>() << " | " << a["runs"].size() << " | "
           << fmt("%.3f", a["mean_ssim_percent"].get<double>()) << " | " << fmt("%.3f", a["mean_psnr_db"].get<double>())
           << " |\n";
      }
      md << "\n";
    }
  }
  md << "Translation-search registration stands in for the device's commercial registration; it searches integer "
        "offsets only and is a deliberately weak comparator.\n";
  const fs::path path = out / "report.md";
  write_text(path, md.str());
  return path;
}

}  // namespace vccdsa
