#include "vccdsa/dataset_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json_convert.hpp"
#include "vccdsa/error.hpp"
#include "vccdsa/png_io.hpp"
#include "vccdsa/rng.hpp"

namespace vccdsa {

namespace fs = std::filesystem;
using detail::json;

namespace {

std::string frame_name(const char* prefix, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d.png", prefix, index);
  return buf;
}

}  // namespace

std::string phantom_config_to_json(const PhantomConfig& config) { return detail::to_json(config).dump(2); }

PhantomConfig phantom_config_from_json(const std::string& text) {
  return detail::phantom_from_json(json::parse(text));
}

void write_sequence(const DSASequence& seq, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["format_version"] = kDatasetFormatVersion;
  manifest["id"] = seq.id;
  manifest["level"] = seq.level;
  manifest["seed"] = seq.seed;
  manifest["config"] = detail::to_json(seq.config);

  json masks = json::array();
  for (std::size_t k = 0; k < seq.masks.size(); ++k) {
    const std::string name = frame_name("mask", static_cast<int>(k));
    write_png16(dir / name, seq.masks[k]);
    masks.push_back({{"file", name}, {"motion", detail::to_json(seq.mask_motion[k])}});
  }
  json lives = json::array();
  for (std::size_t t = 0; t < seq.lives.size(); ++t) {
    const int i = static_cast<int>(t);
    write_png16(dir / frame_name("live", i), seq.lives[t]);
    write_png16(dir / frame_name("gt", i), seq.vessels_gt[t]);
    write_png16(dir / frame_name("label", i), seq.weak_labels[t]);
    lives.push_back({{"file", frame_name("live", i)},
                     {"gt", frame_name("gt", i)},
                     {"label", frame_name("label", i)},
                     {"contrast", seq.contrast[t]},
                     {"motion", detail::to_json(seq.live_motion[t])}});
  }
  manifest["masks"] = std::move(masks);
  manifest["lives"] = std::move(lives);

  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

DSASequence read_sequence(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("missing manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("cannot parse " + (dir / "manifest.json").string() + ": " + e.what());
  }
  if (manifest.value("format_version", 0) != kDatasetFormatVersion) {
    throw IoError("unsupported dataset format version in " + dir.string());
  }
  DSASequence seq;
  seq.id = manifest.at("id").get<std::string>();
  seq.level = manifest.at("level").get<int>();
  seq.seed = manifest.at("seed").get<std::uint64_t>();
  seq.config = detail::phantom_from_json(manifest.at("config"));
  for (const json& m : manifest.at("masks")) {
    seq.masks.push_back(read_png16(dir / m.at("file").get<std::string>()));
    seq.mask_motion.push_back(detail::motion_from_json(m.at("motion")));
  }
  for (const json& l : manifest.at("lives")) {
    seq.lives.push_back(read_png16(dir / l.at("file").get<std::string>()));
    seq.vessels_gt.push_back(read_png16(dir / l.at("gt").get<std::string>()));
    seq.weak_labels.push_back(read_png16(dir / l.at("label").get<std::string>()));
    seq.contrast.push_back(l.at("contrast").get<double>());
    seq.live_motion.push_back(detail::motion_from_json(l.at("motion")));
  }
  seq.background_canonical = generate_background(seq.config, derive_seed(seq.seed, "sequence_background"));
  seq.vessel_canonical = generate_vessel_tree(seq.config, derive_seed(seq.seed, "sequence_vessel"));
  return seq;
}

}  // namespace vccdsa
