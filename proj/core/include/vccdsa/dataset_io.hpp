#pragma once

#include <filesystem>
#include <string>

#include "vccdsa/phantom.hpp"

namespace vccdsa {

constexpr int kDatasetFormatVersion = 1;

// Writes mask_####.png, live_####.png, gt_####.png, label_####.png and
// manifest.json into `dir` (created if missing).
void write_sequence(const DSASequence& sequence, const std::filesystem::path& dir);

// Reads a directory written by write_sequence. Canonical background and
// vessel frames are regenerated from the recorded config and seed.
DSASequence read_sequence(const std::filesystem::path& dir);

std::string phantom_config_to_json(const PhantomConfig& config);
PhantomConfig phantom_config_from_json(const std::string& text);

}  // namespace vccdsa
