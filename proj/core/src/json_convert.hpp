#pragma once

// Internal JSON conversions shared by the serializers. Not installed.

#include "json.hpp"
#include "vccdsa/phantom.hpp"

namespace vccdsa::detail {

using json = nlohmann::json;

inline json to_json(const PhantomConfig& c) {
  return json{
      {"height", c.height},
      {"width", c.width},
      {"vessel",
       {{"branch_count", c.vessel.branch_count},
        {"max_depth", c.vessel.max_depth},
        {"radius_min", c.vessel.radius_min},
        {"radius_max", c.vessel.radius_max},
        {"tortuosity", c.vessel.tortuosity},
        {"peak", c.vessel.peak}}},
      {"background",
       {{"base_level", c.background.base_level},
        {"bone_count", c.background.bone_count},
        {"bone_intensity_min", c.background.bone_intensity_min},
        {"bone_intensity_max", c.background.bone_intensity_max},
        {"texture_scale", c.background.texture_scale},
        {"texture_amplitude", c.background.texture_amplitude},
        {"edge_sharpness", c.background.edge_sharpness},
        {"peak", c.background.peak}}},
      {"distractor",
       {{"tube_count", c.distractor.tube_count},
        {"curvature", c.distractor.curvature},
        {"intensity_min", c.distractor.intensity_min},
        {"intensity_max", c.distractor.intensity_max},
        {"radius", c.distractor.radius}}},
      {"contrast_ramp", c.contrast_ramp},
      {"mask_frames", c.mask_frames},
      {"live_frames", c.live_frames},
      {"noise_sigma", c.noise_sigma},
      {"seed", c.seed},
  };
}

inline PhantomConfig phantom_from_json(const json& j) {
  PhantomConfig c;
  c.height = j.at("height").get<int>();
  c.width = j.at("width").get<int>();
  const json& v = j.at("vessel");
  c.vessel.branch_count = v.at("branch_count").get<int>();
  c.vessel.max_depth = v.at("max_depth").get<int>();
  c.vessel.radius_min = v.at("radius_min").get<double>();
  c.vessel.radius_max = v.at("radius_max").get<double>();
  c.vessel.tortuosity = v.at("tortuosity").get<double>();
  c.vessel.peak = v.at("peak").get<double>();
  const json& b = j.at("background");
  c.background.base_level = b.at("base_level").get<double>();
  c.background.bone_count = b.at("bone_count").get<int>();
  c.background.bone_intensity_min = b.at("bone_intensity_min").get<double>();
  c.background.bone_intensity_max = b.at("bone_intensity_max").get<double>();
  c.background.texture_scale = b.at("texture_scale").get<double>();
  c.background.texture_amplitude = b.at("texture_amplitude").get<double>();
  c.background.edge_sharpness = b.at("edge_sharpness").get<double>();
  c.background.peak = b.at("peak").get<double>();
  const json& d = j.at("distractor");
  c.distractor.tube_count = d.at("tube_count").get<int>();
  c.distractor.curvature = d.at("curvature").get<double>();
  c.distractor.intensity_min = d.at("intensity_min").get<double>();
  c.distractor.intensity_max = d.at("intensity_max").get<double>();
  c.distractor.radius = d.at("radius").get<double>();
  c.contrast_ramp = j.at("contrast_ramp").get<int>();
  c.mask_frames = j.at("mask_frames").get<int>();
  c.live_frames = j.at("live_frames").get<int>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline json to_json(const MotionField& m) {
  return json{{"level", m.level},
              {"rotation_deg", m.rotation_deg},
              {"dx", m.dx},
              {"dy", m.dy},
              {"sx", m.sx},
              {"sy", m.sy},
              {"shear", m.shear},
              {"elastic_amplitude", m.elastic_amplitude},
              {"elastic_grid", m.elastic_grid},
              {"elastic_x", m.elastic_x},
              {"elastic_y", m.elastic_y},
              {"seed", m.seed}};
}

inline MotionField motion_from_json(const json& j) {
  MotionField m;
  m.level = j.at("level").get<int>();
  m.rotation_deg = j.at("rotation_deg").get<double>();
  m.dx = j.at("dx").get<double>();
  m.dy = j.at("dy").get<double>();
  m.sx = j.at("sx").get<double>();
  m.sy = j.at("sy").get<double>();
  m.shear = j.at("shear").get<double>();
  m.elastic_amplitude = j.at("elastic_amplitude").get<double>();
  m.elastic_grid = j.at("elastic_grid").get<int>();
  m.elastic_x = j.at("elastic_x").get<std::vector<double>>();
  m.elastic_y = j.at("elastic_y").get<std::vector<double>>();
  m.seed = j.at("seed").get<std::uint64_t>();
  return m;
}

}  // namespace vccdsa::detail
