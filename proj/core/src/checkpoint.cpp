#include "vccdsa/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "vccdsa/error.hpp"
#include "vccdsa/rng.hpp"

namespace vccdsa {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'V', 'C', 'C', 'D', 'S', 'A', 'C', 'K'};

json arch_json(const ArchConfig& a) {
  return json{{"input_channels", a.input_channels}, {"base_channels", a.base_channels},
              {"stage_channels", a.stage_channels}, {"rdb_layers", a.rdb_layers},
              {"rdb_growth", a.rdb_growth},         {"kernel", a.kernel},
              {"scale_factor", a.scale_factor}};
}

ArchConfig arch_parse(const json& j) {
  ArchConfig a;
  a.input_channels = j.at("input_channels").get<int>();
  a.base_channels = j.at("base_channels").get<int>();
  a.stage_channels = j.at("stage_channels").get<std::array<int, 3>>();
  a.rdb_layers = j.at("rdb_layers").get<int>();
  a.rdb_growth = j.at("rdb_growth").get<int>();
  a.kernel = j.at("kernel").get<int>();
  a.scale_factor = j.at("scale_factor").get<double>();
  a.validate();
  return a;
}

std::uint64_t payload_checksum(const std::vector<float>& params, const AdamState* opt) {
  std::uint64_t h = fnv1a64(std::string_view(reinterpret_cast<const char*>(params.data()), params.size() * sizeof(float)));
  if (opt) {
    h ^= splitmix64(fnv1a64(std::string_view(reinterpret_cast<const char*>(opt->m.data()), opt->m.size() * sizeof(float))));
    h ^= splitmix64(h ^ fnv1a64(std::string_view(reinterpret_cast<const char*>(opt->v.data()), opt->v.size() * sizeof(float))));
  }
  return h;
}

void write_floats(std::ofstream& out, std::span<const float> v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void read_floats(std::ifstream& in, std::span<float> v, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (!in) throw IoError("truncated checkpoint: " + path.string());
}

}  // namespace

void AdamState::reset(std::size_t n) {
  m.assign(n, 0.0f);
  v.assign(n, 0.0f);
  step = 0;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p += ".json";
  return p;
}

std::string arch_to_json(const ArchConfig& arch) { return arch_json(arch).dump(); }
ArchConfig arch_from_json(const std::string& text) { return arch_parse(json::parse(text)); }

void save_checkpoint(const std::filesystem::path& path, const Network<float>& net, std::int64_t step,
                     const AdamState* optimizer) {
  const auto params = net.parameters();
  if (optimizer && (optimizer->m.size() != params.size() || optimizer->v.size() != params.size())) {
    throw ArgumentError("optimizer state does not match the network parameter count");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t count = params.size();
    const std::uint32_t flags = optimizer ? 1u : 0u;
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    out.write(reinterpret_cast<const char*>(&flags), sizeof(flags));
    write_floats(out, params);
    if (optimizer) {
      write_floats(out, optimizer->m);
      write_floats(out, optimizer->v);
      out.write(reinterpret_cast<const char*>(&optimizer->step), sizeof(optimizer->step));
    }
    if (!out) throw IoError("failed writing checkpoint: " + path.string());
  }
  const std::vector<float> copy(params.begin(), params.end());
  json side{{"format_version", kCheckpointFormatVersion},
            {"arch", arch_json(net.arch())},
            {"seed", net.seed()},
            {"step", step},
            {"parameter_count", params.size()},
            {"has_optimizer_state", optimizer != nullptr},
            {"checksum", payload_checksum(copy, optimizer)}};
  std::ofstream out(sidecar_path(path), std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint sidecar: " + sidecar_path(path).string());
  out << side.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream side_in(sidecar_path(path));
  if (!side_in) throw IoError("missing checkpoint sidecar: " + sidecar_path(path).string());
  json side;
  try {
    side = json::parse(side_in);
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint sidecar: " + std::string(e.what()));
  }
  if (side.at("format_version").get<int>() != kCheckpointFormatVersion) {
    throw IoError("unsupported checkpoint format version in " + path.string());
  }
  Checkpoint ck{Network<float>(arch_parse(side.at("arch")), side.at("seed").get<std::uint64_t>()),
                side.at("step").get<std::int64_t>(), std::nullopt};

  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint: " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("not a checkpoint: " + path.string());
  std::uint64_t count = 0;
  std::uint32_t flags = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  in.read(reinterpret_cast<char*>(&flags), sizeof(flags));
  if (!in || count != ck.network.parameter_count()) {
    throw IoError("checkpoint parameter count does not match its architecture: " + path.string());
  }
  read_floats(in, ck.network.parameters(), path);
  if (flags & 1u) {
    AdamState s;
    s.reset(count);
    read_floats(in, s.m, path);
    read_floats(in, s.v, path);
    in.read(reinterpret_cast<char*>(&s.step), sizeof(s.step));
    if (!in) throw IoError("truncated checkpoint: " + path.string());
    ck.optimizer = std::move(s);
  }
  const auto p = ck.network.parameters();
  const std::vector<float> copy(p.begin(), p.end());
  const std::uint64_t expected = side.at("checksum").get<std::uint64_t>();
  if (payload_checksum(copy, ck.optimizer ? &*ck.optimizer : nullptr) != expected) {
    throw IoError("checkpoint checksum mismatch: " + path.string());
  }
  return ck;
}

}  // namespace vccdsa
