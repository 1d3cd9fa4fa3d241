#pragma once

// File formats: volumes as a JSON sidecar plus little-endian raw payload,
// heatmap stacks as a manifest directory, detections and adjacency as JSON.
// Every writer/reader pair round-trips bit-exactly.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "toothdet/anatomy.hpp"
#include "toothdet/heatmap.hpp"
#include "toothdet/volume.hpp"

namespace toothdet {

namespace detail {

template <class T>
constexpr const char* dtype_tag() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  else if constexpr (std::is_same_v<T, std::uint8_t>) return "u8";
  else if constexpr (std::is_same_v<T, std::uint16_t>) return "u16";
  else static_assert(sizeof(T) == 0, "unsupported volume dtype");
}

// Payloads are little-endian on disk; swap only on big-endian hosts.
template <class T>
inline void to_little_endian(std::vector<T>& data) {
  if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
    (void)data;
  } else {
    for (T& v : data) {
      auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
      std::reverse(bytes.begin(), bytes.end());
      v = std::bit_cast<T>(bytes);
    }
  }
}

// Accepts the base path or either sidecar file.
inline std::string volume_base(std::string path) {
  for (const char* ext : {".json", ".raw"}) {
    const std::size_t len = std::strlen(ext);
    if (path.size() > len && path.compare(path.size() - len, len, ext) == 0)
      return path.substr(0, path.size() - len);
  }
  return path;
}

}  // namespace detail

template <class T>
inline void save_volume(const Volume3<T>& v, const std::string& path) {
  const std::string base = detail::volume_base(path);
  nlohmann::json header;
  header["dims"] = v.dims;
  header["spacing"] = v.spacing;
  header["dtype"] = detail::dtype_tag<T>();
  header["order"] = "x-fastest";
  {
    std::ofstream out(base + ".json", std::ios::binary);
    if (!out) throw io_error("save_volume: cannot open " + base + ".json");
    out << header.dump(2) << "\n";
    if (!out) throw io_error("save_volume: write failed for " + base + ".json");
  }
  std::vector<T> payload = v.data;
  detail::to_little_endian(payload);
  std::ofstream out(base + ".raw", std::ios::binary);
  if (!out) throw io_error("save_volume: cannot open " + base + ".raw");
  out.write(reinterpret_cast<const char*>(payload.data()),
            std::streamsize(payload.size() * sizeof(T)));
  if (!out) throw io_error("save_volume: write failed for " + base + ".raw");
}

using AnyVolume = std::variant<VolumeF, VolumeU8, VolumeU16>;

inline AnyVolume load_volume(const std::string& path) {
  const std::string base = detail::volume_base(path);
  std::ifstream hin(base + ".json", std::ios::binary);
  if (!hin) throw io_error("load_volume: missing header " + base + ".json");
  nlohmann::json header;
  try {
    hin >> header;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("load_volume: bad header " + base + ".json: " + e.what());
  }

  std::array<int, 3> dims;
  std::array<double, 3> spacing{1, 1, 1};
  std::string dtype;
  try {
    dims = header.at("dims").get<std::array<int, 3>>();
    dtype = header.at("dtype").get<std::string>();
    if (header.contains("spacing"))
      spacing = header.at("spacing").get<std::array<double, 3>>();
    if (header.contains("order") && header.at("order") != "x-fastest")
      throw io_error("load_volume: unsupported raster order in " + base);
  } catch (const nlohmann::json::exception& e) {
    throw io_error("load_volume: bad header fields in " + base + ".json: " +
                   e.what());
  }
  for (int d : dims)
    if (d <= 0) throw io_error("load_volume: non-positive dims in " + base);
  for (double s : spacing)
    if (!(s > 0)) throw io_error("load_volume: non-positive spacing in " + base);

  std::ifstream rin(base + ".raw", std::ios::binary | std::ios::ate);
  if (!rin) throw io_error("load_volume: missing payload " + base + ".raw");
  const std::uint64_t bytes = std::uint64_t(rin.tellg());
  rin.seekg(0);
  const std::uint64_t voxels =
      std::uint64_t(dims[0]) * std::uint64_t(dims[1]) * std::uint64_t(dims[2]);

  auto read_as = [&]<class T>(T) -> AnyVolume {
    if (bytes != voxels * sizeof(T))
      throw io_error("load_volume: payload size mismatch in " + base +
                     ".raw (" + std::to_string(bytes) + " bytes for " +
                     std::to_string(voxels) + " voxels)");
    Volume3<T> v(dims);
    v.spacing = spacing;
    rin.read(reinterpret_cast<char*>(v.data.data()),
             std::streamsize(bytes));
    if (!rin) throw io_error("load_volume: short read from " + base + ".raw");
    detail::to_little_endian(v.data);
    return v;
  };
  if (dtype == "f32") return read_as(float{});
  if (dtype == "u8") return read_as(std::uint8_t{});
  if (dtype == "u16") return read_as(std::uint16_t{});
  throw io_error("load_volume: unknown dtype '" + dtype + "' in " + base);
}

template <class T>
inline Volume3<T> load_volume_as(const std::string& path) {
  AnyVolume any = load_volume(path);
  if (auto* v = std::get_if<Volume3<T>>(&any)) return std::move(*v);
  throw io_error("load_volume: dtype of " + path + " is not " +
                 detail::dtype_tag<T>());
}

// Heatmap stack directory: stack.json manifest plus one f32 volume per
// channel. Channel position in the manifest is the channel index.
inline void save_stack(const HeatmapStack& stack, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("save_stack: cannot create " + dir);
  nlohmann::json manifest;
  manifest["dims"] = stack.dims;
  manifest["channels"] = nlohmann::json::array();
  for (int c = 0; c < stack.num_channels(); ++c) {
    char name[32];
    std::snprintf(name, sizeof name, "ch%02d_fdi%d", c,
                  ToothId::from_channel(c).fdi);
    manifest["channels"].push_back(
        {{"fdi", ToothId::from_channel(c).fdi}, {"file", name}});
    save_volume(astype<float>(stack.channels[c]), dir + "/" + name);
  }
  std::ofstream out(dir + "/stack.json", std::ios::binary);
  if (!out) throw io_error("save_stack: cannot open " + dir + "/stack.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw io_error("save_stack: write failed in " + dir);
}

inline HeatmapStack load_stack(const std::string& dir) {
  std::ifstream in(dir + "/stack.json", std::ios::binary);
  if (!in) throw io_error("load_stack: missing manifest " + dir + "/stack.json");
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("load_stack: bad manifest in " + dir + ": " + e.what());
  }
  HeatmapStack stack;
  try {
    stack.dims = manifest.at("dims").get<std::array<int, 3>>();
    const auto& chans = manifest.at("channels");
    if (chans.empty() || chans.size() > std::size_t(kNumTeeth))
      throw io_error("load_stack: channel count out of range in " + dir);
    for (std::size_t c = 0; c < chans.size(); ++c) {
      const int fdi = chans[c].at("fdi").get<int>();
      if (ToothId::from_channel(int(c)).fdi != fdi)
        throw io_error("load_stack: channel order mismatch in " + dir);
      const std::string file = chans[c].at("file").get<std::string>();
      VolumeF v = load_volume_as<float>(dir + "/" + file);
      if (v.dims != stack.dims)
        throw io_error("load_stack: channel dims mismatch in " + dir);
      stack.channels.push_back(astype<double>(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw io_error("load_stack: bad manifest fields in " + dir + ": " +
                   e.what());
  }
  return stack;
}

inline void save_detections(const std::vector<Detection>& dets,
                            const std::string& path) {
  nlohmann::json root;
  root["detections"] = nlohmann::json::array();
  for (const Detection& d : dets)
    root["detections"].push_back({{"fdi", d.tooth.fdi},
                                  {"center", d.center},
                                  {"dims", d.box_dims},
                                  {"score", d.score}});
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("save_detections: cannot open " + path);
  out << root.dump(2) << "\n";
  if (!out) throw io_error("save_detections: write failed for " + path);
}

inline std::vector<Detection> load_detections(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("load_detections: missing file " + path);
  nlohmann::json root;
  try {
    in >> root;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("load_detections: bad JSON in " + path + ": " + e.what());
  }
  std::vector<Detection> dets;
  try {
    for (const auto& j : root.at("detections")) {
      Detection d;
      d.tooth = ToothId(j.at("fdi").get<int>());
      d.center = j.at("center").get<std::array<double, 3>>();
      d.box_dims = j.at("dims").get<std::array<double, 3>>();
      d.score = j.at("score").get<double>();
      dets.push_back(d);
    }
  } catch (const nlohmann::json::exception& e) {
    throw io_error("load_detections: bad fields in " + path + ": " + e.what());
  }
  return dets;
}

inline GroundTruth detections_to_ground_truth(const std::vector<Detection>& dets) {
  GroundTruth gts;
  for (const Detection& d : dets)
    gts.push_back({d.tooth, assemble_bbox(d.center, d.box_dims)});
  return gts;
}

// Adjacency override file: JSON array of [fdi_i, fdi_j] pairs.
inline AdjacencySet load_adjacency(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("load_adjacency: missing file " + path);
  nlohmann::json root;
  try {
    in >> root;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("load_adjacency: bad JSON in " + path + ": " + e.what());
  }
  AdjacencySet adj;
  try {
    for (const auto& pair : root) {
      if (!pair.is_array() || pair.size() != 2)
        throw io_error("load_adjacency: entries must be [fdi_i, fdi_j] in " +
                       path);
      adj.add(ToothId(pair[0].get<int>()), ToothId(pair[1].get<int>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw io_error("load_adjacency: bad fields in " + path + ": " + e.what());
  }
  return adj;
}

}  // namespace toothdet
