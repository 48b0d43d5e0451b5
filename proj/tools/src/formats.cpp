#include "sadl_cli/formats.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

namespace sadl_cli {

namespace {

using nlohmann::json;

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

template <typename T>
T field_or(const json& doc, const char* name, T fallback) {
  if (!doc.contains(name)) return fallback;
  try {
    return doc.at(name).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("field '") + name + "': " + e.what());
  }
}

void append_u32(std::string& out, std::uint32_t v) {
  char bytes[4];
  std::memcpy(bytes, &v, 4);  // little-endian on every supported target
  out.append(bytes, 4);
}

std::uint32_t take_u32(const std::string& data, std::size_t offset) {
  std::uint32_t v = 0;
  std::memcpy(&v, data.data() + offset, 4);
  return v;
}

}  // namespace

sadl::Scene read_annotations(const std::filesystem::path& path) {
  const json doc = load_json(path);
  if (!doc.is_object()) throw ParseError(path.string() + ": expected an object");
  if (!doc.contains("width") || !doc.contains("height")) {
    throw ParseError(path.string() + ": missing width/height");
  }
  const int width = field_or<int>(doc, "width", 0);
  const int height = field_or<int>(doc, "height", 0);

  std::vector<sadl::Point2d> points;
  if (doc.contains("points")) {
    const json& array = doc.at("points");
    if (!array.is_array()) throw ParseError(path.string() + ": points must be an array");
    points.reserve(array.size());
    for (const json& entry : array) {
      if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number() ||
          !entry[1].is_number()) {
        throw ParseError(path.string() + ": each point must be [x, y]");
      }
      points.push_back({entry[0].get<double>(), entry[1].get<double>()});
    }
  }
  try {
    return sadl::Scene(width, height, std::move(points));
  } catch (const std::invalid_argument& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

sadl::ScaleConfig read_config(const std::filesystem::path& path) {
  const json doc = load_json(path);
  if (!doc.is_object()) throw ParseError(path.string() + ": expected an object");

  const int num_scales = field_or<int>(doc, "num_scales", 3);
  sadl::ScaleConfig config = sadl::ScaleConfig::defaults(num_scales);
  config.alpha = field_or<double>(doc, "alpha", config.alpha);
  config.beta1 = field_or<double>(doc, "beta1", config.beta1);
  config.var_fraction_tau = field_or<double>(doc, "var_fraction_tau", config.var_fraction_tau);
  config.m_cap = field_or<std::size_t>(doc, "m_cap", config.m_cap);
  config.var_floor = field_or<double>(doc, "var_floor", config.var_floor);
  config.denom_guard = field_or<double>(doc, "denom_guard", config.denom_guard);
  if (doc.contains("weights")) {
    config.weights = field_or<std::vector<double>>(doc, "weights", config.weights);
  }
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return config;
}

sadl::SynthSpec read_synth_spec(const std::filesystem::path& path) {
  const json doc = load_json(path);
  if (!doc.is_object()) throw ParseError(path.string() + ": expected an object");

  sadl::SynthSpec spec;
  spec.width = field_or<int>(doc, "width", spec.width);
  spec.height = field_or<int>(doc, "height", spec.height);
  if (doc.contains("head_count")) {
    spec.count_min = spec.count_max = field_or<int>(doc, "head_count", 0);
  } else {
    spec.count_min = field_or<int>(doc, "count_min", spec.count_min);
    spec.count_max = field_or<int>(doc, "count_max", spec.count_max);
  }
  const std::string placement = field_or<std::string>(doc, "placement", "uniform");
  if (placement == "uniform") {
    spec.placement = sadl::SynthSpec::Placement::kUniform;
  } else if (placement == "clustered") {
    spec.placement = sadl::SynthSpec::Placement::kClustered;
  } else {
    throw ParseError(path.string() + ": placement must be uniform or clustered");
  }
  spec.num_clusters = field_or<int>(doc, "num_clusters", spec.num_clusters);
  spec.cluster_std = field_or<double>(doc, "cluster_std", spec.cluster_std);
  spec.margin = field_or<double>(doc, "margin", spec.margin);
  spec.jitter_alpha = field_or<double>(doc, "jitter_alpha", spec.jitter_alpha);
  spec.seed = field_or<std::uint64_t>(doc, "seed", spec.seed);
  return spec;
}

void write_density_file(const std::filesystem::path& path, const sadl::DensityMap& map) {
  std::string blob;
  blob.reserve(24 + map.values.size() * 8);
  blob.append(kDensityMagic, 8);
  append_u32(blob, static_cast<std::uint32_t>(map.grid.scale_index));
  append_u32(blob, static_cast<std::uint32_t>(map.grid.factor));
  append_u32(blob, static_cast<std::uint32_t>(map.grid.width));
  append_u32(blob, static_cast<std::uint32_t>(map.grid.height));
  for (double v : map.values) {
    char bytes[8];
    std::memcpy(bytes, &v, 8);
    blob.append(bytes, 8);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("short write to " + path.string());
}

sadl::DensityMap read_density_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());

  if (data.size() < 24 || std::memcmp(data.data(), kDensityMagic, 8) != 0) {
    throw ParseError(path.string() + ": not a density file");
  }
  sadl::ScaleGrid grid;
  grid.scale_index = static_cast<int>(take_u32(data, 8));
  grid.factor = static_cast<int>(take_u32(data, 12));
  grid.width = static_cast<int>(take_u32(data, 16));
  grid.height = static_cast<int>(take_u32(data, 20));
  if (grid.scale_index < 1 || grid.factor < 1 || grid.width < 1 || grid.height < 1) {
    throw ParseError(path.string() + ": bad header fields");
  }
  const std::size_t cells = grid.cell_count();
  if (data.size() != 24 + cells * 8) {
    throw ParseError(path.string() + ": payload length does not match header");
  }
  sadl::DensityMap map(grid);
  for (std::size_t j = 0; j < cells; ++j) {
    double v = 0.0;
    std::memcpy(&v, data.data() + 24 + j * 8, 8);
    if (!std::isfinite(v)) throw ParseError(path.string() + ": non-finite value");
    map.values[j] = v;
  }
  return map;
}

void write_pgm_heatmap(const std::filesystem::path& path, int width, int height,
                       const std::vector<double>& values) {
  if (width < 1 || height < 1 ||
      values.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw ParseError("write_pgm_heatmap: dimension mismatch");
  }
  double lo = values[0];
  double hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double range = hi - lo;

  std::string blob = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  blob.reserve(blob.size() + values.size());
  for (double v : values) {
    const double scaled = range > 0.0 ? (v - lo) / range * 255.0 : 0.0;
    blob.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(scaled))));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace sadl_cli
