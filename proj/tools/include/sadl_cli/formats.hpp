#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "sadl/domain.hpp"
#include "sadl/fit.hpp"

namespace sadl_cli {

// Malformed or inconsistent input content -> exit code 2.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem-level failures -> exit code 3.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// JSON annotation document: {"width": W, "height": H, "points": [[x,y],...]}.
// Unknown fields are ignored.
sadl::Scene read_annotations(const std::filesystem::path& path);

// JSON config mirroring the ScaleConfig field names; every field optional.
sadl::ScaleConfig read_config(const std::filesystem::path& path);

// JSON synthetic-scene spec (width, height, head_count or
// count_min/count_max, placement, num_clusters, cluster_std, margin,
// jitter_alpha, seed).
sadl::SynthSpec read_synth_spec(const std::filesystem::path& path);

// Binary density-map container: 8-byte magic "SADLDM01", then
// little-endian u32 scale_index, factor, width, height, then
// width*height little-endian IEEE-754 doubles, row-major.
inline constexpr char kDensityMagic[8] = {'S', 'A', 'D', 'L', 'D', 'M', '0', '1'};

void write_density_file(const std::filesystem::path& path, const sadl::DensityMap& map);
sadl::DensityMap read_density_file(const std::filesystem::path& path);

// 8-bit binary PGM, min-max normalized; constant maps (including all-zero
// ones) emit all-zero pixels.
void write_pgm_heatmap(const std::filesystem::path& path, int width, int height,
                       const std::vector<double>& values);

}  // namespace sadl_cli
