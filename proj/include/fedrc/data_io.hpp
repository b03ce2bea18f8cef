#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedrc/image.hpp"
#include "fedrc/topology.hpp"

namespace fedrc {

// Binary netpbm I/O. Only P6 (RGB) and P5 (grey) with maxval 255.

ImageTensor read_image_ppm(const std::filesystem::path& path);
void write_image_ppm(const std::filesystem::path& path, const ImageTensor& img);

/// Reads a P5 label mask; every value must be < `classes`.
LabelGrid read_mask_pgm(const std::filesystem::path& path, std::size_t classes);
void write_mask_pgm(const std::filesystem::path& path, const LabelGrid& mask);

ImageTensor decode_ppm(const std::string& bytes);
LabelGrid decode_pgm(const std::string& bytes, std::size_t classes);
std::string encode_ppm(const ImageTensor& img);
std::string encode_pgm(const LabelGrid& mask);

struct ClassColor {
  std::array<double, 3> mean{};
  std::array<double, 3> stddev{};
};

/// Colour model of one city. `shift` is added to every channel mean of every
/// class and models the inter-city domain shift.
struct CityProfile {
  std::vector<ClassColor> palette;
  std::vector<double> mixture;  ///< per-class area proportions, sums to 1
  double shift = 0.0;

  void validate() const;
  std::size_t classes() const { return palette.size(); }

  /// Four-class street-like palette used by the bundled scenarios.
  static CityProfile street(double shift = 0.0);
};

struct LabeledImage {
  ImageTensor image;
  LabelGrid mask;
};

/// Random rectangle layouts with per-class Gaussian colours, clamped to
/// [0, 255]. Fully determined by (profile, count, size, seed).
std::vector<LabeledImage> synthesize_city(const CityProfile& profile, std::size_t count, std::size_t width,
                                          std::size_t height, std::uint64_t seed);

struct ManifestRow {
  std::string image_path;
  std::string mask_path;
  std::int64_t vehicle_id = -1;  ///< -1 marks held-out test rows
  std::int64_t edge_id = -1;

  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

using Manifest = std::vector<ManifestRow>;

inline constexpr const char* kManifestHeader = "image_path,mask_path,vehicle_id,edge_id";

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
/// Paths are returned as written; resolve them against the manifest directory.
Manifest read_manifest(const std::filesystem::path& path);

/// Topology implied by the training rows of a manifest.
Topology topology_from_manifest(const Manifest& manifest);

struct SamplePaths {
  std::string image_path;
  std::string mask_path;
};

struct SplitScheme {
  enum class Kind { Equal, Skewed };
  Kind kind = Kind::Equal;
  std::vector<std::size_t> sizes;  ///< per vehicle, edge-major order (Skewed only)

  static SplitScheme equal() { return {}; }
  static SplitScheme skewed(std::vector<std::size_t> sizes) { return {Kind::Skewed, std::move(sizes)}; }
};

/// Assigns consecutive runs of `samples` to the topology's vehicles in
/// edge-major order. Every sample is assigned exactly once.
Manifest split_manifest(const std::vector<SamplePaths>& samples, const Topology& topology, const SplitScheme& scheme);

}  // namespace fedrc
