#include "fedrc/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fedrc/errors.hpp"
#include "fedrc/rng.hpp"

namespace fedrc {

// ---------------------------------------------------------------------------
// Netpbm

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void dump(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("failed writing " + path.string());
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

struct PnmHeader {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t payload_offset = 0;
};

// Parses "<magic> W H MAXVAL<single whitespace>" with '#' comments allowed.
PnmHeader parse_header(const std::string& bytes, const char* magic, const char* kind) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw DataError(std::string("bad ") + kind + " magic");
  if (bytes[1] != magic[1]) {
    if ((magic[1] == '6' && bytes[1] == '3') || (magic[1] == '5' && bytes[1] == '2'))
      throw DataError(std::string("unsupported ") + kind + " variant");
    throw DataError(std::string("bad ") + kind + " magic");
  }
  std::size_t pos = 2;
  auto next_number = [&]() -> std::size_t {
    while (pos < bytes.size()) {
      if (is_space(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), value);
    if (ec != std::errc() || ptr == bytes.data() + pos) throw DataError(std::string("malformed ") + kind + " header");
    pos = static_cast<std::size_t>(ptr - bytes.data());
    return value;
  };
  PnmHeader h;
  h.width = next_number();
  h.height = next_number();
  const std::size_t maxval = next_number();
  if (maxval != 255) throw DataError(std::string(kind) + " maxval must be 255");
  if (h.width < 1 || h.height < 1) throw DataError(std::string(kind) + " has zero extent");
  if (pos >= bytes.size() || !is_space(bytes[pos])) throw DataError(std::string(kind) + " truncated");
  h.payload_offset = pos + 1;
  return h;
}

std::string header(const char* magic, std::size_t w, std::size_t h) {
  return std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
}

}  // namespace

ImageTensor decode_ppm(const std::string& bytes) {
  const PnmHeader h = parse_header(bytes, "P6", "PPM");
  ImageTensor img(h.width, h.height);
  if (bytes.size() - h.payload_offset < img.data.size()) throw DataError("PPM payload truncated");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset), img.data.size(), img.data.begin());
  return img;
}

LabelGrid decode_pgm(const std::string& bytes, std::size_t classes) {
  const PnmHeader h = parse_header(bytes, "P5", "PGM");
  LabelGrid mask(h.width, h.height);
  if (bytes.size() - h.payload_offset < mask.labels.size()) throw DataError("PGM payload truncated");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset), mask.labels.size(), mask.labels.begin());
  for (auto v : mask.labels)
    if (v >= classes) throw DataError("label out of range");
  return mask;
}

std::string encode_ppm(const ImageTensor& img) {
  img.validate();
  std::string out = header("P6", img.width, img.height);
  out.append(img.data.begin(), img.data.end());
  return out;
}

std::string encode_pgm(const LabelGrid& mask) {
  if (mask.width < 1 || mask.height < 1 || mask.labels.size() != mask.width * mask.height)
    throw DataError("mask payload does not match width*height");
  std::string out = header("P5", mask.width, mask.height);
  out.append(mask.labels.begin(), mask.labels.end());
  return out;
}

ImageTensor read_image_ppm(const std::filesystem::path& path) {
  try {
    return decode_ppm(slurp(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_image_ppm(const std::filesystem::path& path, const ImageTensor& img) { dump(path, encode_ppm(img)); }

LabelGrid read_mask_pgm(const std::filesystem::path& path, std::size_t classes) {
  try {
    return decode_pgm(slurp(path), classes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_mask_pgm(const std::filesystem::path& path, const LabelGrid& mask) { dump(path, encode_pgm(mask)); }

// ---------------------------------------------------------------------------
// Synthetic cities

void CityProfile::validate() const {
  if (palette.empty()) throw ConfigError("city profile has an empty palette");
  if (palette.size() > 255) throw ConfigError("too many classes for an 8-bit mask");
  if (mixture.size() != palette.size()) throw ConfigError("class mixture must have one entry per palette class");
  double total = 0.0;
  for (double p : mixture) {
    if (!(p >= 0.0)) throw ConfigError("class proportions must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("class proportions must sum to 1");
  for (const auto& c : palette)
    for (int ch = 0; ch < 3; ++ch)
      if (!(c.stddev[ch] >= 0.0) || !std::isfinite(c.mean[ch])) throw ConfigError("invalid palette colour");
  if (!std::isfinite(shift)) throw ConfigError("city shift must be finite");
}

CityProfile CityProfile::street(double shift) {
  CityProfile p;
  p.palette = {
      {{128.0, 64.0, 128.0}, {14.0, 14.0, 14.0}},  // road
      {{70.0, 140.0, 40.0}, {16.0, 16.0, 16.0}},   // vegetation
      {{110.0, 160.0, 220.0}, {12.0, 12.0, 12.0}}, // sky
      {{200.0, 40.0, 40.0}, {20.0, 20.0, 20.0}},   // vehicle
  };
  p.mixture = {0.35, 0.25, 0.25, 0.15};
  p.shift = shift;
  return p;
}

namespace {

std::uint8_t draw_class(Rng& rng, const std::vector<double>& mixture) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t c = 0; c < mixture.size(); ++c) {
    acc += mixture[c];
    if (u < acc) return static_cast<std::uint8_t>(c);
  }
  // Rounding in the cumulative sum: fall back to the last class with mass.
  for (std::size_t c = mixture.size(); c-- > 0;)
    if (mixture[c] > 0.0) return static_cast<std::uint8_t>(c);
  return 0;
}

std::uint8_t clamp_pixel(double v) {
  const double r = std::nearbyint(v);
  return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

}  // namespace

std::vector<LabeledImage> synthesize_city(const CityProfile& profile, std::size_t count, std::size_t width,
                                          std::size_t height, std::uint64_t seed) {
  profile.validate();
  if (count < 1) throw ConfigError("synthesize_city needs at least one image");
  if (width < 1 || height < 1 || 3 * width * height < 2) throw ConfigError("degenerate image size");

  constexpr std::size_t kRectangles = 4;
  std::vector<LabeledImage> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(stream_key(seed, 0x5E7, i));
    LabeledImage sample{ImageTensor(width, height), LabelGrid(width, height)};

    std::fill(sample.mask.labels.begin(), sample.mask.labels.end(), draw_class(rng, profile.mixture));
    for (std::size_t r = 0; r < kRectangles; ++r) {
      const std::uint8_t cls = draw_class(rng, profile.mixture);
      const std::size_t rw = 1 + rng.below(std::max<std::size_t>(1, width / 2));
      const std::size_t rh = 1 + rng.below(std::max<std::size_t>(1, height / 2));
      const std::size_t x0 = rng.below(width);
      const std::size_t y0 = rng.below(height);
      for (std::size_t y = y0; y < std::min(height, y0 + rh); ++y)
        for (std::size_t x = x0; x < std::min(width, x0 + rw); ++x) sample.mask.labels[y * width + x] = cls;
    }

    for (std::size_t p = 0; p < width * height; ++p) {
      const ClassColor& colour = profile.palette[sample.mask.labels[p]];
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double mean = colour.mean[ch] + profile.shift;
        const double sd = colour.stddev[ch];
        const double v = sd > 0.0 ? mean + sd * rng.normal() : mean;
        sample.image.data[p * 3 + ch] = clamp_pixel(v);
      }
    }
    out.push_back(std::move(sample));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifests

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write manifest " + path.string());
  os << kManifestHeader << '\n';
  for (const auto& r : manifest) {
    if (r.image_path.find_first_of(",\n") != std::string::npos || r.mask_path.find_first_of(",\n") != std::string::npos)
      throw DataError("manifest paths may not contain commas or newlines");
    os << r.image_path << ',' << r.mask_path << ',' << r.vehicle_id << ',' << r.edge_id << '\n';
  }
  if (!os) throw DataError("failed writing manifest " + path.string());
}

namespace {

std::int64_t parse_id(const std::string& field, std::size_t line) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || v < -1)
    throw DataError("manifest line " + std::to_string(line) + ": bad id '" + field + "'");
  return v;
}

}  // namespace

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw DataError("manifest is empty: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
  if (line != kManifestHeader) throw DataError("manifest header must be '" + std::string(kManifestHeader) + "'");

  Manifest out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 4) throw DataError("manifest line " + std::to_string(lineno) + ": expected 4 fields");
    out.push_back({fields[0], fields[1], parse_id(fields[2], lineno), parse_id(fields[3], lineno)});
  }
  return out;
}

Topology topology_from_manifest(const Manifest& manifest) {
  std::map<EdgeId, std::set<VehicleId>> edges;
  std::map<VehicleId, EdgeId> owner;
  for (const auto& r : manifest) {
    if (r.vehicle_id < 0 && r.edge_id < 0) continue;
    if (r.vehicle_id < 0 || r.edge_id < 0) throw DataError("manifest row has only one of vehicle_id/edge_id");
    const auto v = static_cast<VehicleId>(r.vehicle_id);
    const auto e = static_cast<EdgeId>(r.edge_id);
    const auto [it, inserted] = owner.emplace(v, e);
    if (!inserted && it->second != e)
      throw DataError("vehicle " + std::to_string(v) + " appears under two edges in the manifest");
    edges[e].insert(v);
  }
  if (edges.empty()) throw DataError("manifest has no training rows");
  std::vector<EdgeNode> nodes;
  for (const auto& [id, vs] : edges) nodes.push_back({id, {vs.begin(), vs.end()}});
  return Topology(std::move(nodes));
}

Manifest split_manifest(const std::vector<SamplePaths>& samples, const Topology& topology, const SplitScheme& scheme) {
  const std::size_t vehicles = topology.vehicle_count();
  std::vector<std::size_t> sizes;
  if (scheme.kind == SplitScheme::Kind::Equal) {
    if (samples.size() < vehicles) throw DataError("insufficient images: every vehicle needs at least one");
    sizes.assign(vehicles, samples.size() / vehicles);
    for (std::size_t i = 0; i < samples.size() % vehicles; ++i) ++sizes[i];
  } else {
    sizes = scheme.sizes;
    if (sizes.size() != vehicles) throw ConfigError("skewed split needs one size per vehicle");
    for (auto s : sizes)
      if (s == 0) throw ConfigError("skewed split sizes must be positive");
    const std::size_t wanted = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    if (wanted > samples.size())
      throw DataError("insufficient images: split needs " + std::to_string(wanted) + ", have " +
                      std::to_string(samples.size()));
    if (wanted < samples.size()) throw DataError("split sizes leave images unassigned");
  }

  Manifest out;
  out.reserve(samples.size());
  std::size_t next = 0;
  std::size_t slot = 0;
  for (const auto& edge : topology.edges()) {
    for (VehicleId v : edge.vehicles) {
      for (std::size_t k = 0; k < sizes[slot]; ++k, ++next)
        out.push_back({samples[next].image_path, samples[next].mask_path, v, edge.id});
      ++slot;
    }
  }
  return out;
}

}  // namespace fedrc
