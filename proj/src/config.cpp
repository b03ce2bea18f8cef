#include "fedrc/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <type_traits>

#include "fedrc/errors.hpp"

namespace fedrc {

using nlohmann::json;

namespace {

// Reads keys from one JSON object and rejects any key it was not asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    out = convert<T>(j_.at(key), path(key));
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.contains(item.key())) throw ConfigError("unknown key '" + path(item.key().c_str()) + "'");
  }

  std::string path(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

  template <typename T>
  static T convert(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + " must be a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) throw ConfigError(where + " must be a non-negative integer");
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where + " must be a number");
      const T x = v.get<T>();
      if (!std::isfinite(x)) throw ConfigError(where + " must be finite");
      return x;
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where + " must be a string");
      return v.get<std::string>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported config value type");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename T>
std::vector<T> read_array(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + " must be an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(ObjectReader::convert<T>(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

std::array<double, 3> read_triplet(const json& v, const std::string& where) {
  const auto values = read_array<double>(v, where);
  if (values.size() != 3) throw ConfigError(where + " must have 3 entries");
  return {values[0], values[1], values[2]};
}

CityProfile read_city(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  CityProfile city = CityProfile::street();
  r.get("shift", city.shift);
  if (const json* palette = r.child("palette")) {
    if (!palette->is_array()) throw ConfigError(where + ".palette must be an array");
    city.palette.clear();
    for (std::size_t i = 0; i < palette->size(); ++i) {
      const std::string at = where + ".palette[" + std::to_string(i) + "]";
      ObjectReader pr((*palette)[i], at);
      ClassColor colour;
      if (const json* m = pr.child("mean")) colour.mean = read_triplet(*m, at + ".mean");
      else throw ConfigError(at + ".mean is required");
      if (const json* s = pr.child("std")) colour.stddev = read_triplet(*s, at + ".std");
      pr.finish();
      city.palette.push_back(colour);
    }
    if (!r.child("mixture")) city.mixture.assign(city.palette.size(), 1.0 / static_cast<double>(city.palette.size()));
  }
  if (const json* mix = r.child("mixture")) city.mixture = read_array<double>(*mix, where + ".mixture");
  r.finish();
  return city;
}

json city_to_json(const CityProfile& city) {
  json palette = json::array();
  for (const auto& c : city.palette)
    palette.push_back({{"mean", {c.mean[0], c.mean[1], c.mean[2]}}, {"std", {c.stddev[0], c.stddev[1], c.stddev[2]}}});
  return {{"shift", city.shift}, {"palette", palette}, {"mixture", city.mixture}};
}

}  // namespace

void SynthConfig::validate() const {
  if (width < 1 || height < 1) throw ConfigError("synth image size must be positive");
  if (cities.empty()) throw ConfigError("synth needs at least one city");
  if (vehicles_per_city < 1) throw ConfigError("synth.vehicles_per_city must be at least 1");
  if (train_per_city < vehicles_per_city) throw ConfigError("synth.train_per_city must cover every vehicle");
  if (test_per_city < 1) throw ConfigError("synth.test_per_city must be at least 1");
  for (const auto& c : cities) {
    c.validate();
    if (c.classes() != cities.front().classes()) throw ConfigError("all cities must share one class count");
  }
  if (split == SplitScheme::Kind::Skewed) {
    if (sizes.size() != cities.size()) throw ConfigError("synth.sizes needs one entry per city");
    for (const auto& per_city : sizes) {
      if (per_city.size() != vehicles_per_city) throw ConfigError("synth.sizes entries need one size per vehicle");
      std::size_t total = 0;
      for (auto s : per_city) total += s;
      if (total != train_per_city) throw ConfigError("synth.sizes of each city must sum to train_per_city");
    }
  } else if (!sizes.empty()) {
    throw ConfigError("synth.sizes is only meaningful with split = skewed");
  }
}

void CompareConfig::validate() const {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("compare.threshold must lie in (0, 1]");
  if (seeds.empty()) throw ConfigError("compare.seeds must not be empty");
  if (strategies.empty()) throw ConfigError("compare.strategies must not be empty");
}

void ExperimentConfig::validate() const {
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (data.dir.empty()) throw ConfigError("data.dir must not be empty");
  synth.validate();
  schedule.validate();
  if (!(strategy.epsilon > 0.0)) throw ConfigError("strategy.epsilon must be positive");
  training.validate();
  if (synth.cities.front().classes() != training.model.classes)
    throw ConfigError("model.classes must equal the number of palette classes");
  compare.validate();
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  ObjectReader root(j, "");
  root.get("seed", cfg.seed);
  root.get("output_dir", cfg.output_dir);

  if (const json* d = root.child("data")) {
    ObjectReader r(*d, "data");
    r.get("dir", cfg.data.dir);
    r.get("train_manifest", cfg.data.train_manifest);
    r.get("test_manifest", cfg.data.test_manifest);
    r.finish();
  }
  if (const json* s = root.child("synth")) {
    ObjectReader r(*s, "synth");
    r.get("seed", cfg.synth.seed);
    r.get("width", cfg.synth.width);
    r.get("height", cfg.synth.height);
    r.get("train_per_city", cfg.synth.train_per_city);
    r.get("test_per_city", cfg.synth.test_per_city);
    r.get("vehicles_per_city", cfg.synth.vehicles_per_city);
    std::string split = "equal";
    r.get("split", split);
    if (split == "equal") cfg.synth.split = SplitScheme::Kind::Equal;
    else if (split == "skewed") cfg.synth.split = SplitScheme::Kind::Skewed;
    else throw ConfigError("synth.split must be 'equal' or 'skewed'");
    if (const json* sizes = r.child("sizes")) {
      if (!sizes->is_array()) throw ConfigError("synth.sizes must be an array");
      for (std::size_t i = 0; i < sizes->size(); ++i)
        cfg.synth.sizes.push_back(read_array<std::size_t>((*sizes)[i], "synth.sizes[" + std::to_string(i) + "]"));
    }
    if (const json* cities = r.child("cities")) {
      if (!cities->is_array()) throw ConfigError("synth.cities must be an array");
      cfg.synth.cities.clear();
      for (std::size_t i = 0; i < cities->size(); ++i)
        cfg.synth.cities.push_back(read_city((*cities)[i], "synth.cities[" + std::to_string(i) + "]"));
    }
    r.finish();
  }
  if (const json* s = root.child("schedule")) {
    ObjectReader r(*s, "schedule");
    r.get("tau1", cfg.schedule.tau1);
    r.get("tau2", cfg.schedule.tau2);
    r.get("rounds", cfg.schedule.rounds);
    r.finish();
  }
  if (const json* s = root.child("strategy")) {
    ObjectReader r(*s, "strategy");
    std::string kind(to_string(cfg.strategy.kind));
    r.get("kind", kind);
    cfg.strategy.kind = parse_strategy(kind);
    r.get("epsilon", cfg.strategy.epsilon);
    r.finish();
  }
  if (const json* s = root.child("model")) {
    ObjectReader r(*s, "model");
    r.get("input_dim", cfg.training.model.input_dim);
    r.get("hidden", cfg.training.model.hidden);
    r.get("classes", cfg.training.model.classes);
    std::string activation = "relu";
    r.get("activation", activation);
    if (activation != "relu") throw ConfigError("model.activation is fixed to 'relu'");
    r.finish();
  }
  if (const json* s = root.child("training")) {
    ObjectReader r(*s, "training");
    r.get("batch_images", cfg.training.batch_images);
    r.get("pixels_per_image", cfg.training.pixels_per_image);
    r.finish();
  }
  if (const json* s = root.child("optimizer")) {
    ObjectReader r(*s, "optimizer");
    r.get("lr", cfg.training.adam.lr);
    r.get("beta1", cfg.training.adam.beta1);
    r.get("beta2", cfg.training.adam.beta2);
    r.get("weight_decay", cfg.training.adam.weight_decay);
    r.get("eps", cfg.training.adam.eps);
    std::string mode = "l2";
    r.get("weight_decay_mode", mode);
    if (mode != "l2") throw ConfigError("optimizer.weight_decay_mode supports only 'l2' (decay added to the gradient)");
    r.finish();
  }
  if (const json* s = root.child("compare")) {
    ObjectReader r(*s, "compare");
    r.get("threshold", cfg.compare.threshold);
    if (const json* seeds = r.child("seeds")) cfg.compare.seeds = read_array<std::uint64_t>(*seeds, "compare.seeds");
    if (const json* st = r.child("strategies")) {
      cfg.compare.strategies.clear();
      for (const auto& name : read_array<std::string>(*st, "compare.strategies"))
        cfg.compare.strategies.push_back(parse_strategy(name));
    }
    r.finish();
  }
  root.finish();
  cfg.validate();
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json cities = json::array();
  for (const auto& c : cfg.synth.cities) cities.push_back(city_to_json(c));
  json strategies = json::array();
  for (auto s : cfg.compare.strategies) strategies.push_back(std::string(to_string(s)));
  json synth = {{"seed", cfg.synth.seed},
                {"width", cfg.synth.width},
                {"height", cfg.synth.height},
                {"train_per_city", cfg.synth.train_per_city},
                {"test_per_city", cfg.synth.test_per_city},
                {"vehicles_per_city", cfg.synth.vehicles_per_city},
                {"split", cfg.synth.split == SplitScheme::Kind::Equal ? "equal" : "skewed"},
                {"cities", cities}};
  if (cfg.synth.split == SplitScheme::Kind::Skewed) synth["sizes"] = cfg.synth.sizes;
  const auto& t = cfg.training;
  return {
      {"seed", cfg.seed},
      {"output_dir", cfg.output_dir},
      {"data", {{"dir", cfg.data.dir}, {"train_manifest", cfg.data.train_manifest}, {"test_manifest", cfg.data.test_manifest}}},
      {"synth", synth},
      {"schedule", {{"tau1", cfg.schedule.tau1}, {"tau2", cfg.schedule.tau2}, {"rounds", cfg.schedule.rounds}}},
      {"strategy", {{"kind", std::string(to_string(cfg.strategy.kind))}, {"epsilon", cfg.strategy.epsilon}}},
      {"model", {{"input_dim", t.model.input_dim}, {"hidden", t.model.hidden}, {"classes", t.model.classes}, {"activation", "relu"}}},
      {"training", {{"batch_images", t.batch_images}, {"pixels_per_image", t.pixels_per_image}}},
      {"optimizer",
       {{"lr", t.adam.lr},
        {"beta1", t.adam.beta1},
        {"beta2", t.adam.beta2},
        {"weight_decay", t.adam.weight_decay},
        {"weight_decay_mode", "l2"},
        {"eps", t.adam.eps}}},
      {"compare", {{"threshold", cfg.compare.threshold}, {"seeds", cfg.compare.seeds}, {"strategies", strategies}}},
  };
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << config_to_json(cfg).dump(2) << '\n';
}

}  // namespace fedrc
