#pragma once

// Experiment configuration: defaults, the desk-scale preset, JSON loading,
// canonical serialization and the fingerprint derived from it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fasrec/binary_io.hpp"
#include "fasrec/channel_model.hpp"
#include "fasrec/errors.hpp"

namespace fasrec {

enum class ScheduleKind { sequential, random };
enum class SnrMode { per_snr, mixed };

struct Seeds {
  std::uint64_t channel = 1;
  std::uint64_t schedule = 2;
  std::uint64_t split = 3;
  std::uint64_t init = 4;
  std::uint64_t shuffle = 5;
  std::uint64_t test = 6;

  friend bool operator==(const Seeds&, const Seeds&) = default;
};

struct OutputPaths {
  std::string datasets = "out/datasets";
  std::string models = "out/models";
  std::string results = "out/results";

  friend bool operator==(const OutputPaths&, const OutputPaths&) = default;
};

// Defaults reproduce the reference simulation setup (N=256, M=4, P=64, ...).
struct ExperimentConfig {
  std::uint64_t num_ports = 256;
  std::uint64_t num_antennas = 4;
  std::uint64_t num_slots = 64;
  double aperture_wavelengths = 10.0;
  double carrier_frequency_hz = 3.5e9;  // metadata only; d/lambda is what matters
  int num_clusters = 2;
  int rays_per_cluster = 10;
  double max_angle_spread_deg = 5.0;
  std::vector<double> snr_db_list = {-15, -10, -5, 0, 5, 10, 15};
  SnrMode snr_mode = SnrMode::per_snr;
  ScheduleKind schedule_kind = ScheduleKind::sequential;
  std::uint64_t n_train_samples = 50000;
  double rho = 0.05;
  std::uint64_t batch_size = 256;
  double learning_rate = 1e-4;
  std::uint64_t hidden_width = 512;
  std::uint64_t patience = 20;
  std::uint64_t max_epochs = 200;
  std::uint64_t n_test_samples = 2000;
  std::uint64_t omp_grid_factor = 4;  // G = factor * N
  std::uint64_t omp_sparsity = 0;     // 0 means 2C
  Seeds seeds;
  OutputPaths paths;

  static ExperimentConfig paper() { return {}; }

  static ExperimentConfig desk() {
    ExperimentConfig c;
    c.num_ports = 64;
    c.num_slots = 16;
    c.n_train_samples = 8000;
    c.hidden_width = 256;
    c.max_epochs = 60;
    // Tuned so training converges and early-stops within 60 epochs.
    c.learning_rate = 1e-3;
    c.batch_size = 64;
    return c;
  }

  ArrayGeometry geometry() const {
    return ArrayGeometry(static_cast<Eigen::Index>(num_ports), aperture_wavelengths);
  }

  ScatteringConfig scattering() const {
    return {num_clusters, rays_per_cluster, max_angle_spread_deg * std::numbers::pi / 180.0};
  }

  std::uint64_t sparsity() const {
    return omp_sparsity ? omp_sparsity : 2 * static_cast<std::uint64_t>(num_clusters);
  }

  void validate() const {
    if (num_ports < 2) throw ConfigError("num_ports", "must be >= 2");
    if (num_antennas < 1 || num_antennas > num_ports)
      throw ConfigError("num_antennas", "must satisfy 1 <= M <= N");
    if (num_slots < 1) throw ConfigError("num_slots", "must be >= 1");
    if (!(aperture_wavelengths > 0.0)) throw ConfigError("aperture_wavelengths", "must be > 0");
    if (!(carrier_frequency_hz > 0.0)) throw ConfigError("carrier_frequency_hz", "must be > 0");
    if (num_clusters < 1) throw ConfigError("num_clusters", "must be >= 1");
    if (rays_per_cluster < 1) throw ConfigError("rays_per_cluster", "must be >= 1");
    if (!(max_angle_spread_deg >= 0.0)) throw ConfigError("max_angle_spread_deg", "must be >= 0");
    if (snr_db_list.empty()) throw ConfigError("snr_db_list", "must not be empty");
    for (double s : snr_db_list)
      if (!std::isfinite(s)) throw ConfigError("snr_db_list", "entries must be finite");
    const std::uint64_t pm = num_antennas * num_slots;
    if (schedule_kind == ScheduleKind::sequential && pm > num_ports && pm % num_ports != 0)
      throw ConfigError("num_slots", "sequential schedule needs P*M <= N or P*M a multiple of N");
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho", "must lie in (0, 1)");
    if (n_train_samples < 3) throw ConfigError("n_train_samples", "must be >= 3");
    const auto n_val = std::llround(rho * static_cast<double>(n_train_samples));
    if (n_val < 1 || static_cast<std::uint64_t>(n_val) + 2 > n_train_samples)
      throw ConfigError("rho", "split leaves too few training or validation samples");
    if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("learning_rate", "must be finite and >= 0");
    if (hidden_width < 1) throw ConfigError("hidden_width", "must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs", "must be >= 1");
    if (n_test_samples < 1) throw ConfigError("n_test_samples", "must be >= 1");
    if (omp_grid_factor < 1) throw ConfigError("omp_grid_factor", "must be >= 1");
    if (sparsity() > std::min(omp_grid_factor * num_ports, pm))
      throw ConfigError("omp_sparsity", "must not exceed min(G, P*M)");
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

NLOHMANN_JSON_SERIALIZE_ENUM(ScheduleKind, {{ScheduleKind::sequential, "sequential"},
                                            {ScheduleKind::random, "random"}})
NLOHMANN_JSON_SERIALIZE_ENUM(SnrMode, {{SnrMode::per_snr, "per_snr"}, {SnrMode::mixed, "mixed"}})

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const std::string& key, T& out,
                const std::string& prefix = "") {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_enum_v<T>) {
      if (!it->is_string()) throw ConfigError(prefix + key, "expected a string");
      const T parsed = it->template get<T>();
      // Unknown strings map to the first enumerator; reject them explicitly.
      if (nlohmann::json(parsed) != *it)
        throw ConfigError(prefix + key, "unknown value " + it->dump());
      out = parsed;
    } else {
      out = it->template get<T>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(prefix + key, std::string("invalid value: ") + e.what());
  }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                           const std::string& prefix = "") {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(prefix + key, "unknown configuration key");
  }
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c, bool include_paths = true) {
  nlohmann::json j = {
      {"num_ports", c.num_ports},
      {"num_antennas", c.num_antennas},
      {"num_slots", c.num_slots},
      {"aperture_wavelengths", c.aperture_wavelengths},
      {"carrier_frequency_hz", c.carrier_frequency_hz},
      {"num_clusters", c.num_clusters},
      {"rays_per_cluster", c.rays_per_cluster},
      {"max_angle_spread_deg", c.max_angle_spread_deg},
      {"snr_db_list", c.snr_db_list},
      {"snr_mode", c.snr_mode},
      {"schedule_kind", c.schedule_kind},
      {"n_train_samples", c.n_train_samples},
      {"rho", c.rho},
      {"batch_size", c.batch_size},
      {"learning_rate", c.learning_rate},
      {"hidden_width", c.hidden_width},
      {"patience", c.patience},
      {"max_epochs", c.max_epochs},
      {"n_test_samples", c.n_test_samples},
      {"omp_grid_factor", c.omp_grid_factor},
      {"omp_sparsity", c.omp_sparsity},
      {"seeds",
       {{"channel", c.seeds.channel},
        {"schedule", c.seeds.schedule},
        {"split", c.seeds.split},
        {"init", c.seeds.init},
        {"shuffle", c.seeds.shuffle},
        {"test", c.seeds.test}}},
  };
  if (include_paths)
    j["paths"] = {{"datasets", c.paths.datasets},
                  {"models", c.paths.models},
                  {"results", c.paths.results}};
  return j;
}

// Overlays the keys present in `j` onto `base`. Unknown keys are errors.
inline ExperimentConfig config_from_json(const nlohmann::json& j,
                                         ExperimentConfig base = ExperimentConfig::paper()) {
  using detail::read_field;
  if (!j.is_object()) throw ConfigError("<root>", "configuration must be a JSON object");
  detail::reject_unknown(
      j, {"num_ports", "num_antennas", "num_slots", "aperture_wavelengths", "carrier_frequency_hz",
          "num_clusters", "rays_per_cluster", "max_angle_spread_deg", "snr_db_list", "snr_mode",
          "schedule_kind", "n_train_samples", "rho", "batch_size", "learning_rate",
          "hidden_width", "patience", "max_epochs", "n_test_samples", "omp_grid_factor",
          "omp_sparsity", "seeds", "paths"});
  ExperimentConfig& c = base;
  read_field(j, "num_ports", c.num_ports);
  read_field(j, "num_antennas", c.num_antennas);
  read_field(j, "num_slots", c.num_slots);
  read_field(j, "aperture_wavelengths", c.aperture_wavelengths);
  read_field(j, "carrier_frequency_hz", c.carrier_frequency_hz);
  read_field(j, "num_clusters", c.num_clusters);
  read_field(j, "rays_per_cluster", c.rays_per_cluster);
  read_field(j, "max_angle_spread_deg", c.max_angle_spread_deg);
  read_field(j, "snr_db_list", c.snr_db_list);
  read_field(j, "snr_mode", c.snr_mode);
  read_field(j, "schedule_kind", c.schedule_kind);
  read_field(j, "n_train_samples", c.n_train_samples);
  read_field(j, "rho", c.rho);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "learning_rate", c.learning_rate);
  read_field(j, "hidden_width", c.hidden_width);
  read_field(j, "patience", c.patience);
  read_field(j, "max_epochs", c.max_epochs);
  read_field(j, "n_test_samples", c.n_test_samples);
  read_field(j, "omp_grid_factor", c.omp_grid_factor);
  read_field(j, "omp_sparsity", c.omp_sparsity);
  if (const auto s = j.find("seeds"); s != j.end()) {
    if (!s->is_object()) throw ConfigError("seeds", "must be an object");
    detail::reject_unknown(*s, {"channel", "schedule", "split", "init", "shuffle", "test"}, "seeds.");
    read_field(*s, "channel", c.seeds.channel, "seeds.");
    read_field(*s, "schedule", c.seeds.schedule, "seeds.");
    read_field(*s, "split", c.seeds.split, "seeds.");
    read_field(*s, "init", c.seeds.init, "seeds.");
    read_field(*s, "shuffle", c.seeds.shuffle, "seeds.");
    read_field(*s, "test", c.seeds.test, "seeds.");
  }
  if (const auto p = j.find("paths"); p != j.end()) {
    if (!p->is_object()) throw ConfigError("paths", "must be an object");
    detail::reject_unknown(*p, {"datasets", "models", "results"}, "paths.");
    read_field(*p, "datasets", c.paths.datasets, "paths.");
    read_field(*p, "models", c.paths.models, "paths.");
    read_field(*p, "results", c.paths.results, "paths.");
  }
  return c;
}

// Sorted-key JSON, two-space indent, trailing newline.
inline std::string canonical_config(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

// SHA-256 of the compact canonical JSON with output paths left out, so
// relocating outputs does not change the fingerprint.
inline Digest config_fingerprint(const ExperimentConfig& c) {
  return sha256(to_json(c, false).dump());
}

inline ExperimentConfig load_config(const std::filesystem::path& path,
                                    ExperimentConfig base = ExperimentConfig::paper()) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<file>", path.string() + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

// Applies "name=value" to one of the seeds.
inline void apply_seed_override(ExperimentConfig& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError("seed-override", "expected K=V, got '" + std::string(assignment) + "'");
  const std::string key(assignment.substr(0, eq));
  const std::string value(assignment.substr(eq + 1));
  std::uint64_t v = 0;
  try {
    std::size_t used = 0;
    v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw ConfigError("seeds." + key, "'" + value + "' is not an unsigned integer");
  }
  std::uint64_t* slot = key == "channel"    ? &c.seeds.channel
                        : key == "schedule" ? &c.seeds.schedule
                        : key == "split"    ? &c.seeds.split
                        : key == "init"     ? &c.seeds.init
                        : key == "shuffle"  ? &c.seeds.shuffle
                        : key == "test"     ? &c.seeds.test
                                            : nullptr;
  if (!slot) throw ConfigError("seeds." + key, "unknown seed name");
  *slot = v;
}

}  // namespace fasrec
