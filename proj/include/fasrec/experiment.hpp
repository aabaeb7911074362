#pragma once

// The experiment harness behind the command-line tool: dataset generation,
// training, NMSE-vs-SNR sweeps and single-observation evaluation. Every
// command is a pure function of (config, input files, seeds).

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fasrec/baselines.hpp"
#include "fasrec/binary_io.hpp"
#include "fasrec/config.hpp"
#include "fasrec/dataset.hpp"
#include "fasrec/mlp.hpp"
#include "fasrec/pilot_system.hpp"

namespace fasrec {

namespace fs = std::filesystem;

// Logical stream ids for derive_seed.
namespace stream {
inline constexpr std::uint64_t train_set = 1;
inline constexpr std::uint64_t mixed_set = 2;
inline constexpr std::uint64_t test_set = 3;
}  // namespace stream

using Logger = std::function<void(const std::string&)>;

inline std::string format_g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string snr_tag(double snr_db) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "snr%+.1f", snr_db);
  return buf;
}

inline SwitchSchedule make_schedule(const ExperimentConfig& cfg) {
  if (cfg.schedule_kind == ScheduleKind::random) {
    Rng rng(cfg.seeds.schedule);
    return random_schedule(cfg.num_ports, cfg.num_antennas, cfg.num_slots, rng);
  }
  return sequential_schedule(cfg.num_ports, cfg.num_antennas, cfg.num_slots);
}

inline GenerationSpec make_generation_spec(const ExperimentConfig& cfg,
                                           std::vector<double> snr_db) {
  std::vector<double> noise;
  for (double s : snr_db) noise.push_back(noise_variance_for_snr(s));
  return {cfg.geometry(), cfg.scattering(), make_schedule(cfg), std::move(noise),
          config_fingerprint(cfg)};
}

inline fs::path dataset_file(const ExperimentConfig& cfg, std::size_t snr_index) {
  if (cfg.snr_mode == SnrMode::mixed) return fs::path(cfg.paths.datasets) / "dataset_mixed.fasd";
  return fs::path(cfg.paths.datasets) / ("dataset_" + snr_tag(cfg.snr_db_list.at(snr_index)) + ".fasd");
}

inline fs::path model_file(const ExperimentConfig& cfg, std::size_t snr_index) {
  if (cfg.snr_mode == SnrMode::mixed) return fs::path(cfg.paths.models) / "model_mixed.fasm";
  return fs::path(cfg.paths.models) / ("model_" + snr_tag(cfg.snr_db_list.at(snr_index)) + ".fasm");
}

inline fs::path convergence_file(const fs::path& model_path) {
  fs::path p = model_path;
  p.replace_extension(".convergence.csv");
  return p;
}

// One dataset per SNR point (or a single mixed-SNR dataset) under `out_dir`,
// n_train_samples rows each.
inline std::vector<fs::path> cmd_generate(ExperimentConfig cfg, const fs::path& out_dir,
                                          unsigned threads = 1, const Logger& log = {}) {
  cfg.validate();
  cfg.paths.datasets = out_dir.string();
  std::vector<fs::path> written;
  const auto n = static_cast<Eigen::Index>(cfg.n_train_samples);
  if (cfg.snr_mode == SnrMode::mixed) {
    const GenerationSpec spec = make_generation_spec(cfg, cfg.snr_db_list);
    const Dataset ds = generate_dataset(spec, n, derive_seed(cfg.seeds.channel, stream::mixed_set), threads);
    written.push_back(dataset_file(cfg, 0));
    save_dataset(ds, written.back());
    if (log) log("wrote " + written.back().string());
    return written;
  }
  for (std::size_t k = 0; k < cfg.snr_db_list.size(); ++k) {
    const GenerationSpec spec = make_generation_spec(cfg, {cfg.snr_db_list[k]});
    const Dataset ds =
        generate_dataset(spec, n, derive_seed(cfg.seeds.channel, stream::train_set, k), threads);
    written.push_back(dataset_file(cfg, k));
    save_dataset(ds, written.back());
    if (log) log("wrote " + written.back().string());
  }
  return written;
}

inline TrainOptions train_options(const ExperimentConfig& cfg) {
  TrainOptions o;
  o.hidden_width = static_cast<Eigen::Index>(cfg.hidden_width);
  o.learning_rate = cfg.learning_rate;
  o.batch_size = static_cast<Eigen::Index>(cfg.batch_size);
  o.max_epochs = cfg.max_epochs;
  o.patience = cfg.patience;
  o.init_seed = cfg.seeds.init;
  o.shuffle_seed = cfg.seeds.shuffle;
  return o;
}

struct TrainOutcome {
  TrainReport report;
  fs::path model_path;
  fs::path csv_path;
  std::vector<std::string> warnings;
};

// Splits the dataset, trains, and writes the model plus its per-epoch CSV
// (model path with extension ".convergence.csv").
inline TrainOutcome cmd_train(const ExperimentConfig& cfg, const fs::path& dataset_path,
                              const fs::path& model_out, const Logger& log = {}) {
  cfg.validate();
  TrainOutcome out;
  const Dataset ds = load_dataset(dataset_path);
  if (ds.config_fingerprint != config_fingerprint(cfg)) {
    out.warnings.push_back("dataset " + dataset_path.string() +
                           " was generated with a different configuration (fingerprint " +
                           to_hex(ds.config_fingerprint).substr(0, 12) + ")");
    if (log) log("warning: " + out.warnings.back());
  }
  Rng split_rng(cfg.seeds.split);
  const DatasetSplit parts = split(ds, cfg.rho, split_rng);
  EpochCallback progress;
  if (log)
    progress = [&](std::size_t e, double loss, double val_db) {
      log("epoch " + std::to_string(e) + " train_loss " + format_g6(loss) + " val_nmse_db " +
          format_g6(val_db));
    };
  TrainResult result = train(parts.train, parts.validation, train_options(cfg), progress);
  out.report = std::move(result.report);
  out.model_path = model_out;
  out.csv_path = convergence_file(model_out);
  save_model(result.model, out.model_path);
  write_file_text(out.csv_path, out.report.to_csv());
  return out;
}

struct SweepRow {
  double snr_db;
  std::string estimator;
  double nmse_db;
  std::uint64_t n_test;
};

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "snr_db,estimator,nmse_db,n_test\n";
  for (const auto& r : rows)
    out += format_g6(r.snr_db) + "," + r.estimator + "," + format_g6(r.nmse_db) + "," +
           std::to_string(r.n_test) + "\n";
  return out;
}

// Fresh test set for SNR point k; never overlaps the training streams.
inline Dataset make_test_set(const ExperimentConfig& cfg, std::size_t k) {
  const GenerationSpec spec = make_generation_spec(cfg, {cfg.snr_db_list.at(k)});
  return generate_dataset(spec, static_cast<Eigen::Index>(cfg.n_test_samples),
                          derive_seed(cfg.seeds.test, stream::test_set, k));
}

// For every SNR and estimator (mlp, omp, ls_observed): ensemble NMSE in dB
// over a fresh test set. Missing models are built when auto_build is set,
// otherwise reported with the commands that create them.
inline std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, const fs::path& out_csv,
                                       bool auto_build = false, const Logger& log = {}) {
  cfg.validate();
  const SwitchSchedule sched = make_schedule(cfg);
  const AngularDictionary dict = build_dictionary(
      cfg.geometry(), sched, static_cast<Eigen::Index>(cfg.omp_grid_factor * cfg.num_ports));
  const auto sparsity = static_cast<Eigen::Index>(cfg.sparsity());

  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k < cfg.snr_db_list.size(); ++k) {
    const double snr = cfg.snr_db_list[k];
    const double sigma2 = noise_variance_for_snr(snr);
    const fs::path model_path = model_file(cfg, k);
    if (!fs::exists(model_path)) {
      if (!auto_build)
        throw IoError("missing model " + model_path.string() +
                      "; create it with `fasrec generate` followed by `fasrec train` "
                      "(or rerun sweep with --auto-build)");
      const fs::path ds_path = dataset_file(cfg, k);
      if (!fs::exists(ds_path)) cmd_generate(cfg, cfg.paths.datasets, 1, log);
      cmd_train(cfg, ds_path, model_path, log);
    }
    const EstimatorModel model = load_model(model_path);
    const Dataset test = make_test_set(cfg, k);

    NmseAccumulator mlp, omp, ls;
    const Eigen::MatrixXd mlp_pred = model.predict_packed(test.features);
    for (Eigen::Index i = 0; i < test.size(); ++i) {
      const ComplexVector h = unpack_complex(test.targets.row(i).transpose());
      const ComplexVector y = unpack_complex(test.features.row(i).transpose());
      mlp.add(unpack_complex(mlp_pred.row(i).transpose()), h);
      omp.add(omp_estimate(y, dict, sparsity).estimate, h);
      ls.add(ls_observed_estimate(y, sched, sigma2), h);
    }
    for (auto [name, acc] : {std::pair{"mlp", &mlp}, std::pair{"omp", &omp},
                             std::pair{"ls_observed", &ls}})
      rows.push_back({snr, name, acc->value_db(), static_cast<std::uint64_t>(test.size())});
    if (log)
      log("snr " + format_g6(snr) + " dB: mlp " + format_g6(mlp.value_db()) + " omp " +
          format_g6(omp.value_db()) + " ls_observed " + format_g6(ls.value_db()));
  }
  write_file_text(out_csv, sweep_csv(rows));
  return rows;
}

// Complex vectors as CSV: header "re,im", then one sample per line.
inline std::string complex_csv(const ComplexVector& v) {
  std::string out = "re,im\n";
  for (Eigen::Index i = 0; i < v.size(); ++i)
    out += format_g6(v[i].real()) + "," + format_g6(v[i].imag()) + "\n";
  return out;
}

inline ComplexVector parse_complex_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::complex<double>> values;
  auto parse_number = [&](const std::string& field) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(field, &used);
    } catch (const std::exception&) {
      throw ParseError(line_no, "'" + field + "' is not a number");
    }
    if (used != field.size()) throw ParseError(line_no, "'" + field + "' is not a number");
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "re,im") throw ParseError(line_no, "expected header 're,im'");
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw ParseError(line_no, "expected two comma-separated fields");
    values.emplace_back(parse_number(line.substr(0, comma)), parse_number(line.substr(comma + 1)));
  }
  if (line_no == 0) throw ParseError(1, "empty file");
  ComplexVector v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<Eigen::Index>(i)] = values[i];
  return v;
}

inline ComplexVector read_complex_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_complex_csv(in);
}

// Online prediction for one stacked pilot vector.
inline ComplexVector cmd_eval_single(const fs::path& model_path, const fs::path& pilot_csv,
                                     const fs::path& out_csv) {
  const EstimatorModel model = load_model(model_path);
  const ComplexVector y = read_complex_csv(pilot_csv);
  if (2 * y.size() != model.params.input_dim())
    throw ShapeError("pilot file has " + std::to_string(y.size()) + " samples, model expects " +
                     std::to_string(model.params.input_dim() / 2));
  const ComplexVector h_hat = model.predict(y);
  write_file_text(out_csv, complex_csv(h_hat));
  return h_hat;
}

}  // namespace fasrec
