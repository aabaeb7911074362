// fasrec: dataset generation, training and NMSE-vs-SNR sweeps for fluid
// antenna channel reconstruction.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fasrec/fasrec.hpp"

namespace {

using namespace fasrec;

struct CommonOptions {
  std::string config_path;
  std::string profile = "paper";
  std::vector<std::string> seed_overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON configuration file (overrides the profile)");
    cmd->add_option("--profile", profile, "Base parameter set")
        ->check(CLI::IsMember({"paper", "desk"}));
    cmd->add_option("--seed-override", seed_overrides, "Override a seed, e.g. channel=7")
        ->take_all();
  }

  ExperimentConfig resolve() const {
    ExperimentConfig base = profile == "desk" ? ExperimentConfig::desk() : ExperimentConfig::paper();
    ExperimentConfig cfg = config_path.empty() ? base : load_config(config_path, base);
    for (const auto& s : seed_overrides) apply_seed_override(cfg, s);
    cfg.validate();
    return cfg;
  }
};

void log_line(const std::string& s) { std::cerr << s << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fluid antenna channel reconstruction laboratory"};
  app.require_subcommand(1);

  CommonOptions gen_opts, train_opts, sweep_opts, sim_opts, show_opts;

  auto* gen = app.add_subcommand("generate", "Simulate one dataset per SNR point");
  gen_opts.attach(gen);
  std::string gen_out;
  unsigned threads = 1;
  gen->add_option("--out", gen_out, "Output directory (default: paths.datasets)");
  gen->add_option("--threads", threads, "Worker threads; output is identical for any count")
      ->check(CLI::PositiveNumber);

  auto* trn = app.add_subcommand("train", "Train the estimator on a dataset file");
  train_opts.attach(trn);
  std::string dataset_path, model_out;
  trn->add_option("--dataset", dataset_path, "FASD dataset file")->required()->check(CLI::ExistingFile);
  trn->add_option("--out", model_out, "Model file (default: paths.models/model_<snr>.fasm)");

  auto* swp = app.add_subcommand("sweep", "NMSE vs SNR for mlp, omp and ls_observed");
  sweep_opts.attach(swp);
  std::string sweep_out;
  bool auto_build = false;
  swp->add_option("--out", sweep_out, "Results CSV (default: paths.results/sweep.csv)");
  swp->add_flag("--auto-build", auto_build, "Generate and train missing models");

  auto* evl = app.add_subcommand("eval-single", "Estimate one channel from a pilot CSV");
  std::string eval_model, eval_in, eval_out;
  evl->add_option("--model", eval_model, "FASM model file")->required()->check(CLI::ExistingFile);
  evl->add_option("--in", eval_in, "Pilot CSV (re,im per line)")->required()->check(CLI::ExistingFile);
  evl->add_option("--out", eval_out, "Channel estimate CSV")->required();

  auto* sim = app.add_subcommand("simulate", "Write one simulated pilot vector and its channel");
  sim_opts.attach(sim);
  double sim_snr = 0.0;
  std::uint64_t sim_index = 0;
  std::string sim_out, sim_truth;
  sim->add_option("--snr", sim_snr, "SNR in dB");
  sim->add_option("--index", sim_index, "Sample index within the test stream");
  sim->add_option("--out", sim_out, "Pilot CSV")->required();
  sim->add_option("--truth", sim_truth, "True channel CSV");

  auto* show = app.add_subcommand("show-config", "Print the resolved canonical configuration");
  show_opts.attach(show);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const ExperimentConfig cfg = gen_opts.resolve();
      cmd_generate(cfg, gen_out.empty() ? cfg.paths.datasets : gen_out, threads, log_line);
    } else if (trn->parsed()) {
      const ExperimentConfig cfg = train_opts.resolve();
      fs::path out = model_out;
      if (out.empty()) {
        std::string stem = fs::path(dataset_path).stem().string();
        if (stem.rfind("dataset_", 0) == 0) stem = "model_" + stem.substr(8);
        out = fs::path(cfg.paths.models) / (stem + ".fasm");
      }
      const TrainOutcome r = cmd_train(cfg, dataset_path, out, log_line);
      log_line("best epoch " + std::to_string(r.report.best_epoch + 1) + " val_nmse_db " +
               format_g6(r.report.val_nmse_db[r.report.best_epoch]) +
               (r.report.stopped_early ? " (early stop)" : ""));
      log_line("wrote " + r.model_path.string() + " and " + r.csv_path.string());
    } else if (swp->parsed()) {
      const ExperimentConfig cfg = sweep_opts.resolve();
      const fs::path out = sweep_out.empty() ? fs::path(cfg.paths.results) / "sweep.csv" : fs::path(sweep_out);
      cmd_sweep(cfg, out, auto_build, log_line);
      log_line("wrote " + out.string());
    } else if (evl->parsed()) {
      cmd_eval_single(eval_model, eval_in, eval_out);
    } else if (sim->parsed()) {
      ExperimentConfig cfg = sim_opts.resolve();
      cfg.snr_db_list = {sim_snr};
      const GenerationSpec spec = make_generation_spec(cfg, {sim_snr});
      Rng rng(derive_seed(cfg.seeds.test, stream::test_set, sim_index));
      const ComplexVector h = draw_channel(spec.scattering, spec.geometry, rng);
      const PilotObservation y = observe(h, spec.schedule, spec.noise_variances[0], rng);
      write_file_text(sim_out, complex_csv(y.samples));
      if (!sim_truth.empty()) write_file_text(sim_truth, complex_csv(h));
    } else if (show->parsed()) {
      std::cout << canonical_config(show_opts.resolve());
    }
  } catch (const fasrec::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}
