// dpgp: command-line front end.
//
// Exit codes: 0 ok, 2 bad input, 3 numerical failure, 4 optimizer did not
// converge (bundle written anyway), 130 interrupted (partial bundle written).

#include "dpgp/config.hpp"
#include "dpgp/errors.hpp"
#include "dpgp/io.hpp"
#include "dpgp/pipeline.hpp"
#include "dpgp/synth.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>

namespace {

enum ExitCode : int { kOk = 0, kInput = 2, kNumerical = 3, kNotConverged = 4, kInterrupted = 130 };

std::atomic<bool> g_interrupted{false};

extern "C" void on_sigint(int) { g_interrupted.store(true); }

dpgp::RunConfig load_config(const std::string& path) {
  return path.empty() ? dpgp::RunConfig{} : dpgp::RunConfig::load(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clustering of grouped time series with a Dirichlet-process mixture of hierarchical GPs"};
  app.require_subcommand(1);

  dpgp::SyntheticSpec synth_spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic benchmark dataset");
  synth->add_option("--seed", synth_spec.seed, "Random seed");
  synth->add_option("--out", synth_out, "Output directory (data.csv, labels.csv)")->required();
  synth->add_option("--clusters", synth_spec.n_clusters, "Number of true clusters");
  synth->add_option("--times", synth_spec.n_times, "Number of shared time points");
  synth->add_option("--min-per-cluster", synth_spec.min_per_cluster);
  synth->add_option("--max-per-cluster", synth_spec.max_per_cluster);
  synth->add_option("--offset", synth_spec.offset_scale, "Amplitude of per-group offset curves");
  synth->add_option("--noise", synth_spec.noise_sd, "Observation noise sd");
  synth->add_option("--freq-jitter", synth_spec.freq_jitter, "Relative frequency jitter");

  std::string data_path, config_path, out_dir;
  auto* fit = app.add_subcommand("fit", "Fit the model and write a result bundle");
  fit->add_option("--data", data_path, "Dataset CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--config", config_path, "key=value configuration file")->check(CLI::ExistingFile);
  fit->add_option("--out", out_dir, "Bundle directory")->required();

  int restarts = 20;
  bool steepest_only = false;
  auto* cmp = app.add_subcommand("compare", "Race steepest against conjugate optimization from shared starts");
  cmp->add_option("--data", data_path, "Dataset CSV")->required()->check(CLI::ExistingFile);
  cmp->add_option("--config", config_path, "key=value configuration file")->check(CLI::ExistingFile);
  cmp->add_option("--restarts", restarts, "Number of paired restarts")->check(CLI::PositiveNumber);
  cmp->add_option("--out", out_dir, "Output directory")->required();
  cmp->add_flag("--steepest-only", steepest_only, "Run steepest mode twice (a determinism check)");

  std::string bundle_dir, grid_text, mode_text = "cluster-mean", id, pred_out;
  auto* pred = app.add_subcommand("predict", "Posterior predictions from a fitted bundle");
  pred->add_option("--bundle", bundle_dir, "Bundle directory")->required();
  pred->add_option("--grid", grid_text, "start:stop:num")->required();
  pred->add_option("--mode", mode_text, "cluster-mean | existing-group | new-group");
  pred->add_option("--id", id, "Only this cluster index or group name");
  pred->add_option("--out", pred_out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInput;
  }

  std::signal(SIGINT, on_sigint);
  try {
    if (*synth) {
      const dpgp::SyntheticData s = dpgp::generate(synth_spec);
      std::filesystem::create_directories(synth_out);
      dpgp::emit(std::filesystem::path(synth_out) / "data.csv", s.data);
      dpgp::write_labels(std::filesystem::path(synth_out) / "labels.csv", s.data.names, s.labels);
      std::cout << "wrote " << s.data.num_groups() << " groups x " << s.data.dim() << " points to " << synth_out
                << '\n';
      return kOk;
    }
    if (*fit) {
      const dpgp::RunConfig config = load_config(config_path);
      const dpgp::GroupedDataset data = dpgp::ingest(std::filesystem::path(data_path));
      dpgp::FitOptions options;
      options.cancel = &g_interrupted;
      const dpgp::ResultBundle bundle = dpgp::fit(config, data, options);
      dpgp::write_bundle(bundle, out_dir);
      std::cout << "bound " << dpgp::format_double(bundle.bound.total) << ", " << bundle.phi.cols()
                << " columns, " << dpgp::count_distinct(bundle.labels) << " occupied clusters\n";
      if (bundle.cancelled) {
        std::cerr << "interrupted; partial bundle written to " << out_dir << '\n';
        return kInterrupted;
      }
      if (!bundle.converged) {
        std::cerr << "optimizer did not converge within " << config.optimizer.max_iters << " iterations\n";
        return kNotConverged;
      }
      return kOk;
    }
    if (*cmp) {
      const dpgp::RunConfig config = load_config(config_path);
      const dpgp::GroupedDataset data = dpgp::ingest(std::filesystem::path(data_path));
      std::vector<dpgp::OptimizerMode> modes{dpgp::OptimizerMode::Steepest, dpgp::OptimizerMode::Conjugate};
      if (steepest_only) modes = {dpgp::OptimizerMode::Steepest, dpgp::OptimizerMode::Steepest};
      const dpgp::CompareResult result = dpgp::compare(config, data, restarts, modes, &g_interrupted);
      dpgp::write_compare(result, out_dir);
      std::cout << "wrote " << result.rows.size() << " runs to " << out_dir << '\n';
      if (g_interrupted.load()) return kInterrupted;
      for (const auto& r : result.rows) {
        if (!r.converged) return kNotConverged;
      }
      return kOk;
    }
    if (*pred) {
      const dpgp::ResultBundle bundle = dpgp::read_bundle(bundle_dir);
      const auto rows = dpgp::predict(bundle, dpgp::parse_grid(grid_text), dpgp::predict_mode_from_name(mode_text),
                                      id.empty() ? std::nullopt : std::optional<std::string>(id));
      if (pred_out.empty()) {
        dpgp::write_predictions(std::cout, rows);
      } else {
        std::ofstream out(pred_out, std::ios::binary);
        if (!out) throw dpgp::InputError("cannot write " + pred_out);
        dpgp::write_predictions(out, rows);
      }
      return kOk;
    }
  } catch (const dpgp::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const dpgp::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  }
  return kOk;
}
