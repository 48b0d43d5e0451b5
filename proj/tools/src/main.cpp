#include <CLI11.hpp>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sadl/fit.hpp"
#include "sadl/loss.hpp"
#include "sadl/moments.hpp"
#include "sadl/rng.hpp"
#include "sadl_cli/formats.hpp"
#include "verify.hpp"

namespace {

namespace fs = std::filesystem;

sadl::ScaleConfig load_config(const std::string& path) {
  if (path.empty()) return sadl::ScaleConfig::defaults(3);
  return sadl_cli::read_config(path);
}

std::vector<double> parse_grid_list(const std::string& csv, const char* flag) {
  std::vector<double> values;
  std::stringstream stream(csv);
  std::string token;
  while (std::getline(stream, token, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(token, &used);
      if (used != token.size()) throw std::invalid_argument(token);
      values.push_back(v);
    } catch (const std::exception&) {
      throw sadl_cli::ParseError(std::string(flag) + ": bad number '" + token + "'");
    }
  }
  if (values.empty()) {
    throw sadl_cli::ParseError(std::string(flag) + ": empty list");
  }
  return values;
}

// fixed-size worker pool over an index range; results land in caller slots
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
  const unsigned workers =
      std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                         static_cast<unsigned>(count == 0 ? 1 : count));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        body(i);
      }
    });
  }
  for (std::thread& t : pool) t.join();
}

int cmd_gen_density(const std::string& annotations, int scale, double beta,
                    const std::string& out, const std::string& heatmap) {
  const sadl::Scene scene = sadl_cli::read_annotations(annotations);
  if (scale < 1 || scale > 16) {
    throw std::invalid_argument("--scale must lie in [1, 16]");
  }
  sadl::ScaleGrid grid;
  grid.scale_index = scale;
  grid.factor = 1 << (scale - 1);
  grid.width = (scene.width + grid.factor - 1) / grid.factor;
  grid.height = (scene.height + grid.factor - 1) / grid.factor;

  const sadl::DensityMap map = sadl::gt_density_map(scene, grid, beta);
  sadl_cli::write_density_file(out, map);
  if (!heatmap.empty()) {
    sadl_cli::write_pgm_heatmap(heatmap, grid.width, grid.height, map.values);
  }
  std::printf("sum=%.6f\n", map.sum());
  return 0;
}

int cmd_loss(const std::string& annotations, const std::string& config_path,
             const std::vector<std::string>& pred_paths) {
  const sadl::Scene scene = sadl_cli::read_annotations(annotations);
  const sadl::ScaleConfig config = load_config(config_path);
  const std::vector<sadl::ScaleGrid> grids = sadl::build_grids(scene, config);

  if (pred_paths.size() != grids.size()) {
    throw std::invalid_argument("need exactly one --pred per scale");
  }
  std::vector<sadl::DensityMap> preds(grids.size());
  std::vector<bool> seen(grids.size(), false);
  for (const std::string& path : pred_paths) {
    sadl::DensityMap map = sadl_cli::read_density_file(path);
    const int s = map.grid.scale_index;
    if (s < 1 || s > static_cast<int>(grids.size())) {
      throw std::invalid_argument(path + ": scale_index outside the config range");
    }
    const sadl::ScaleGrid& expected = grids[static_cast<std::size_t>(s - 1)];
    if (map.grid.factor != expected.factor || map.grid.width != expected.width ||
        map.grid.height != expected.height) {
      throw std::invalid_argument(path + ": grid does not match the config-derived grid");
    }
    if (seen[static_cast<std::size_t>(s - 1)]) {
      throw std::invalid_argument(path + ": duplicate scale " + std::to_string(s));
    }
    seen[static_cast<std::size_t>(s - 1)] = true;
    preds[static_cast<std::size_t>(s - 1)] = std::move(map);
  }

  const std::vector<sadl::ScalePrecomp> precomp = sadl::precompute_scales(scene, config);
  const sadl::LossBreakdown breakdown = sadl::total_loss(preds, scene, config, precomp);
  for (std::size_t s = 0; s < grids.size(); ++s) {
    std::printf("scale=%d quad=%.9g reg=%.9g\n", grids[s].scale_index,
                breakdown.per_scale_quadratic[s], breakdown.per_scale_regularizer[s]);
  }
  std::printf("total=%.9g\n", breakdown.total);
  return 0;
}

void write_fit_report(const std::string& path, const sadl::FitReport& report) {
  std::ostringstream text;
  text << "iterations=" << report.iterations << "\n";
  text << "converged=" << (report.converged ? 1 : 0) << "\n";
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.9g", report.gt_count);
  text << "gt_count=" << buffer << "\n";
  std::snprintf(buffer, sizeof(buffer), "%.9g", report.final_loss.total);
  text << "total_loss=" << buffer << "\n";
  for (std::size_t s = 0; s < report.scale_counts.size(); ++s) {
    std::snprintf(buffer, sizeof(buffer), "%.9g", report.scale_counts[s]);
    text << "scale=" << (s + 1) << " count=" << buffer;
    std::snprintf(buffer, sizeof(buffer), "%.9g", report.final_loss.per_scale_quadratic[s]);
    text << " quad=" << buffer;
    std::snprintf(buffer, sizeof(buffer), "%.9g", report.final_loss.per_scale_regularizer[s]);
    text << " reg=" << buffer << "\n";
  }
  for (std::size_t i = 0; i < report.trajectory.size(); ++i) {
    std::snprintf(buffer, sizeof(buffer), "%.9g", report.trajectory[i]);
    text << "iter=" << i << " loss=" << buffer << "\n";
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw sadl_cli::IoError("cannot open " + path + " for writing");
  out << text.str();
  if (!out) throw sadl_cli::IoError("short write to " + path);
}

int cmd_fit(const std::string& spec_path, const std::string& annotations,
            const std::string& config_path, const std::string& report_path,
            const std::string& heatmap_dir, const sadl::FitOptions& options) {
  sadl::Scene scene = spec_path.empty()
                          ? sadl_cli::read_annotations(annotations)
                          : sadl::synth_scene(sadl_cli::read_synth_spec(spec_path));
  const sadl::ScaleConfig config = load_config(config_path);
  const sadl::FitReport report = sadl::fit_density(scene, config, options);

  write_fit_report(report_path, report);
  if (!heatmap_dir.empty()) {
    std::error_code ec;
    fs::create_directories(heatmap_dir, ec);
    for (const sadl::DensityMap& map : report.fitted) {
      const fs::path file =
          fs::path(heatmap_dir) / ("scale" + std::to_string(map.grid.scale_index) + ".pgm");
      sadl_cli::write_pgm_heatmap(file, map.grid.width, map.grid.height, map.values);
    }
  }

  std::printf("iterations=%d converged=%d gt_count=%.9g total_loss=%.9g\n",
              report.iterations, report.converged ? 1 : 0, report.gt_count,
              report.final_loss.total);
  for (std::size_t s = 0; s < report.scale_counts.size(); ++s) {
    std::printf("scale=%zu count=%.9g\n", s + 1, report.scale_counts[s]);
  }
  return 0;
}

struct SweepSceneParams {
  int width = 64;
  int height = 64;
  int count_min = 5;
  int count_max = 20;
  double margin = 12.0;
  double jitter = 8.0;
  std::uint64_t seed = 1;
};

int cmd_sweep(const std::string& alpha_csv, const std::string& beta_csv, int seeds,
              const std::string& out, const SweepSceneParams& params,
              const sadl::FitOptions& fit_options) {
  const std::vector<double> alphas = parse_grid_list(alpha_csv, "--alpha-grid");
  const std::vector<double> betas = parse_grid_list(beta_csv, "--beta-grid");
  if (seeds < 1) throw std::invalid_argument("--seeds must be >= 1");

  std::vector<sadl::Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(seeds));
  for (int k = 0; k < seeds; ++k) {
    sadl::SynthSpec spec;
    spec.width = params.width;
    spec.height = params.height;
    spec.count_min = params.count_min;
    spec.count_max = params.count_max;
    spec.margin = params.margin;
    spec.jitter_alpha = params.jitter;
    spec.seed = sadl::derive_seed(params.seed, static_cast<std::uint64_t>(k));
    scenes.push_back(sadl::synth_scene(spec));
  }

  struct Cell {
    double alpha = 0.0;
    double beta = 0.0;
    double mae = 0.0;
  };
  std::vector<Cell> cells;
  for (double a : alphas) {
    for (double b : betas) cells.push_back({a, b, 0.0});
  }

  std::vector<double> errors(cells.size() * static_cast<std::size_t>(seeds), 0.0);
  parallel_for(errors.size(), [&](std::size_t task) {
    const std::size_t cell = task / static_cast<std::size_t>(seeds);
    const std::size_t k = task % static_cast<std::size_t>(seeds);
    sadl::ScaleConfig config = sadl::ScaleConfig::defaults(3);
    config.alpha = cells[cell].alpha;
    config.beta1 = cells[cell].beta;
    const sadl::FitReport report = sadl::fit_density(scenes[k], config, fit_options);
    errors[task] = std::abs(report.scale_counts[0] - report.gt_count);
  });

  std::ostringstream table;
  for (std::size_t cell = 0; cell < cells.size(); ++cell) {
    double sum = 0.0;
    for (int k = 0; k < seeds; ++k) {
      sum += errors[cell * static_cast<std::size_t>(seeds) + static_cast<std::size_t>(k)];
    }
    cells[cell].mae = sum / static_cast<double>(seeds);
    char row[96];
    std::snprintf(row, sizeof(row), "%g,%g,%.6f\n", cells[cell].alpha, cells[cell].beta,
                  cells[cell].mae);
    table << row;
  }

  std::ofstream file(out, std::ios::binary | std::ios::trunc);
  if (!file) throw sadl_cli::IoError("cannot open " + out + " for writing");
  file << table.str();
  if (!file) throw sadl_cli::IoError("short write to " + out);
  std::fputs(table.str().c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scale-aware joint-likelihood density loss tools"};
  app.require_subcommand(1);

  // gen-density
  auto* gen = app.add_subcommand("gen-density",
                                 "ground-truth density map from point annotations");
  std::string gen_annotations;
  std::string gen_out;
  std::string gen_heatmap;
  int gen_scale = 1;
  double gen_beta = 8.0;
  gen->add_option("--annotations", gen_annotations, "annotation JSON")->required();
  gen->add_option("--scale", gen_scale, "scale index (1-based)");
  gen->add_option("--beta", gen_beta, "kernel variance in grid units^2");
  gen->add_option("--out", gen_out, "output density file")->required();
  gen->add_option("--heatmap", gen_heatmap, "optional PGM heatmap path");

  // loss
  auto* loss = app.add_subcommand("loss", "evaluate the loss for prediction files");
  std::string loss_annotations;
  std::string loss_config;
  std::vector<std::string> loss_preds;
  loss->add_option("--annotations", loss_annotations, "annotation JSON")->required();
  loss->add_option("--config", loss_config, "config JSON (defaults when omitted)");
  loss->add_option("--pred", loss_preds, "density file, one per scale")->required();

  // verify
  auto* verify = app.add_subcommand("verify", "oracle cross-check suites");
  sadl_cli::VerifyOptions verify_options;
  verify->add_option("--suite", verify_options.suite, "moments|lowrank|gradient|all")
      ->check(CLI::IsMember({"moments", "lowrank", "gradient", "all"}));
  verify->add_option("--seed", verify_options.seed, "randomization seed");
  verify->add_option("--samples", verify_options.samples, "Monte-Carlo samples")
      ->check(CLI::Range(std::uint64_t{2}, std::uint64_t{100000000}));
  verify->add_flag("--debug-corrupt-tolerances", verify_options.corrupt_tolerances,
                   "debug: corrupt tolerances so every check fails");

  // fit
  auto* fit = app.add_subcommand("fit", "fit density maps by gradient descent");
  std::string fit_spec;
  std::string fit_annotations;
  std::string fit_config;
  std::string fit_report;
  std::string fit_heatmaps;
  sadl::FitOptions fit_options;
  fit_options.max_iters = 1500;
  fit_options.tolerance = 1e-10;
  auto* spec_opt = fit->add_option("--spec", fit_spec, "synthetic scene JSON");
  fit->add_option("--annotations", fit_annotations, "annotation JSON")->excludes(spec_opt);
  fit->add_option("--config", fit_config, "config JSON");
  fit->add_option("--report", fit_report, "output report path")->required();
  fit->add_option("--heatmaps", fit_heatmaps, "directory for per-scale PGM heatmaps");
  fit->add_option("--max-iters", fit_options.max_iters, "iteration cap");
  fit->add_option("--step", fit_options.step_size, "initial step scale");
  fit->add_option("--tol", fit_options.tolerance, "relative loss-change tolerance");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "alpha/beta sensitivity sweep");
  std::string sweep_alpha;
  std::string sweep_beta;
  std::string sweep_out;
  int sweep_seeds = 10;
  SweepSceneParams sweep_params;
  sadl::FitOptions sweep_fit;
  sweep_fit.max_iters = 800;
  sweep_fit.tolerance = 1e-10;
  sweep->add_option("--alpha-grid", sweep_alpha, "comma-separated alphas")->required();
  sweep->add_option("--beta-grid", sweep_beta, "comma-separated beta1 values")->required();
  sweep->add_option("--seeds", sweep_seeds, "scenes per cell");
  sweep->add_option("--out", sweep_out, "output CSV path")->required();
  sweep->add_option("--width", sweep_params.width, "scene width");
  sweep->add_option("--height", sweep_params.height, "scene height");
  sweep->add_option("--count-min", sweep_params.count_min, "minimum head count");
  sweep->add_option("--count-max", sweep_params.count_max, "maximum head count");
  sweep->add_option("--margin", sweep_params.margin, "placement margin in pixels");
  sweep->add_option("--jitter", sweep_params.jitter, "annotation jitter variance");
  sweep->add_option("--seed", sweep_params.seed, "base scene seed");
  sweep->add_option("--max-iters", sweep_fit.max_iters, "fit iteration cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_density(gen_annotations, gen_scale, gen_beta, gen_out, gen_heatmap);
    }
    if (loss->parsed()) return cmd_loss(loss_annotations, loss_config, loss_preds);
    if (verify->parsed()) return sadl_cli::run_verify(verify_options);
    if (fit->parsed()) {
      if (fit_spec.empty() && fit_annotations.empty()) {
        throw std::invalid_argument("fit: need --spec or --annotations");
      }
      return cmd_fit(fit_spec, fit_annotations, fit_config, fit_report, fit_heatmaps,
                     fit_options);
    }
    if (sweep->parsed()) {
      return cmd_sweep(sweep_alpha, sweep_beta, sweep_seeds, sweep_out, sweep_params,
                       sweep_fit);
    }
  } catch (const sadl_cli::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
