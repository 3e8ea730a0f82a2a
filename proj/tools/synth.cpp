// synth: command-line front end for passivity-constrained LQR synthesis.
//
//   synth check     --plant p.json --gain "-0.5,0"
//   synth find-gain --plant p.json
//   synth explore   --plant p.json [--seed-gain ...] [--edge 0.4] [--box "lo..hi,lo..hi"] --out dir
//   synth approx    --plant p.json --atlas dir/atlas.csv --out dir
//   synth optimize  --plant p.json --polytope dir/polytope.csv [--start ...] --out dir
//   synth pipeline  --plant p.json --out dir [--plot]
//   synth plot      --ledger dir/ledger.json [--no-raster]
//
// Exit codes: 0 success, 1 infeasible or failed verdict, 2 usage or parse
// error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "passynth/passynth.hpp"

namespace ps = passynth;
using ps::MatrixXd;
using ps::VectorXd;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

int exit_code_for(const ps::SynthError& e) {
  switch (e.code()) {
    case ps::ErrorCode::kParse:
    case ps::ErrorCode::kIo:
    case ps::ErrorCode::kDimensionMismatch:
    case ps::ErrorCode::kNonSquare:
    case ps::ErrorCode::kInvalidArgument:
    case ps::ErrorCode::kDimensionUnsupported:
      return kExitUsage;
    default:
      return kExitFail;
  }
}

/// "a,b;c,d" -> [[a, b], [c, d]].
MatrixXd parse_matrix(const std::string& text, const std::string& flag) {
  std::vector<VectorXd> rows;
  for (const auto& row : ps::io::split(text, ';')) {
    rows.push_back(ps::io::parse_vector(row, flag));
  }
  if (rows.empty() || rows.front().size() == 0) {
    throw ps::SynthError(ps::ErrorCode::kParse, flag + ": empty matrix");
  }
  MatrixXd M(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != M.cols()) {
      throw ps::SynthError(ps::ErrorCode::kParse, flag + " row " + std::to_string(i) + ": expected " +
                                                      std::to_string(M.cols()) + " entries, got " +
                                                      std::to_string(rows[i].size()));
    }
    M.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return M;
}

/// Accepts either the gain shape or its column-major vectorization.
MatrixXd parse_gain(const std::string& text, const ps::LtiPlant& plant, const std::string& flag) {
  MatrixXd K = parse_matrix(text, flag);
  if (K.rows() == plant.m() && K.cols() == plant.n()) return K;
  if (K.size() == plant.m() * plant.n() && (K.rows() == 1 || K.cols() == 1)) {
    return ps::unvec(Eigen::Map<const VectorXd>(K.data(), K.size()), plant.m(), plant.n());
  }
  throw ps::SynthError(ps::ErrorCode::kParse, flag + ": gain must be " + std::to_string(plant.m()) +
                                                  "x" + std::to_string(plant.n()) + ", got " +
                                                  ps::shape_of(K));
}

/// "lo..hi,lo..hi" -> (lo, hi).
std::pair<VectorXd, VectorXd> parse_box(const std::string& text) {
  const auto parts = ps::io::split(text, ',');
  VectorXd lo(static_cast<Eigen::Index>(parts.size())), hi(lo.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto dots = parts[i].find("..");
    if (dots == std::string::npos) {
      throw ps::SynthError(ps::ErrorCode::kParse, "--box: expected lo..hi, got '" + parts[i] + "'");
    }
    const auto k = static_cast<Eigen::Index>(i);
    lo(k) = ps::io::parse_double(parts[i].substr(0, dots), "--box");
    hi(k) = ps::io::parse_double(parts[i].substr(dots + 2), "--box");
    if (!(hi(k) > lo(k))) throw ps::SynthError(ps::ErrorCode::kParse, "--box: empty interval");
  }
  return {lo, hi};
}

std::string fmt(double v) { return ps::io::format_double(v); }

void print_matrix(const std::string& name, const MatrixXd& M) {
  std::cout << name << " =\n";
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    std::cout << "  [";
    for (Eigen::Index j = 0; j < M.cols(); ++j) std::cout << (j ? ", " : "") << fmt(M(i, j));
    std::cout << "]\n";
  }
}

void print_certificate(const ps::PassivityCertificate& c) {
  print_matrix("P", c.P);
  std::cout << "lambda_max_constraint = " << fmt(c.lambda_max_constraint)
            << " (normalized " << fmt(c.normalized_margin()) << ")\n"
            << "lambda_min_P = " << fmt(c.lambda_min_P) << "\n"
            << "equality_residual = " << fmt(c.equality_residual) << "\n";
  for (const auto& w : c.warnings) std::cout << "warning: " << w << "\n";
}

struct Common {
  std::string plant_file;
  std::string mode;
  std::uint64_t seed = 0;
  std::string out = ".";
};

ps::io::PlantSpec load(const Common& c) {
  auto spec = ps::io::read_plant(c.plant_file);
  if (!c.mode.empty()) spec.mode.kind = ps::io::parse_mode(c.mode);
  return spec;
}

ps::SearchOptions search_options(const Common& c) {
  ps::SearchOptions s;
  s.seed = c.seed;
  return s;
}

MatrixXd default_seed(const ps::io::PlantSpec& spec, const ps::SearchOptions& search, double edge) {
  auto pre = ps::precheck_optimal(spec.plant, spec.mode, search);
  if (pre.already_passive) return pre.care.K;
  auto found = ps::find_passivating_gain(spec.plant, spec.mode, search);
  if (!found.pair) {
    throw ps::SynthError(ps::ErrorCode::kEmptyRegion, "no passivating gain found (best lambda_max " +
                                                          fmt(found.best_lambda_max) + ")");
  }
  return ps::choose_seed(spec.plant, spec.mode, found.pair->K, pre.care.K, edge, search);
}

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ps::SynthError(ps::ErrorCode::kIo, "cannot create '" + dir + "': " + ec.message());
}

int run_plot(const std::string& ledger_file, const std::string& output, bool raster,
             int resolution, unsigned workers) {
  namespace io = ps::io;
  const auto ledger = io::read_ledger(ledger_file);
  if (!ledger.contains("artifacts") || !ledger["artifacts"].contains("plant")) {
    throw ps::SynthError(ps::ErrorCode::kParse, ledger_file + ": ledger lists no plant artifact");
  }
  const auto arts = ledger["artifacts"];
  const auto spec = io::read_plant(io::artifact_path(ledger_file, arts["plant"].get<std::string>()));
  ps::svg::require_two_parameters(spec.plant);

  ps::svg::PlotData data;
  data.plant = spec.plant;
  data.mode = spec.mode;
  if (arts.contains("atlas")) {
    const auto path = io::artifact_path(ledger_file, arts["atlas"].get<std::string>());
    data.region = io::atlas_from_csv(io::read_text(path), path);
  }
  if (arts.contains("polytope")) {
    const auto path = io::artifact_path(ledger_file, arts["polytope"].get<std::string>());
    data.polytope = io::polytope_from_csv(io::read_text(path), path);
  }
  if (arts.contains("trajectories")) {
    for (const auto& t : arts["trajectories"]) {
      const auto path = io::artifact_path(ledger_file, t.get<std::string>());
      data.trajectories.push_back(io::trajectory_from_csv(io::read_text(path), path));
    }
  }
  if (ledger.contains("K_star")) data.K_star = io::matrix_from_json(ledger["K_star"], "K_star");
  if (ledger.contains("f_K_star")) data.f_star = ledger["f_K_star"].get<double>();
  if (ledger.contains("window")) {
    data.window_lo = io::vector_from_json(ledger["window"]["lo"], "window.lo");
    data.window_hi = io::vector_from_json(ledger["window"]["hi"], "window.hi");
  } else {
    data.window_lo = VectorXd::Constant(2, -1.0);
    data.window_hi = VectorXd::Constant(2, 1.0);
  }
  ps::svg::PlotOptions options;
  options.passivity_raster = raster;
  options.resolution = resolution;
  options.workers = workers;
  if (ledger.contains("seed")) options.search.seed = ledger["seed"].get<std::uint64_t>();
  io::write_text(output, ps::svg::render(data, options));
  std::cout << "wrote " << output << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Passivity-constrained LQR gain synthesis"};
  app.require_subcommand(1);
  const unsigned workers = ps::default_worker_count();

  Common common;
  auto add_common = [&](CLI::App* sub, bool needs_plant = true) {
    auto* opt = sub->add_option("--plant", common.plant_file, "Plant description (JSON)");
    if (needs_plant) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--mode", common.mode, "strict or nonstrict (overrides the plant file)")
        ->check(CLI::IsMember({"strict", "nonstrict"}));
    sub->add_option("--seed", common.seed, "Seed for every randomized search");
  };

  std::string gain_text, seed_gain_text, box_text, atlas_file, polytope_file, ledger_file,
      plot_output;
  std::vector<std::string> start_texts;
  double edge = 0.4, alpha = 1.0;
  std::optional<double> tol;
  std::size_t max_cubes = 400;
  bool plot = false, no_raster = false;
  int resolution = 201;

  auto* check = app.add_subcommand("check", "Certify a single gain");
  add_common(check);
  check->add_option("--gain", gain_text, "Gain matrix, rows separated by ';'")->required();

  auto* find = app.add_subcommand("find-gain", "Search for any passivating gain");
  add_common(find);

  auto* exp = app.add_subcommand("explore", "Flood-fill verified cubes from a seed gain");
  add_common(exp);
  exp->add_option("--seed-gain", seed_gain_text, "Seed gain (default: searched)");
  exp->add_option("--edge", edge, "Cube edge length")->check(CLI::PositiveNumber);
  exp->add_option("--box", box_text, "Search box, lo..hi per gain entry");
  exp->add_option("--max-cubes", max_cubes, "Cube budget");
  exp->add_option("--out", common.out, "Output directory");

  auto* approx = app.add_subcommand("approx", "Inscribe a box into a verified atlas");
  add_common(approx);
  approx->add_option("--atlas", atlas_file, "Atlas CSV")->required()->check(CLI::ExistingFile);
  approx->add_option("--out", common.out, "Output directory");

  auto* opt = app.add_subcommand("optimize", "Integrate the projected gradient flow");
  add_common(opt);
  opt->add_option("--polytope", polytope_file, "Polytope CSV")->required()->check(CLI::ExistingFile);
  opt->add_option("--start", start_texts, "Start gain (repeatable; default: polytope center)");
  opt->add_option("--alpha", alpha, "Flow gain")->check(CLI::PositiveNumber);
  opt->add_option("--tol", tol, "Projected-gradient tolerance");
  opt->add_option("--out", common.out, "Output directory");

  auto* pipe = app.add_subcommand("pipeline", "Run every stage and write a ledger");
  add_common(pipe);
  pipe->add_option("--seed-gain", seed_gain_text, "Seed gain for exploration");
  pipe->add_option("--edge", edge, "Cube edge length")->check(CLI::PositiveNumber);
  pipe->add_option("--box", box_text, "Search box, lo..hi per gain entry");
  pipe->add_option("--max-cubes", max_cubes, "Cube budget");
  pipe->add_option("--start", start_texts, "Additional flow start (repeatable)");
  pipe->add_option("--alpha", alpha, "Flow gain")->check(CLI::PositiveNumber);
  pipe->add_option("--tol", tol, "Projected-gradient tolerance");
  pipe->add_option("--out", common.out, "Output directory");
  pipe->add_flag("--plot", plot, "Also write figure.svg");
  pipe->add_flag("--no-raster", no_raster, "Skip the passivity raster in the figure");
  pipe->add_option("--resolution", resolution, "Raster resolution")->check(CLI::Range(2, 2001));

  auto* plt = app.add_subcommand("plot", "Render a ledger as SVG");
  plt->add_option("--ledger", ledger_file, "Ledger JSON")->required()->check(CLI::ExistingFile);
  plt->add_option("--output", plot_output, "SVG file (default: figure.svg next to the ledger)");
  plt->add_flag("--no-raster", no_raster, "Skip the passivity raster");
  plt->add_option("--resolution", resolution, "Raster resolution")->check(CLI::Range(2, 2001));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*check) {
      const auto spec = load(common);
      const MatrixXd K = parse_gain(gain_text, spec.plant, "--gain");
      const auto r = ps::certify_gain(spec.plant, K, spec.mode, search_options(common));
      if (r.certificate) {
        std::cout << "PASS (" << ps::to_string(spec.mode.kind) << ")\n";
        print_certificate(*r.certificate);
        return kExitOk;
      }
      std::cout << "FAIL (" << ps::to_string(spec.mode.kind) << ")\n"
                << "best lambda_max = " << fmt(r.best_lambda_max) << " (normalized "
                << fmt(r.best_lambda_max / r.constraint_scale) << ")\n";
      return kExitFail;
    }

    if (*find) {
      const auto spec = load(common);
      const auto r = ps::find_passivating_gain(spec.plant, spec.mode, search_options(common));
      if (!r.pair) {
        std::cout << "INFEASIBLE\nbest lambda_max = " << fmt(r.best_lambda_max) << "\n";
        return kExitFail;
      }
      std::cout << "FOUND\n";
      print_matrix("K", r.pair->K);
      print_certificate(r.pair->certificate);
      return kExitOk;
    }

    if (*exp) {
      const auto spec = load(common);
      const auto search = search_options(common);
      ps::ExploreConfig config;
      config.seed_gain = seed_gain_text.empty() ? default_seed(spec, search, edge)
                                                : parse_gain(seed_gain_text, spec.plant, "--seed-gain");
      config.edge = edge;
      config.max_cubes = max_cubes;
      if (!box_text.empty()) config.search_box = parse_box(box_text);
      config.search = search;
      config.workers = workers;
      const auto region = ps::explore(spec.plant, spec.mode, config);
      ensure_dir(common.out);
      const auto path = join(common.out, "atlas.csv");
      ps::io::write_text(path, ps::io::atlas_to_csv(region, spec.plant.n()));
      std::cout << "verified " << region.cubes.size() << " cubes, rejected "
                << region.rejected.size() << "\nwrote " << path << "\n";
      return kExitOk;
    }

    if (*approx) {
      const auto spec = load(common);
      auto region = ps::io::atlas_from_csv(ps::io::read_text(atlas_file), atlas_file);
      ps::io::revalidate_region(spec.plant, spec.mode, region);
      const auto poly = ps::inscribe_polytope(region, [&](const VectorXd& k) {
        return ps::lqr_cost(spec.plant, ps::unvec(k, spec.plant.m(), spec.plant.n()));
      });
      ensure_dir(common.out);
      const auto path = join(common.out, "polytope.csv");
      ps::io::write_text(path, ps::io::polytope_to_csv(poly));
      std::cout << "center = [" << ps::io::join_vector(poly.chebyshev_center, ' ') << "]\nwrote "
                << path << "\n";
      return kExitOk;
    }

    if (*opt) {
      const auto spec = load(common);
      const auto poly = ps::io::polytope_from_csv(ps::io::read_text(polytope_file), polytope_file);
      std::vector<MatrixXd> starts;
      for (const auto& s : start_texts) starts.push_back(parse_gain(s, spec.plant, "--start"));
      if (starts.empty()) {
        starts.push_back(ps::unvec(poly.chebyshev_center, spec.plant.m(), spec.plant.n()));
      }
      ps::FlowConfig flow;
      flow.alpha = alpha;
      flow.tol_grad = tol;
      ensure_dir(common.out);
      for (std::size_t i = 0; i < starts.size(); ++i) {
        const auto traj = ps::integrate_flow(spec.plant, poly, starts[i], flow);
        const auto path = join(common.out, "trajectory_" + std::to_string(i) + ".csv");
        ps::io::write_text(path, ps::io::trajectory_to_csv(traj));
        std::cout << "start " << i << ": " << ps::to_string(traj.termination) << ", f = "
                  << fmt(traj.samples.back().f) << "\n";
        print_matrix("K_hat", traj.terminal_gain);
        std::cout << "wrote " << path << "\n";
      }
      return kExitOk;
    }

    if (*pipe) {
      auto spec = load(common);
      ps::PipelineOptions options;
      options.mode = spec.mode;
      options.edge = edge;
      options.max_cubes = max_cubes;
      if (!box_text.empty()) options.search_box = parse_box(box_text);
      if (!seed_gain_text.empty()) options.seed_gain = parse_gain(seed_gain_text, spec.plant, "--seed-gain");
      for (const auto& s : start_texts) options.extra_starts.push_back(parse_gain(s, spec.plant, "--start"));
      options.flow.alpha = alpha;
      options.flow.tol_grad = tol;
      options.search = search_options(common);
      options.workers = workers;
      const auto result = ps::run_pipeline(spec.plant, options);
      const auto ledger = ps::io::write_run(common.out, spec, options, common.seed, result);
      const auto ledger_path = join(common.out, "ledger.json");
      if (result.short_circuit) std::cout << "optimal gain is already passivating\n";
      if (result.K_hat) {
        print_matrix("K_hat", *result.K_hat);
        std::cout << "f_K_hat = " << fmt(result.f_hat) << " (upper bound)\n"
                  << "f_K_star = " << fmt(result.f_star) << "\n";
      }
      std::cout << "ledger " << ledger_path << " hash " << ledger["result_hash"].get<std::string>()
                << "\n";
      if (!result.ok()) {
        std::cerr << "error in stage '" << result.failed_stage << "' ["
                  << ps::to_string(result.error->code()) << "]: " << result.error->what() << "\n";
        return exit_code_for(*result.error);
      }
      if (plot) {
        return run_plot(ledger_path, join(common.out, "figure.svg"), !no_raster, resolution, workers);
      }
      return kExitOk;
    }

    if (*plt) {
      const std::string output =
          plot_output.empty()
              ? (std::filesystem::path(ledger_file).parent_path() / "figure.svg").string()
              : plot_output;
      return run_plot(ledger_file, output, !no_raster, resolution, workers);
    }
  } catch (const ps::SynthError& e) {
    std::cerr << "error [" << ps::to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFail;
  }
  return kExitUsage;
}
