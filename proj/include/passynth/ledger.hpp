#pragma once

// Run ledger: configuration, artifact paths, results and a content hash
// that ignores wall-clock timings.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "passynth/io.hpp"
#include "passynth/pipeline.hpp"

namespace passynth::io {

inline json vector_to_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline VectorXd vector_from_json(const json& a, const std::string& field) {
  if (!a.is_array()) throw SynthError(ErrorCode::kParse, "field '" + field + "': expected an array");
  VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) throw SynthError(ErrorCode::kParse, "field '" + field + "': expected numbers");
    v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  }
  return v;
}

inline json options_to_json(const PipelineOptions& o) {
  json j;
  j["mode"] = to_string(o.mode.kind);
  j["edge"] = o.edge;
  j["max_cubes"] = o.max_cubes;
  if (o.search_box) {
    j["search_box"] = {{"lo", vector_to_json(o.search_box->first)},
                       {"hi", vector_to_json(o.search_box->second)}};
  }
  if (o.seed_gain) j["seed_gain"] = matrix_to_json(*o.seed_gain);
  json starts = json::array();
  for (const auto& s : o.extra_starts) starts.push_back(matrix_to_json(s));
  j["extra_starts"] = starts;
  j["flow"] = {{"alpha", o.flow.alpha},        {"h0", o.flow.h0},
               {"max_time", o.flow.max_time},  {"min_step", o.flow.min_step}};
  if (o.flow.tol_grad) j["flow"]["tol"] = *o.flow.tol_grad;
  j["search"] = {{"restarts", o.search.restarts}, {"iterations", o.search.iterations}};
  return j;
}

/// Window for plots: bounding box of every explored cube, K* and the flow
/// samples, padded by 10% per side.
inline std::pair<VectorXd, VectorXd> plot_window(const PipelineResult& r) {
  VectorXd lo, hi;
  auto add = [&](const VectorXd& p, double pad) {
    if (lo.size() == 0) {
      lo = p.array() - pad;
      hi = p.array() + pad;
    } else {
      lo = lo.cwiseMin(VectorXd(p.array() - pad));
      hi = hi.cwiseMax(VectorXd(p.array() + pad));
    }
  };
  if (r.region) {
    const double e = 0.5 * r.region->edge;
    for (const auto& c : r.region->cubes) add(c.center, e);
    for (const auto& c : r.region->rejected) add(c.center, e);
  }
  if (r.precheck) add(vec(r.precheck->care.K), 0.0);
  if (r.K_hat) add(vec(*r.K_hat), 0.0);
  for (const auto& t : r.trajectories)
    for (const auto& s : t.samples) add(s.k, 0.0);
  if (lo.size() == 0) return {lo, hi};
  const VectorXd span = (hi - lo).cwiseMax(1e-3);
  return {lo - 0.1 * span, hi + 0.1 * span};
}

inline std::string ledger_hash(json ledger) {
  ledger.erase("timings_ms");
  ledger.erase("result_hash");
  return fnv1a_hex(ledger.dump());
}

/// Writes plant, atlas, polytope and trajectory artifacts plus ledger.json
/// into `dir` and returns the ledger.
inline json write_run(const std::string& dir, const PlantSpec& spec, const PipelineOptions& options,
                      std::uint64_t seed, const PipelineResult& r) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw SynthError(ErrorCode::kIo, "cannot create directory '" + dir + "': " + ec.message());
  const fs::path root(dir);

  json ledger;
  ledger["format"] = "passynth-ledger-1";
  const json config = options_to_json(options);
  const json plant = plant_to_json(spec);
  ledger["config"] = config;
  ledger["config_hash"] = fnv1a_hex(plant.dump() + config.dump() + std::to_string(seed));
  ledger["seed"] = seed;
  ledger["status"] = r.ok() ? "ok" : "failed";
  if (!r.ok()) {
    ledger["failed_stage"] = r.failed_stage;
    ledger["error"] = {{"code", to_string(r.error->code())}, {"message", r.error->what()}};
  }
  ledger["short_circuit"] = r.short_circuit;

  json artifacts;
  write_plant((root / "plant.json").string(), spec);
  artifacts["plant"] = "plant.json";
  if (r.region) {
    write_text((root / "atlas.csv").string(), atlas_to_csv(*r.region, spec.plant.n()));
    artifacts["atlas"] = "atlas.csv";
  }
  if (r.polytope) {
    write_text((root / "polytope.csv").string(), polytope_to_csv(*r.polytope));
    artifacts["polytope"] = "polytope.csv";
  }
  json trajs = json::array();
  for (std::size_t i = 0; i < r.trajectories.size(); ++i) {
    const std::string name = "trajectory_" + std::to_string(i) + ".csv";
    write_text((root / name).string(), trajectory_to_csv(r.trajectories[i]));
    trajs.push_back(name);
  }
  artifacts["trajectories"] = trajs;
  ledger["artifacts"] = artifacts;

  if (r.precheck) {
    ledger["K_star"] = matrix_to_json(r.precheck->care.K);
    ledger["f_K_star"] = r.f_star;
  }
  if (r.feasible) ledger["feasible_gain"] = matrix_to_json(r.feasible->K);
  if (r.seed_gain) ledger["seed_gain"] = matrix_to_json(*r.seed_gain);
  if (r.region) {
    ledger["verified_cubes"] = r.region->cubes.size();
    ledger["rejected_cubes"] = r.region->rejected.size();
  }
  if (r.K_hat) {
    ledger["K_hat"] = matrix_to_json(*r.K_hat);
    ledger["f_K_hat"] = r.f_hat;
    ledger["upper_bound_gap"] = r.f_hat - r.f_star;
  }
  if (!r.trajectories.empty()) {
    json terms = json::array();
    for (const auto& t : r.trajectories) terms.push_back(to_string(t.termination));
    ledger["flow_termination"] = terms;
  }
  if (r.certificate) ledger["certificate"] = certificate_to_json(*r.certificate);
  const auto window = plot_window(r);
  if (window.first.size()) {
    ledger["window"] = {{"lo", vector_to_json(window.first)}, {"hi", vector_to_json(window.second)}};
  }

  json timings = json::object();
  for (const auto& [stage, ms] : r.timings_ms) timings[stage] = ms;
  ledger["timings_ms"] = timings;
  ledger["result_hash"] = ledger_hash(ledger);
  write_text((root / "ledger.json").string(), ledger.dump(2) + "\n");
  return ledger;
}

inline json read_ledger(const std::string& path) {
  return parse_json_text(read_text(path), path);
}

/// Resolves an artifact entry relative to the ledger's directory.
inline std::string artifact_path(const std::string& ledger_path, const std::string& entry) {
  const std::filesystem::path p(entry);
  if (p.is_absolute()) return entry;
  return (std::filesystem::path(ledger_path).parent_path() / p).string();
}

}  // namespace passynth::io
