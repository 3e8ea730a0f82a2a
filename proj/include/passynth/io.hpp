#pragma once

// File formats: plant and ledger files are JSON (nested arrays for
// matrices); atlases, polytopes and trajectories are comma-separated
// columnar text with '#' metadata lines. Doubles are written with 17
// significant digits so every value round-trips bit for bit.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "passynth/errors.hpp"
#include "passynth/lqr_flow.hpp"
#include "passynth/passivity.hpp"
#include "passynth/plant.hpp"
#include "passynth/polytope.hpp"
#include "passynth/region.hpp"

namespace passynth::io {

using nlohmann::json;

struct PlantSpec {
  LtiPlant plant;
  PassivityMode mode;
  json labels = json::object();
};

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s, const std::string& where) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SynthError(ErrorCode::kParse, where + ": not a number: '" + s + "'");
  }
}

inline json matrix_to_json(const MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline MatrixXd matrix_from_json(const json& value, const std::string& field) {
  if (!value.is_array() || value.empty()) {
    throw SynthError(ErrorCode::kParse, "field '" + field + "': expected a nonempty array of rows");
  }
  const std::size_t rows = value.size();
  std::size_t cols = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const json& row = value[i];
    if (!row.is_array()) {
      throw SynthError(ErrorCode::kParse,
                       "field '" + field + "' row " + std::to_string(i) + ": expected an array");
    }
    if (i == 0) cols = row.size();
    if (row.size() != cols || cols == 0) {
      throw SynthError(ErrorCode::kParse, "field '" + field + "' row " + std::to_string(i) +
                                              ": expected " + std::to_string(cols) +
                                              " entries, got " + std::to_string(row.size()));
    }
  }
  MatrixXd M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const json& v = value[i][j];
      if (!v.is_number()) {
        throw SynthError(ErrorCode::kParse, "field '" + field + "' row " + std::to_string(i) +
                                                " column " + std::to_string(j) +
                                                ": expected a number");
      }
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v.get<double>();
    }
  }
  return M;
}

inline PassivityKind parse_mode(const std::string& s) {
  if (s == "strict") return PassivityKind::kStrict;
  if (s == "nonstrict") return PassivityKind::kNonstrict;
  throw SynthError(ErrorCode::kParse, "mode must be 'strict' or 'nonstrict', got '" + s + "'");
}

inline json plant_to_json(const PlantSpec& spec) {
  json j;
  j["A"] = matrix_to_json(spec.plant.A);
  j["B_u"] = matrix_to_json(spec.plant.B_u);
  j["B_d"] = matrix_to_json(spec.plant.B_d);
  j["C"] = matrix_to_json(spec.plant.C);
  j["D"] = matrix_to_json(spec.plant.D);
  j["Q"] = matrix_to_json(spec.plant.Q);
  j["R"] = matrix_to_json(spec.plant.R);
  j["mode"] = to_string(spec.mode.kind);
  if (!spec.labels.empty()) j["labels"] = spec.labels;
  return j;
}

inline PlantSpec plant_from_json(const json& j) {
  if (!j.is_object()) throw SynthError(ErrorCode::kParse, "plant file must hold a JSON object");
  auto field = [&](const char* name) -> const json& {
    if (!j.contains(name)) {
      throw SynthError(ErrorCode::kParse, std::string("missing field '") + name + "'");
    }
    return j.at(name);
  };
  PlantSpec spec;
  spec.plant.A = matrix_from_json(field("A"), "A");
  spec.plant.B_u = matrix_from_json(field("B_u"), "B_u");
  spec.plant.B_d = matrix_from_json(field("B_d"), "B_d");
  spec.plant.C = matrix_from_json(field("C"), "C");
  spec.plant.D = j.contains("D") ? matrix_from_json(j.at("D"), "D")
                                 : MatrixXd::Zero(spec.plant.B_d.cols(), spec.plant.B_d.cols());
  spec.plant.Q = matrix_from_json(field("Q"), "Q");
  spec.plant.R = matrix_from_json(field("R"), "R");
  if (j.contains("mode")) {
    if (!j.at("mode").is_string()) throw SynthError(ErrorCode::kParse, "field 'mode': expected a string");
    spec.mode.kind = parse_mode(j.at("mode").get<std::string>());
  }
  if (j.contains("labels")) spec.labels = j.at("labels");
  try {
    spec.plant.validate();
  } catch (const SynthError& e) {
    throw SynthError(ErrorCode::kParse, e.what());
  }
  return spec;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SynthError(ErrorCode::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SynthError(ErrorCode::kIo, "cannot write '" + path + "'");
  out << text;
  if (!out) throw SynthError(ErrorCode::kIo, "write failed for '" + path + "'");
}

inline json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SynthError(ErrorCode::kParse, origin + ": " + e.what());
  }
}

inline PlantSpec read_plant(const std::string& path) {
  return plant_from_json(parse_json_text(read_text(path), path));
}

inline void write_plant(const std::string& path, const PlantSpec& spec) {
  write_text(path, plant_to_json(spec).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// CSV helpers

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

struct CsvTable {
  std::map<std::string, std::string> meta;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> row_lines;
};

inline CsvTable parse_csv(const std::string& text, const std::string& origin) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        std::string key = line.substr(1, eq - 1);
        key.erase(0, key.find_first_not_of(' '));
        table.meta[key] = line.substr(eq + 1);
      }
      continue;
    }
    auto cells = split(line);
    if (table.header.empty()) {
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw SynthError(ErrorCode::kParse, origin + " line " + std::to_string(line_no) + ": expected " +
                                              std::to_string(table.header.size()) + " fields, got " +
                                              std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
    table.row_lines.push_back(line_no);
  }
  if (table.header.empty()) throw SynthError(ErrorCode::kParse, origin + ": missing header line");
  return table;
}

inline std::string join_vector(const VectorXd& v, char sep = ',') {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += format_double(v(i));
  }
  return out;
}

inline VectorXd parse_vector(const std::string& s, const std::string& where, char sep = ',') {
  const auto parts = split(s, sep);
  VectorXd v(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) v(static_cast<Eigen::Index>(i)) = parse_double(parts[i], where);
  return v;
}

// ---------------------------------------------------------------------------
// Atlas: one record per cube.

inline std::string atlas_to_csv(const VerifiedRegion& region, Eigen::Index n_states) {
  const Eigen::Index d = region.grid_anchor.size();
  std::ostringstream os;
  os << "# passynth atlas v1\n";
  os << "# edge=" << format_double(region.edge) << "\n";
  os << "# anchor=" << join_vector(region.grid_anchor, ';') << "\n";
  os << "# gain_shape=" << region.gain_rows << "x" << region.gain_cols << "\n";
  os << "status";
  for (Eigen::Index i = 0; i < d; ++i) os << ",coord" << i;
  for (Eigen::Index i = 0; i < d; ++i) os << ",center" << i;
  os << ",edge,lambda_max";
  for (Eigen::Index i = 0; i < n_states; ++i)
    for (Eigen::Index j = 0; j < n_states; ++j) os << ",P" << i << "_" << j;
  os << "\n";
  auto emit = [&](const char* status, const GridCoord& coord, const VectorXd& center, double lambda,
                  const MatrixXd* P) {
    os << status;
    for (long c : coord) os << "," << c;
    for (Eigen::Index i = 0; i < d; ++i) os << "," << format_double(center(i));
    os << "," << format_double(region.edge) << "," << format_double(lambda);
    for (Eigen::Index i = 0; i < n_states; ++i)
      for (Eigen::Index j = 0; j < n_states; ++j)
        os << "," << (P ? format_double((*P)(i, j)) : std::string("nan"));
    os << "\n";
  };
  for (const auto& cube : region.cubes) {
    emit("verified", cube.coord, cube.center, cube.best_lambda_max, &cube.certificate->P);
  }
  for (const auto& rej : region.rejected) {
    emit("rejected", rej.coord, rej.center, rej.best_lambda_max, nullptr);
  }
  return os.str();
}

/// Parses an atlas. Verified cubes carry a certificate holding P and the
/// stored margin; callers revalidate against a plant with
/// revalidate_region().
inline VerifiedRegion atlas_from_csv(const std::string& text, const std::string& origin) {
  const CsvTable t = parse_csv(text, origin);
  VerifiedRegion region;
  if (!t.meta.count("edge") || !t.meta.count("anchor") || !t.meta.count("gain_shape")) {
    throw SynthError(ErrorCode::kParse, origin + ": missing edge/anchor/gain_shape metadata");
  }
  region.edge = parse_double(t.meta.at("edge"), origin + " edge");
  region.grid_anchor = parse_vector(t.meta.at("anchor"), origin + " anchor", ';');
  const auto shape = split(t.meta.at("gain_shape"), 'x');
  if (shape.size() != 2) throw SynthError(ErrorCode::kParse, origin + ": bad gain_shape");
  region.gain_rows = std::stol(shape[0]);
  region.gain_cols = std::stol(shape[1]);
  const auto d = static_cast<std::size_t>(region.grid_anchor.size());
  const std::size_t fixed = 1 + 2 * d + 2;
  if (t.header.size() < fixed) throw SynthError(ErrorCode::kParse, origin + ": header too short");
  const std::size_t pcount = t.header.size() - fixed;
  const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(pcount))));
  if (static_cast<std::size_t>(n * n) != pcount) {
    throw SynthError(ErrorCode::kParse, origin + ": P columns do not form a square matrix");
  }
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = origin + " line " + std::to_string(t.row_lines[r]);
    GridCoord coord(d);
    VectorXd center(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
      coord[i] = std::lround(parse_double(row[1 + i], where));
      center(static_cast<Eigen::Index>(i)) = parse_double(row[1 + d + i], where);
    }
    const double lambda = parse_double(row[2 + 2 * d], where);
    if (row[0] == "verified") {
      GainCube cube;
      cube.coord = coord;
      cube.center = center;
      cube.edge = region.edge;
      cube.best_lambda_max = lambda;
      PassivityCertificate cert;
      cert.P.resize(n, n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
          cert.P(i, j) = parse_double(row[fixed + static_cast<std::size_t>(i * n + j)], where);
      cert.lambda_max_constraint = lambda;
      cube.certificate = std::move(cert);
      region.cubes.push_back(std::move(cube));
    } else if (row[0] == "rejected") {
      region.rejected.push_back({coord, center, lambda});
    } else {
      throw SynthError(ErrorCode::kParse, where + ": unknown status '" + row[0] + "'");
    }
  }
  return region;
}

/// Re-checks every stored certificate against the plant at all cube
/// vertices. Throws Parse when one fails.
inline void revalidate_region(const LtiPlant& plant, const PassivityMode& mode,
                              VerifiedRegion& region) {
  for (auto& cube : region.cubes) {
    auto cert = validate_certificate(
        plant, cube_vertices(cube.center, cube.edge, plant.m(), plant.n()), cube.certificate->P, mode);
    if (!cert) {
      throw SynthError(ErrorCode::kParse, "atlas certificate does not validate for cube centered at [" +
                                              join_vector(cube.center) + "]");
    }
    cube.certificate = std::move(cert);
  }
}

// ---------------------------------------------------------------------------
// Polytope: rows of G with the matching entry of h, then the center.

inline std::string polytope_to_csv(const GainPolytope& poly) {
  const Eigen::Index d = poly.dimension();
  std::ostringstream os;
  os << "# passynth polytope v1\n";
  os << "kind";
  for (Eigen::Index i = 0; i < d; ++i) os << ",g" << i;
  os << ",h\n";
  for (Eigen::Index r = 0; r < poly.rows(); ++r) {
    os << "row," << join_vector(poly.G.row(r).transpose()) << "," << format_double(poly.h(r)) << "\n";
  }
  os << "center," << join_vector(poly.chebyshev_center) << ",\n";
  return os.str();
}

inline GainPolytope polytope_from_csv(const std::string& text, const std::string& origin) {
  const CsvTable t = parse_csv(text, origin);
  if (t.header.size() < 3) throw SynthError(ErrorCode::kParse, origin + ": header too short");
  const auto d = static_cast<Eigen::Index>(t.header.size() - 2);
  std::vector<VectorXd> rows;
  std::vector<double> h;
  std::optional<VectorXd> center;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = origin + " line " + std::to_string(t.row_lines[r]);
    VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = parse_double(row[static_cast<std::size_t>(1 + i)], where);
    if (row[0] == "row") {
      rows.push_back(v);
      h.push_back(parse_double(row.back(), where));
    } else if (row[0] == "center") {
      center = v;
    } else {
      throw SynthError(ErrorCode::kParse, where + ": unknown kind '" + row[0] + "'");
    }
  }
  if (!center) throw SynthError(ErrorCode::kParse, origin + ": missing center row");
  GainPolytope poly;
  if (rows.empty()) {
    poly = GainPolytope::unconstrained(d);
  } else {
    poly.G.resize(static_cast<Eigen::Index>(rows.size()), d);
    poly.h.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      poly.G.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
      poly.h(static_cast<Eigen::Index>(r)) = h[r];
    }
  }
  poly.chebyshev_center = *center;
  return poly;
}

// ---------------------------------------------------------------------------
// Trajectory: t, vec K, f, ‖M∇f‖, min g per sample.

inline std::string trajectory_to_csv(const FlowTrajectory& traj) {
  const Eigen::Index d = traj.samples.empty() ? 0 : traj.samples.front().k.size();
  std::ostringstream os;
  os << "# passynth trajectory v1\n";
  os << "# termination=" << to_string(traj.termination) << "\n";
  os << "# tol_grad=" << format_double(traj.tol_grad) << "\n";
  os << "# gain_shape=" << traj.terminal_gain.rows() << "x" << traj.terminal_gain.cols() << "\n";
  os << "t";
  for (Eigen::Index i = 0; i < d; ++i) os << ",k" << i;
  os << ",f,proj_grad_norm,min_g\n";
  for (const auto& s : traj.samples) {
    os << format_double(s.t) << "," << join_vector(s.k) << "," << format_double(s.f) << ","
       << format_double(s.proj_grad_norm) << "," << format_double(s.min_g) << "\n";
  }
  return os.str();
}

inline FlowTrajectory trajectory_from_csv(const std::string& text, const std::string& origin) {
  const CsvTable t = parse_csv(text, origin);
  if (t.header.size() < 5) throw SynthError(ErrorCode::kParse, origin + ": header too short");
  const auto d = static_cast<Eigen::Index>(t.header.size() - 4);
  FlowTrajectory traj;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = origin + " line " + std::to_string(t.row_lines[r]);
    FlowSample s;
    s.t = parse_double(row[0], where);
    s.k.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) s.k(i) = parse_double(row[static_cast<std::size_t>(1 + i)], where);
    s.f = parse_double(row[static_cast<std::size_t>(1 + d)], where);
    s.proj_grad_norm = parse_double(row[static_cast<std::size_t>(2 + d)], where);
    s.min_g = parse_double(row[static_cast<std::size_t>(3 + d)], where);
    traj.samples.push_back(std::move(s));
  }
  const std::string term = t.meta.count("termination") ? t.meta.at("termination") : "MaxTime";
  traj.termination = term == "Converged"      ? FlowTermination::kConverged
                     : term == "StepCollapse" ? FlowTermination::kStepCollapse
                                              : FlowTermination::kMaxTime;
  if (t.meta.count("tol_grad")) traj.tol_grad = parse_double(t.meta.at("tol_grad"), origin);
  Eigen::Index rows = 1, cols = d;
  if (t.meta.count("gain_shape")) {
    const auto shape = split(t.meta.at("gain_shape"), 'x');
    if (shape.size() == 2) {
      rows = std::stol(shape[0]);
      cols = std::stol(shape[1]);
    }
  }
  if (!traj.samples.empty()) traj.terminal_gain = unvec(traj.samples.back().k, rows, cols);
  return traj;
}

// ---------------------------------------------------------------------------

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline json certificate_to_json(const PassivityCertificate& cert) {
  json j;
  j["P"] = matrix_to_json(cert.P);
  j["mode"] = to_string(cert.mode.kind);
  j["lambda_max_constraint"] = cert.lambda_max_constraint;
  j["constraint_scale"] = cert.constraint_scale;
  j["lambda_min_P"] = cert.lambda_min_P;
  j["equality_residual"] = cert.equality_residual;
  j["warnings"] = cert.warnings;
  return j;
}

}  // namespace passynth::io
