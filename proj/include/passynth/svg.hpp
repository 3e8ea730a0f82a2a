#pragma once

// SVG 1.1 figures for two-parameter gains: stability boundary, passivity
// raster, verified cubes, inner polytope, cost contours and flow paths.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "passynth/errors.hpp"
#include "passynth/linalg.hpp"
#include "passynth/lqr_flow.hpp"
#include "passynth/parallel.hpp"
#include "passynth/passivity.hpp"
#include "passynth/plant.hpp"
#include "passynth/polytope.hpp"
#include "passynth/region.hpp"

namespace passynth::svg {

struct PlotData {
  LtiPlant plant;
  PassivityMode mode;
  VectorXd window_lo;
  VectorXd window_hi;
  std::optional<VerifiedRegion> region;
  std::optional<GainPolytope> polytope;
  std::vector<FlowTrajectory> trajectories;
  std::optional<MatrixXd> K_star;
  double f_star = std::numeric_limits<double>::quiet_NaN();
};

struct PlotOptions {
  int resolution = 201;
  bool passivity_raster = true;
  SearchOptions search;
  unsigned workers = 1;
};

/// Scalar field sampled on a res×res grid, row-major with j along K₂.
struct Grid {
  int res = 0;
  VectorXd lo, hi;
  std::vector<double> values;

  double x(int i) const { return lo(0) + (hi(0) - lo(0)) * i / (res - 1); }
  double y(int j) const { return lo(1) + (hi(1) - lo(1)) * j / (res - 1); }
  double& at(int i, int j) { return values[static_cast<std::size_t>(j * res + i)]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(j * res + i)]; }
};

inline void require_two_parameters(const LtiPlant& plant) {
  if (plant.m() * plant.n() != 2) {
    throw SynthError(ErrorCode::kDimensionUnsupported,
                     "plots need a two-parameter gain, got m*n = " +
                         std::to_string(plant.m() * plant.n()));
  }
}

template <typename F>
Grid sample_grid(const VectorXd& lo, const VectorXd& hi, int res, unsigned workers, F&& fn) {
  Grid g;
  g.res = res;
  g.lo = lo;
  g.hi = hi;
  g.values.assign(static_cast<std::size_t>(res * res), 0.0);
  parallel_for(static_cast<std::size_t>(res * res), workers, [&](std::size_t idx) {
    const int i = static_cast<int>(idx) % res;
    const int j = static_cast<int>(idx) / res;
    Eigen::Vector2d k(g.x(i), g.y(j));
    g.values[idx] = fn(VectorXd(k));
  });
  return g;
}

using Segment = std::array<double, 4>;

/// Marching squares on the level set {value = level}. Cells touching
/// non-finite samples are skipped.
inline std::vector<Segment> contour_segments(const Grid& g, double level) {
  std::vector<Segment> out;
  for (int j = 0; j + 1 < g.res; ++j) {
    for (int i = 0; i + 1 < g.res; ++i) {
      const double v[4] = {g.at(i, j), g.at(i + 1, j), g.at(i + 1, j + 1), g.at(i, j + 1)};
      const double px[4] = {g.x(i), g.x(i + 1), g.x(i + 1), g.x(i)};
      const double py[4] = {g.y(j), g.y(j), g.y(j + 1), g.y(j + 1)};
      bool finite = true;
      for (double s : v) finite = finite && std::isfinite(s);
      if (!finite) continue;
      std::vector<std::array<double, 2>> hits;
      for (int e = 0; e < 4; ++e) {
        const int a = e, b = (e + 1) % 4;
        const bool sa = v[a] >= level, sb = v[b] >= level;
        if (sa == sb) continue;
        const double t = (level - v[a]) / (v[b] - v[a]);
        hits.push_back({px[a] + t * (px[b] - px[a]), py[a] + t * (py[b] - py[a])});
      }
      if (hits.size() == 2) {
        out.push_back({hits[0][0], hits[0][1], hits[1][0], hits[1][1]});
      } else if (hits.size() == 4) {
        out.push_back({hits[0][0], hits[0][1], hits[1][0], hits[1][1]});
        out.push_back({hits[2][0], hits[2][1], hits[3][0], hits[3][1]});
      }
    }
  }
  return out;
}

/// Clips the window rectangle by every half-plane of the polytope.
inline std::vector<Eigen::Vector2d> polytope_outline(const GainPolytope& poly,
                                                     const VectorXd& lo, const VectorXd& hi) {
  std::vector<Eigen::Vector2d> pts{{lo(0), lo(1)}, {hi(0), lo(1)}, {hi(0), hi(1)}, {lo(0), hi(1)}};
  if (poly.whole_space) return pts;
  for (Eigen::Index r = 0; r < poly.rows(); ++r) {
    const Eigen::Vector2d gr = poly.G.row(r).transpose();
    const double hr = poly.h(r);
    std::vector<Eigen::Vector2d> next;
    for (std::size_t a = 0; a < pts.size(); ++a) {
      const auto& p = pts[a];
      const auto& q = pts[(a + 1) % pts.size()];
      const double vp = gr.dot(p) + hr, vq = gr.dot(q) + hr;
      if (vp >= 0) next.push_back(p);
      if ((vp >= 0) != (vq >= 0)) next.push_back(p + (vp / (vp - vq)) * (q - p));
    }
    pts = std::move(next);
    if (pts.empty()) break;
  }
  return pts;
}

class Canvas {
 public:
  Canvas(const VectorXd& lo, const VectorXd& hi) : lo_(lo), hi_(hi) {}

  double px(double x) const { return kMargin + kSize * (x - lo_(0)) / (hi_(0) - lo_(0)); }
  double py(double y) const { return kMargin + kSize * (hi_(1) - y) / (hi_(1) - lo_(1)); }

  static constexpr double kMargin = 60.0;
  static constexpr double kSize = 600.0;

  std::ostringstream body;

  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
  }

  std::string finish(const std::string& title) const {
    const double total = 2 * kMargin + kSize;
    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << num(total + 160)
       << "\" height=\"" << num(total) << "\" viewBox=\"0 0 " << num(total + 160) << " "
       << num(total) << "\">\n"
       << "<title>" << title << "</title>\n"
       << "<rect x=\"0\" y=\"0\" width=\"" << num(total + 160) << "\" height=\"" << num(total)
       << "\" fill=\"white\"/>\n"
       << "<defs><clipPath id=\"plot\"><rect x=\"" << num(kMargin) << "\" y=\"" << num(kMargin)
       << "\" width=\"" << num(kSize) << "\" height=\"" << num(kSize)
       << "\"/></clipPath></defs>\n"
       << body.str() << "</svg>\n";
    return os.str();
  }

 private:
  VectorXd lo_, hi_;
};

inline std::string render(const PlotData& data, const PlotOptions& options = {}) {
  require_two_parameters(data.plant);
  if (data.window_lo.size() != 2 || data.window_hi.size() != 2 ||
      !(data.window_hi.array() > data.window_lo.array()).all()) {
    throw SynthError(ErrorCode::kInvalidArgument, "plot window must be a nonempty 2-D box");
  }
  if (options.resolution < 2) {
    throw SynthError(ErrorCode::kInvalidArgument, "plot resolution must be at least 2");
  }
  const LtiPlant& plant = data.plant;
  const VectorXd& lo = data.window_lo;
  const VectorXd& hi = data.window_hi;
  const int res = options.resolution;
  const unsigned workers = std::max(1u, options.workers);
  auto gain = [&](const VectorXd& k) { return unvec(k, plant.m(), plant.n()); };

  Canvas c(lo, hi);
  auto& b = c.body;
  const double cell_w = Canvas::kSize / (res - 1);

  const Grid abscissa = sample_grid(lo, hi, res, workers, [&](const VectorXd& k) {
    return spectral_abscissa(plant.closed_loop(gain(k)));
  });

  b << "<g clip-path=\"url(#plot)\">\n";

  // Passivity raster: run-length merged cells along K₁. Gains with positive
  // abscissa cannot carry a storage certificate and are not sampled.
  if (options.passivity_raster) {
    const Grid passive = sample_grid(lo, hi, res, workers, [&](const VectorXd& k) {
      if (spectral_abscissa(plant.closed_loop(gain(k))) > 1e-6) return 0.0;
      return certify_gain(plant, gain(k), data.mode, options.search).feasible() ? 1.0 : 0.0;
    });
    b << "<g id=\"passivity-raster\" fill=\"#cfe3f7\" stroke=\"none\">\n";
    for (int j = 0; j < res; ++j) {
      int i = 0;
      while (i < res) {
        if (passive.at(i, j) < 0.5) {
          ++i;
          continue;
        }
        const int start = i;
        while (i < res && passive.at(i, j) >= 0.5) ++i;
        b << "<rect x=\"" << Canvas::num(c.px(passive.x(start)) - 0.5 * cell_w) << "\" y=\""
          << Canvas::num(c.py(passive.y(j)) - 0.5 * cell_w) << "\" width=\""
          << Canvas::num((i - start) * cell_w) << "\" height=\"" << Canvas::num(cell_w)
          << "\"/>\n";
      }
    }
    b << "</g>\n";
  }

  if (data.region) {
    b << "<g id=\"verified-cubes\" fill=\"#9ccc9c\" fill-opacity=\"0.6\" stroke=\"#3a7a3a\" "
         "stroke-width=\"0.5\">\n";
    for (const auto& cube : data.region->cubes) {
      const double e = 0.5 * cube.edge;
      b << "<rect x=\"" << Canvas::num(c.px(cube.center(0) - e)) << "\" y=\""
        << Canvas::num(c.py(cube.center(1) + e)) << "\" width=\""
        << Canvas::num(c.px(cube.center(0) + e) - c.px(cube.center(0) - e)) << "\" height=\""
        << Canvas::num(c.py(cube.center(1) - e) - c.py(cube.center(1) + e)) << "\"/>\n";
    }
    b << "</g>\n";
  }

  auto emit_segments = [&](const std::vector<Segment>& segs, const std::string& id,
                           const std::string& style) {
    if (segs.empty()) return;
    b << "<path id=\"" << id << "\" " << style << " d=\"";
    for (const auto& s : segs) {
      b << "M" << Canvas::num(c.px(s[0])) << " " << Canvas::num(c.py(s[1])) << "L"
        << Canvas::num(c.px(s[2])) << " " << Canvas::num(c.py(s[3])) << " ";
    }
    b << "\"/>\n";
  };

  // Cost contours of f_K − f_{K*}.
  const Grid cost = sample_grid(lo, hi, res, workers, [&](const VectorXd& k) {
    return lqr_cost(plant, gain(k));
  });
  double f_ref = data.f_star;
  if (!std::isfinite(f_ref)) {
    f_ref = std::numeric_limits<double>::infinity();
    for (double v : cost.values) f_ref = std::min(f_ref, v);
  }
  if (std::isfinite(f_ref)) {
    Grid excess = cost;
    for (double& v : excess.values) v -= f_ref;
    b << "<g id=\"cost-contours\">\n";
    const double scale = std::max(std::abs(f_ref), 1e-12);
    for (double rel : {0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0}) {
      const double level = rel * scale;
      emit_segments(contour_segments(excess, level), "cost-" + Canvas::num(rel),
                    "fill=\"none\" stroke=\"#999999\" stroke-width=\"0.7\"");
    }
    b << "</g>\n";
  }

  emit_segments(contour_segments(abscissa, 0.0), "stability-boundary",
                "fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"");

  if (data.polytope) {
    const auto outline = polytope_outline(*data.polytope, lo, hi);
    if (!outline.empty()) {
      b << "<polygon id=\"inner-polytope\" fill=\"none\" stroke=\"#c03030\" stroke-width=\"2\" "
           "points=\"";
      for (const auto& p : outline) b << Canvas::num(c.px(p(0))) << "," << Canvas::num(c.py(p(1))) << " ";
      b << "\"/>\n";
    }
  }

  for (std::size_t t = 0; t < data.trajectories.size(); ++t) {
    const auto& traj = data.trajectories[t];
    if (traj.samples.empty()) continue;
    b << "<polyline id=\"trajectory-" << t << "\" fill=\"none\" stroke=\"#1f4fa0\" "
         "stroke-width=\"1.5\" points=\"";
    for (const auto& s : traj.samples) b << Canvas::num(c.px(s.k(0))) << "," << Canvas::num(c.py(s.k(1))) << " ";
    b << "\"/>\n";
    const auto& last = traj.samples.back().k;
    b << "<circle cx=\"" << Canvas::num(c.px(last(0))) << "\" cy=\"" << Canvas::num(c.py(last(1)))
      << "\" r=\"3\" fill=\"#1f4fa0\"/>\n";
  }

  if (data.K_star) {
    const VectorXd ks = vec(*data.K_star);
    b << "<circle id=\"optimal-gain\" cx=\"" << Canvas::num(c.px(ks(0))) << "\" cy=\""
      << Canvas::num(c.py(ks(1))) << "\" r=\"4\" fill=\"none\" stroke=\"black\" "
      << "stroke-width=\"1.5\"/>\n";
  }
  b << "</g>\n";

  // Frame, ticks and labels.
  const double m = Canvas::kMargin, s = Canvas::kSize;
  b << "<rect x=\"" << Canvas::num(m) << "\" y=\"" << Canvas::num(m) << "\" width=\""
    << Canvas::num(s) << "\" height=\"" << Canvas::num(s)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  b << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  for (int t = 0; t <= 4; ++t) {
    const double fx = lo(0) + (hi(0) - lo(0)) * t / 4.0;
    const double fy = lo(1) + (hi(1) - lo(1)) * t / 4.0;
    b << "<text x=\"" << Canvas::num(c.px(fx)) << "\" y=\"" << Canvas::num(m + s + 18)
      << "\" text-anchor=\"middle\">" << Canvas::num(fx) << "</text>\n";
    b << "<text x=\"" << Canvas::num(m - 6) << "\" y=\"" << Canvas::num(c.py(fy) + 4)
      << "\" text-anchor=\"end\">" << Canvas::num(fy) << "</text>\n";
  }
  b << "<text x=\"" << Canvas::num(m + s / 2) << "\" y=\"" << Canvas::num(m + s + 40)
    << "\" text-anchor=\"middle\">K1</text>\n";
  b << "<text x=\"" << Canvas::num(m - 44) << "\" y=\"" << Canvas::num(m + s / 2)
    << "\" text-anchor=\"middle\">K2</text>\n";
  const double lx = m + s + 15;
  const std::pair<const char*, const char*> legend[] = {
      {"#cfe3f7", "passive (raster)"}, {"#9ccc9c", "verified cubes"}, {"#c03030", "inner polytope"},
      {"black", "stability boundary"}, {"#999999", "cost contours"},  {"#1f4fa0", "flow"}};
  for (std::size_t i = 0; i < std::size(legend); ++i) {
    const double ly = m + 20 + 22 * static_cast<double>(i);
    b << "<rect x=\"" << Canvas::num(lx) << "\" y=\"" << Canvas::num(ly - 10)
      << "\" width=\"12\" height=\"12\" fill=\"" << legend[i].first << "\"/>\n";
    b << "<text x=\"" << Canvas::num(lx + 18) << "\" y=\"" << Canvas::num(ly) << "\">"
      << legend[i].second << "</text>\n";
  }
  b << "</g>\n";
  return c.finish("gain-space map");
}

}  // namespace passynth::svg
