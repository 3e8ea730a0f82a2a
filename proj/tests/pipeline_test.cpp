#include "passynth/pipeline.hpp"

#include <filesystem>

#include <gtest/gtest.h>

#include "passynth/ledger.hpp"
#include "passynth/svg.hpp"
#include "test_plants.hpp"

namespace passynth {
namespace {

namespace fs = std::filesystem;

VectorXd v2(double a, double b) { return Eigen::Vector2d(a, b); }

PipelineOptions two_state_options() {
  PipelineOptions o;
  o.edge = 0.4;
  o.search_box = std::make_pair(v2(-4, -2), v2(0, 2));
  return o;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("passynth_" + name);
  fs::remove_all(dir);
  return dir;
}

TEST(Pipeline, TwoStateExample) {
  const auto plant = test::two_state_plant();
  const auto r = run_pipeline(plant, two_state_options());
  ASSERT_TRUE(r.ok()) << r.failed_stage << ": " << r.error->what();
  EXPECT_FALSE(r.short_circuit);
  ASSERT_TRUE(r.K_hat.has_value());
  EXPECT_TRUE(test::in_two_state_region((*r.K_hat)(0, 0), (*r.K_hat)(0, 1)));
  EXPECT_GE(r.f_hat, r.f_star);
  EXPECT_NEAR(r.f_hat, evaluate_cost(plant, *r.K_hat).f_K, 1e-12);
  ASSERT_TRUE(r.certificate.has_value());
  EXPECT_EQ(r.trajectories.front().termination, FlowTermination::kConverged);
  for (const auto& [stage, ms] : r.timings_ms) EXPECT_GE(ms, 0.0) << stage;
}

TEST(Pipeline, ShortCircuitOnPassiveOptimum) {
  const auto plant = test::passive_plant();
  PipelineOptions o;
  const auto r = run_pipeline(plant, o);
  ASSERT_TRUE(r.ok());
  EXPECT_TRUE(r.short_circuit);
  EXPECT_TRUE(r.K_hat->isApprox(r.precheck->care.K));
  EXPECT_EQ(r.f_hat, r.f_star);
  EXPECT_FALSE(r.region.has_value());
}

TEST(Pipeline, AbortsAtExploreWithDiagnostics) {
  auto o = two_state_options();
  o.seed_gain = MatrixXd(1, 2);
  *o.seed_gain << -0.05, 0.4;
  const auto r = run_pipeline(test::two_state_plant(), o);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.failed_stage, "explore");
  EXPECT_EQ(r.error->code(), ErrorCode::kEmptyRegion);
  EXPECT_TRUE(r.precheck.has_value());
  EXPECT_NE(std::string(r.error->what()).find("per-vertex"), std::string::npos);
}

TEST(Pipeline, SeedChoiceIsInsideRegion) {
  const auto plant = test::two_state_plant();
  const auto mode = PassivityMode::nonstrict();
  const auto care = solve_care(plant.A, plant.B_u, plant.Q, plant.R);
  MatrixXd K_f(1, 2);
  K_f << -0.7, 1.8;
  const MatrixXd seed = choose_seed(plant, mode, K_f, care.K, 0.4, {});
  EXPECT_TRUE(verify_cube(plant, vec(seed), 0.4, mode).verified());
  // The seed moved from K_f toward K*.
  EXPECT_LT((seed - care.K).norm(), (K_f - care.K).norm());
}

TEST(Ledger, ArtifactsRoundTripAndHashIsReproducible) {
  const auto plant = test::two_state_plant();
  io::PlantSpec spec{plant, PassivityMode::nonstrict(), io::json::object()};
  auto o = two_state_options();
  o.search.seed = 5;
  o.workers = 1;
  const auto r1 = run_pipeline(plant, o);
  o.workers = 3;
  const auto r2 = run_pipeline(plant, o);
  const auto d1 = scratch_dir("ledger1");
  const auto d2 = scratch_dir("ledger2");
  const auto l1 = io::write_run(d1.string(), spec, o, 5, r1);
  const auto l2 = io::write_run(d2.string(), spec, o, 5, r2);
  EXPECT_EQ(l1["result_hash"], l2["result_hash"]);

  const std::string ledger_path = (d1 / "ledger.json").string();
  const auto ledger = io::read_ledger(ledger_path);
  EXPECT_EQ(ledger["result_hash"], l1["result_hash"]);
  const auto& arts = ledger["artifacts"];
  const auto plant_back = io::read_plant(io::artifact_path(ledger_path, arts["plant"]));
  EXPECT_EQ(plant_back.plant.A, plant.A);
  const auto atlas_path = io::artifact_path(ledger_path, arts["atlas"]);
  auto atlas = io::atlas_from_csv(io::read_text(atlas_path), atlas_path);
  EXPECT_EQ(atlas.cubes.size(), r1.region->cubes.size());
  EXPECT_NO_THROW(io::revalidate_region(plant, spec.mode, atlas));
  EXPECT_EQ(io::atlas_to_csv(atlas, 2), io::read_text(atlas_path));
  const auto poly_path = io::artifact_path(ledger_path, arts["polytope"]);
  EXPECT_EQ(io::polytope_to_csv(io::polytope_from_csv(io::read_text(poly_path), poly_path)),
            io::read_text(poly_path));
  for (const auto& t : arts["trajectories"]) {
    const auto path = io::artifact_path(ledger_path, t.get<std::string>());
    const auto traj = io::trajectory_from_csv(io::read_text(path), path);
    EXPECT_EQ(io::trajectory_to_csv(traj), io::read_text(path));
  }
  EXPECT_DOUBLE_EQ(ledger["f_K_hat"].get<double>(), r1.f_hat);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Svg, TwoStateFigure) {
  const auto plant = test::two_state_plant();
  const auto r = run_pipeline(plant, two_state_options());
  ASSERT_TRUE(r.ok());
  svg::PlotData data;
  data.plant = plant;
  data.window_lo = v2(-3, -2);
  data.window_hi = v2(1, 2);
  data.region = r.region;
  data.polytope = r.polytope;
  data.trajectories = r.trajectories;
  data.K_star = r.precheck->care.K;
  data.f_star = r.f_star;
  svg::PlotOptions opts;
  opts.resolution = 21;
  const std::string text = svg::render(data, opts);
  for (const char* id : {"passivity-raster", "verified-cubes", "stability-boundary",
                         "inner-polytope", "cost-contours", "trajectory-0", "optimal-gain"}) {
    EXPECT_NE(text.find(id), std::string::npos) << id;
  }
  EXPECT_EQ(text.rfind("</svg>\n"), text.size() - 7);

  opts.passivity_raster = false;
  data.region.reset();
  const std::string bare = svg::render(data, opts);
  EXPECT_EQ(bare.find("passivity-raster"), std::string::npos);
  EXPECT_NE(bare.find("cost-contours"), std::string::npos);
  EXPECT_NE(bare.find("trajectory-0"), std::string::npos);
}

TEST(Svg, DimensionUnsupported) {
  std::mt19937_64 rng(1);
  svg::PlotData data;
  data.plant = test::random_plant(3, 1, rng);
  data.window_lo = v2(-1, -1);
  data.window_hi = v2(1, 1);
  try {
    svg::render(data);
    FAIL();
  } catch (const SynthError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionUnsupported);
  }
}

TEST(Svg, ContourOfLinearField) {
  svg::Grid g;
  g.res = 3;
  g.lo = v2(0, 0);
  g.hi = v2(2, 2);
  g.values = {0, 1, 2, 0, 1, 2, 0, 1, 2};  // value = x
  const auto segs = svg::contour_segments(g, 0.5);
  ASSERT_EQ(segs.size(), 2u);
  for (const auto& s : segs) {
    EXPECT_NEAR(s[0], 0.5, 1e-15);
    EXPECT_NEAR(s[2], 0.5, 1e-15);
  }
}

TEST(Svg, PolytopeOutlineClipsWindow) {
  const auto box = GainPolytope::box(v2(-0.5, -0.5), v2(0.5, 3.0));
  const auto pts = svg::polytope_outline(box, v2(-1, -1), v2(1, 1));
  ASSERT_EQ(pts.size(), 4u);
  for (const auto& p : pts) {
    EXPECT_LE(std::abs(p(0)), 0.5 + 1e-12);
    EXPECT_GE(p(1), -0.5 - 1e-12);
    EXPECT_LE(p(1), 1.0 + 1e-12);
  }
}

}  // namespace
}  // namespace passynth
