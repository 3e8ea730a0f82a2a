#include "passynth/region.hpp"

#include <queue>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "test_plants.hpp"

namespace passynth {
namespace {

VectorXd v2(double a, double b) { return Eigen::Vector2d(a, b); }

MatrixXd row(double a, double b) {
  MatrixXd K(1, 2);
  K << a, b;
  return K;
}

ExploreConfig default_config() {
  ExploreConfig c;
  c.seed_gain = row(-0.8, 0.4);
  c.edge = 0.4;
  c.search_box = std::make_pair(v2(-4, -2), v2(0, 2));
  return c;
}

TEST(VerifyCube, InteriorAndExterior) {
  const auto plant = test::two_state_plant();
  const auto mode = PassivityMode::nonstrict();
  const auto in = verify_cube(plant, v2(-0.8, 0.4), 0.4, mode);
  ASSERT_TRUE(in.verified());
  for (const auto& K : cube_vertices(v2(-0.8, 0.4), 0.4, 1, 2)) {
    EXPECT_TRUE(validate_certificate(plant, {K}, in.cube.certificate->P, mode).has_value());
  }
  const auto out = verify_cube(plant, v2(0.4, 0.4), 0.4, mode);
  EXPECT_FALSE(out.verified());
  EXPECT_GT(out.cube.best_lambda_max, 0.0);
}

TEST(VerifyCube, Preconditions) {
  const auto plant = test::two_state_plant();
  EXPECT_THROW(verify_cube(plant, v2(-0.8, 0.4), 0.0, PassivityMode::nonstrict()), SynthError);
  std::mt19937_64 rng(1);
  const LtiPlant big = test::random_plant(3, 3, rng);
  try {
    verify_cube(big, VectorXd::Zero(9), 0.1, PassivityMode::nonstrict());
    FAIL();
  } catch (const SynthError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooManyVertices);
  }
}

TEST(CubeVertices, Layout) {
  const auto verts = cube_vertices(v2(1.0, 2.0), 0.5, 1, 2);
  ASSERT_EQ(verts.size(), 4u);
  std::set<std::pair<double, double>> got;
  for (const auto& K : verts) got.insert({K(0, 0), K(0, 1)});
  const std::set<std::pair<double, double>> want{{0.75, 1.75}, {0.75, 2.25}, {1.25, 1.75}, {1.25, 2.25}};
  EXPECT_EQ(got, want);
}

TEST(Explore, TwoStateRegion) {
  const auto plant = test::two_state_plant();
  const auto mode = PassivityMode::nonstrict();
  const auto region = explore(plant, mode, default_config());
  ASSERT_FALSE(region.cubes.empty());

  std::set<GridCoord> coords;
  for (const auto& cube : region.cubes) {
    ASSERT_TRUE(cube.certificate.has_value());
    EXPECT_TRUE(coords.insert(cube.coord).second);
    // Every vertex lies in the closed-form region.
    for (const auto& K : cube_vertices(cube.center, cube.edge, 1, 2)) {
      EXPECT_TRUE(test::in_two_state_region(K(0, 0) - 1e-9, K(0, 1)) ||
                  test::two_state_boundary_distance(K(0, 0), K(0, 1)) < 1e-6)
          << K;
    }
  }

  // Face-adjacency graph is connected.
  std::set<GridCoord> reached{region.cubes.front().coord};
  std::queue<GridCoord> q;
  q.push(region.cubes.front().coord);
  while (!q.empty()) {
    const GridCoord c = q.front();
    q.pop();
    for (std::size_t a = 0; a < c.size(); ++a) {
      for (long s : {-1L, 1L}) {
        GridCoord nb = c;
        nb[a] += s;
        if (coords.count(nb) && reached.insert(nb).second) q.push(nb);
      }
    }
  }
  EXPECT_EQ(reached.size(), coords.size());

  // Cubes whose vertices sit well inside the closed-form region should all
  // have been found: check the seed column.
  EXPECT_TRUE(coords.count(GridCoord{0, 0}));
  EXPECT_TRUE(coords.count(GridCoord{1, 0}));
}

TEST(Explore, PerPointSoundness) {
  const auto plant = test::two_state_plant();
  const auto mode = PassivityMode::nonstrict();
  auto config = default_config();
  config.max_cubes = 6;
  const auto region = explore(plant, mode, config);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-0.5, 0.5);
  for (const auto& cube : region.cubes) {
    for (int i = 0; i < 4; ++i) {
      const MatrixXd K = row(cube.center(0) + U(rng) * cube.edge, cube.center(1) + U(rng) * cube.edge);
      EXPECT_TRUE(certify_gain(plant, K, mode).feasible()) << K;
    }
  }
}

TEST(Explore, BudgetOfOne) {
  const auto plant = test::two_state_plant();
  auto config = default_config();
  config.max_cubes = 1;
  const auto region = explore(plant, PassivityMode::nonstrict(), config);
  ASSERT_EQ(region.cubes.size(), 1u);
  EXPECT_EQ(region.cubes.front().coord, (GridCoord{0, 0}));
  EXPECT_TRUE(region.cubes.front().center.isApprox(v2(-0.8, 0.4)));
}

TEST(Explore, DeterministicAcrossWorkers) {
  const auto plant = test::two_state_plant();
  auto config = default_config();
  config.search.seed = 1234;
  config.max_cubes = 12;
  config.workers = 1;
  const auto a = explore(plant, PassivityMode::nonstrict(), config);
  config.workers = 4;
  const auto b = explore(plant, PassivityMode::nonstrict(), config);
  ASSERT_EQ(a.cubes.size(), b.cubes.size());
  for (std::size_t i = 0; i < a.cubes.size(); ++i) {
    EXPECT_EQ(a.cubes[i].coord, b.cubes[i].coord);
    EXPECT_EQ(a.cubes[i].certificate->P, b.cubes[i].certificate->P);
  }
  ASSERT_EQ(a.rejected.size(), b.rejected.size());
}

TEST(Explore, SeedNotPassivating) {
  const auto plant = test::two_state_plant();
  auto config = default_config();
  config.seed_gain = row(0.4, 0.4);
  config.search_box = std::make_pair(v2(-4, -2), v2(1, 2));
  try {
    explore(plant, PassivityMode::nonstrict(), config);
    FAIL();
  } catch (const SynthError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSeedNotPassivating);
  }
}

TEST(Explore, EmptyRegionReportsVertices) {
  const auto plant = test::two_state_plant();
  auto config = default_config();
  config.seed_gain = row(-0.05, 0.4);  // passive, but its cube crosses K₁ = 0
  try {
    explore(plant, PassivityMode::nonstrict(), config);
    FAIL();
  } catch (const SynthError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyRegion);
    EXPECT_NE(std::string(e.what()).find("per-vertex"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("fail"), std::string::npos);
  }
}

TEST(Explore, RefinementCoversCoarseInterior) {
  const auto plant = test::two_state_plant();
  const auto mode = PassivityMode::nonstrict();
  auto coarse_cfg = default_config();
  const auto coarse = explore(plant, mode, coarse_cfg);
  auto fine_cfg = default_config();
  fine_cfg.edge = 0.2;
  const auto fine = explore(plant, mode, fine_cfg);

  auto in_union = [](const VerifiedRegion& r, const VectorXd& k, double shrink) {
    for (const auto& c : r.cubes) {
      if (((k - c.center).cwiseAbs().array() <= 0.5 * c.edge - shrink).all()) return true;
    }
    return false;
  };
  int checked = 0;
  for (const auto& c : coarse.cubes) {
    for (int i = 0; i <= 4; ++i) {
      for (int j = 0; j <= 4; ++j) {
        const VectorXd k = c.center + 0.4 * v2(-0.5 + 0.25 * i, -0.5 + 0.25 * j);
        // Only points at least one fine edge inside the coarse union.
        bool deep = true;
        for (double dx : {-0.2, 0.0, 0.2})
          for (double dy : {-0.2, 0.0, 0.2}) deep = deep && in_union(coarse, k + v2(dx, dy), 0.0);
        if (!deep) continue;
        ++checked;
        EXPECT_TRUE(in_union(fine, k, -1e-12)) << k.transpose();
      }
    }
  }
  EXPECT_GT(checked, 0);
}

TEST(Precheck, TwoStateNeedsPipeline) {
  const auto r = precheck_optimal(test::two_state_plant(), PassivityMode::nonstrict());
  EXPECT_FALSE(r.already_passive);
  EXPECT_NEAR(r.care.K(0, 0), 0.048, 1e-3);
}

TEST(Precheck, PassivePlantShortCircuits) {
  const auto plant = test::passive_plant(0.0);
  const auto r = precheck_optimal(plant, PassivityMode::nonstrict());
  ASSERT_TRUE(r.already_passive);
  EXPECT_LT(r.care.K.norm(), 1e-12);
  ASSERT_TRUE(r.certificate.has_value());
  // B_dᵀP = C pins the first row of P to e₁ᵀ.
  EXPECT_NEAR(r.certificate->P(0, 0), 1.0, 1e-7);
  EXPECT_NEAR(r.certificate->P(0, 1), 0.0, 1e-7);
}

TEST(Precheck, Unstabilizable) {
  auto plant = test::two_state_plant();
  plant.A << 1, 0, 0, -1;
  plant.B_u << 0, 1;
  try {
    precheck_optimal(plant, PassivityMode::nonstrict());
    FAIL();
  } catch (const SynthError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotStabilizable);
  }
}

}  // namespace
}  // namespace passynth
