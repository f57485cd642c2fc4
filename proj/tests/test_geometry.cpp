#include <gtest/gtest.h>

#include <random>

#include "sqaforge/geometry.hpp"
#include "support.hpp"

namespace sq = sqaforge;
using sq::Quadrant;
using sq::testing::box;

namespace {

// Independent quadrant rule: rotate the offset into the observer frame
// with an explicit matrix and compare coordinates, no angles involved.
Quadrant matrix_quadrant(double dx, double dy, double heading) {
  const double c = std::cos(heading), s = std::sin(heading);
  const double xp = c * dx + s * dy;
  const double yp = -s * dx + c * dy;
  if (xp > 0 && -xp < yp && yp <= xp) return Quadrant::Front;
  if (yp > 0 && -yp <= xp && xp < yp) return Quadrant::Left;
  if (xp < 0 && xp <= yp && yp < -xp) return Quadrant::Back;
  return Quadrant::Right;
}

sq::ObserverPose origin(double heading = 0.0) { return sq::ObserverPose({0, 0, 0}, heading); }

}  // namespace

TEST(Geometry, CardinalObjectsFallInTheirQuadrants) {
  const auto scene = sq::testing::classroom();
  const auto pose = origin();
  EXPECT_EQ(sq::classify_quadrant(scene.objects[0], pose), Quadrant::Front);
  EXPECT_EQ(sq::classify_quadrant(scene.objects[1], pose), Quadrant::Right);
  EXPECT_EQ(sq::classify_quadrant(scene.objects[2], pose), Quadrant::Back);
  EXPECT_EQ(sq::classify_quadrant(scene.objects[3], pose), Quadrant::Left);
}

TEST(Geometry, BoundaryBearingsBelongToTheCounterclockwiseSide) {
  constexpr double pi = std::numbers::pi;
  EXPECT_EQ(sq::classify_bearing(pi / 4), Quadrant::Front);
  EXPECT_EQ(sq::classify_bearing(3 * pi / 4), Quadrant::Left);
  EXPECT_EQ(sq::classify_bearing(-pi / 4), Quadrant::Right);
  EXPECT_EQ(sq::classify_bearing(-3 * pi / 4), Quadrant::Back);
  EXPECT_EQ(sq::classify_bearing(pi), Quadrant::Back);
}

TEST(Geometry, BearingIsInHalfOpenRange) {
  // Directly behind: atan2 can return -pi; the result must be +pi.
  const auto pose = origin();
  EXPECT_DOUBLE_EQ(sq::relative_bearing({-1.0, -0.0, 0.0}, pose), std::numbers::pi);
  EXPECT_DOUBLE_EQ(sq::relative_bearing({-1.0, 0.0, 0.0}, pose), std::numbers::pi);
}

TEST(Geometry, DegeneratePositionThrows) {
  const auto pose = sq::ObserverPose({1, 2, 0}, 0.3);
  try {
    sq::relative_bearing({1, 2, 5}, pose);
    FAIL() << "expected DegeneratePosition";
  } catch (const sq::Error& e) {
    EXPECT_EQ(e.code(), sq::ErrorCode::DegeneratePosition);
  }
}

TEST(Geometry, HeadingIsNormalized) {
  EXPECT_DOUBLE_EQ(sq::ObserverPose({}, -std::numbers::pi / 2).heading_rad(), 3 * std::numbers::pi / 2);
  EXPECT_DOUBLE_EQ(sq::ObserverPose({}, 5 * std::numbers::pi).heading_rad(), std::numbers::pi);
  EXPECT_GE(sq::ObserverPose({}, -1e-20).heading_rad(), 0.0);
  EXPECT_LT(sq::ObserverPose({}, -1e-20).heading_rad(), sq::kTwoPi);
}

TEST(Geometry, QuadrantRotationCycle) {
  EXPECT_EQ(sq::rotate_quadrant(Quadrant::Front, 1), Quadrant::Right);
  EXPECT_EQ(sq::rotate_quadrant(Quadrant::Right, 1), Quadrant::Back);
  EXPECT_EQ(sq::rotate_quadrant(Quadrant::Back, 1), Quadrant::Left);
  EXPECT_EQ(sq::rotate_quadrant(Quadrant::Left, 1), Quadrant::Front);
  for (auto q : sq::kQuadrants) {
    EXPECT_EQ(sq::rotate_quadrant(q, 4), q);
    EXPECT_EQ(sq::rotate_quadrant(q, -1), sq::rotate_quadrant(q, 3));
  }
}

TEST(GeometryProperty, MatchesRotationMatrixOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coord(-10, 10), heading(-10, 10);
  for (int i = 0; i < 1000; ++i) {
    const sq::ObserverPose pose({coord(rng), coord(rng), 0}, heading(rng));
    const sq::Vec3 p{coord(rng), coord(rng), coord(rng)};
    const double dx = p.x - pose.position().x, dy = p.y - pose.position().y;
    const double theta = sq::relative_bearing(p, pose);
    // Skip points within rounding distance of a boundary ray.
    const double frac = std::fmod(std::abs(theta) + std::numbers::pi / 4, std::numbers::pi / 2);
    if (frac < 1e-9 || frac > std::numbers::pi / 2 - 1e-9) continue;
    EXPECT_EQ(sq::classify_bearing(theta), matrix_quadrant(dx, dy, pose.heading_rad())) << "case " << i;
  }
}

TEST(GeometryProperty, QuarterTurnPermutesQuadrants) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> h(0, sq::kTwoPi);
  for (int i = 0; i < 200; ++i) {
    const sq::ObserverPose pose({0.3, -0.7, 0}, h(rng));
    const auto scene = sq::testing::random_scene(rng, pose, 10);
    for (int turns = 1; turns <= 3; ++turns) {
      const sq::ObserverPose turned(pose.position(), pose.heading_rad() + turns * std::numbers::pi / 2);
      for (const auto& o : scene.objects)
        EXPECT_EQ(sq::classify_quadrant(o, turned), sq::rotate_quadrant(sq::classify_quadrant(o, pose), turns));
    }
  }
}

TEST(GeometryProperty, TranslationInvariance) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> shift(-50, 50), h(0, sq::kTwoPi);
  for (int i = 0; i < 200; ++i) {
    const sq::ObserverPose pose({0, 0, 0}, h(rng));
    const auto scene = sq::testing::random_scene(rng, pose, 8);
    const sq::Vec3 t{shift(rng), shift(rng), shift(rng)};
    const sq::ObserverPose moved(pose.position() + t, pose.heading_rad());
    for (const auto& o : scene.objects) {
      auto shifted = o;
      shifted.center = o.center + t;
      EXPECT_EQ(sq::classify_quadrant(shifted, moved), sq::classify_quadrant(o, pose));
    }
  }
}

TEST(Geometry, NearestAndFarthestBreakTiesById) {
  sq::Scene s{"s", {box("b", "chair", 1, 0), box("a", "chair", 0, 1), box("c", "lamp", 3, 0.1)}};
  const auto pose = origin();
  EXPECT_EQ(sq::nearest_object(s, pose).id, "a");
  EXPECT_EQ(sq::nearest_object(s, pose, Quadrant::Front).id, "b");
  EXPECT_EQ(sq::farthest_object(s, pose, Quadrant::Front).id, "c");
  EXPECT_EQ(sq::nearest_object(s, pose, std::nullopt, std::string_view("lamp")).id, "c");
}

TEST(Geometry, NoMatchWhenQuadrantEmpty) {
  sq::Scene s{"s", {box("a", "chair", 1, 0)}};
  try {
    sq::nearest_object(s, origin(), Quadrant::Back);
    FAIL();
  } catch (const sq::Error& e) {
    EXPECT_EQ(e.code(), sq::ErrorCode::NoMatch);
  }
}

TEST(Geometry, DegenerateObjectsHaveNoQuadrant) {
  sq::Scene s{"s", {box("under", "rug", 0, 0), box("a", "chair", 1, 0)}};
  const auto pose = origin();
  EXPECT_EQ(sq::count_in_quadrant(s, pose, Quadrant::Front, "rug"), 0u);
  EXPECT_EQ(sq::nearest_object(s, pose).id, "under");
  EXPECT_EQ(sq::nearest_object(s, pose, Quadrant::Front).id, "a");
  EXPECT_EQ(sq::faced_object(s, pose).id, "a");
}

TEST(Geometry, FacedObjectPrefersSmallestBearing) {
  sq::Scene s{"s", {box("near", "chair", 1, 0.5), box("far", "tv", 5, 0.1)}};
  EXPECT_EQ(sq::faced_object(s, origin()).id, "far");
}

TEST(Geometry, CountsByLabelAndQuadrant) {
  sq::Scene s{"s", {box("a", "chair", 1, 2), box("b", "chair", -1, 2), box("c", "chair", 2, 0)}};
  const auto pose = origin();
  EXPECT_EQ(sq::count_in_quadrant(s, pose, Quadrant::Left, "chair"), 2u);
  EXPECT_EQ(sq::count_in_quadrant(s, pose, Quadrant::Front, "chair"), 1u);
  EXPECT_TRUE(sq::exists_in_quadrant(s, pose, Quadrant::Front, "chair"));
  EXPECT_FALSE(sq::exists_in_quadrant(s, pose, Quadrant::Back, "chair"));
  EXPECT_EQ(sq::count_label(s, "chair"), 3u);
}

TEST(Geometry, SceneValidation) {
  sq::Scene empty{"e", {}};
  EXPECT_THROW(empty.validate(), sq::Error);
  sq::Scene dup{"d", {box("a", "x", 1, 0), box("a", "y", 2, 0)}};
  EXPECT_THROW(dup.validate(), sq::Error);
  sq::Scene ok{"ok", {box("a", "x", 1, 0)}};
  EXPECT_NO_THROW(ok.validate());
}
