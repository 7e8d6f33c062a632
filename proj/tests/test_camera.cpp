#include <gtest/gtest.h>

#include <Eigen/Geometry>
#include <random>

#include "meshlift/camera.hpp"
#include "meshlift/render.hpp"

namespace {

using namespace meshlift;

std::vector<double> azimuths(const Rig& rig) {
  std::vector<double> out;
  for (const auto& c : rig.cameras) out.push_back(c.azimuth);
  return out;
}

TEST(Rig, StandardSixViews) {
  const Rig rig = standard_rig_six<double>(512, 1.0);
  ASSERT_EQ(rig.size(), 6u);
  EXPECT_EQ(azimuths(rig), (std::vector<double>{0, 45, 90, 180, 270, 315}));
  for (const auto& c : rig.cameras) {
    EXPECT_EQ(c.elevation, 0.0);
    EXPECT_EQ(c.resolution, 512);
  }
  EXPECT_EQ(rig[0].azimuth, 0.0);
}

TEST(Rig, TrainingEightViews) {
  const Rig rig = training_rig_eight<double>();
  EXPECT_EQ(azimuths(rig), (std::vector<double>{0, 45, 90, 135, 180, 225, 270, 315}));
  EXPECT_EQ(rig[0].resolution, 512);
  for (const auto& c : rig.cameras) EXPECT_EQ(c.elevation, 0.0);
}

TEST(Rig, UnitSphereFillsFrameAtUnitExtent) {
  const Rig rig = standard_rig_six<double>(512, 1.0);
  for (const auto& c : rig.cameras) {
    const Eigen::Vector3d r = c.right(), u = c.up();
    EXPECT_NEAR(world_to_pixel(c, r).x, 512.0, 1e-9);
    EXPECT_NEAR(world_to_pixel(c, Eigen::Vector3d(-r)).x, 0.0, 1e-9);
    EXPECT_NEAR(world_to_pixel(c, u).y, 0.0, 1e-9);
    EXPECT_NEAR(world_to_pixel(c, Eigen::Vector3d(-u)).y, 512.0, 1e-9);
  }
}

TEST(Camera, InvalidCamerasRejected) {
  Camera c;
  c.half_extent = 0;
  EXPECT_THROW(c.check(), ContractError);
  c = Camera{};
  c.resolution = 8;
  EXPECT_THROW(c.check(), ContractError);
  c = Camera{};
  c.near_plane = 2;
  c.far_plane = 1;
  EXPECT_THROW(c.check(), ContractError);
  Rig mixed = standard_rig_six<double>(64, 1.0);
  mixed.cameras[2].resolution = 128;
  EXPECT_THROW(mixed.check(), ContractError);
  EXPECT_THROW(Rig{}.check(), ContractError);
}

TEST(Projection, OriginMapsToCentre) {
  for (const auto& c : training_rig_eight<double>(256, 1.7).cameras) {
    const auto p = world_to_pixel(c, Eigen::Vector3d(Eigen::Vector3d::Zero()));
    EXPECT_DOUBLE_EQ(p.x, 128.0);
    EXPECT_DOUBLE_EQ(p.y, 128.0);
  }
}

// Azimuth 0 looks from +Y toward -Y with +Z up, so the camera's right is
// world -X.
TEST(Projection, FrontCameraAxes) {
  Camera c;
  c.resolution = 100;
  c.half_extent = 2.0;
  const auto right = world_to_pixel(c, Eigen::Vector3d(-2.0, 0, 0));
  EXPECT_DOUBLE_EQ(right.x, 100.0);
  EXPECT_DOUBLE_EQ(right.y, 50.0);
  const auto top = world_to_pixel(c, Eigen::Vector3d(0, 0, 2.0));
  EXPECT_DOUBLE_EQ(top.y, 0.0);
  EXPECT_LT(world_to_pixel(c, Eigen::Vector3d(0, 1, 0)).depth, world_to_pixel(c, Eigen::Vector3d(0, -1, 0)).depth);
}

TEST(Projection, MatchesRotatedFrontCamera) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  for (double az : {0.0, 45.0, 90.0, 135.0, 180.0, 270.0, 315.0, 33.3}) {
    for (double el : {0.0, 20.0, -35.0}) {
      Camera c;
      c.azimuth = az;
      c.elevation = el;
      c.half_extent = 1.3;
      c.resolution = 64;
      // Front camera frame tilted up by the elevation about world X, then turned by the azimuth about +Z.
      const Eigen::Matrix3d R = (Eigen::AngleAxisd(az * M_PI / 180, Eigen::Vector3d::UnitZ()) *
                                 Eigen::AngleAxisd(el * M_PI / 180, Eigen::Vector3d::UnitX()))
                                    .toRotationMatrix();
      const Eigen::Vector3d right = R * Eigen::Vector3d(-1, 0, 0);
      const Eigen::Vector3d up = R * Eigen::Vector3d(0, 0, 1);
      const Eigen::Vector3d toward_camera = R * Eigen::Vector3d(0, 1, 0);
      for (int i = 0; i < 20; ++i) {
        const Eigen::Vector3d p(u(rng), u(rng), u(rng));
        const auto q = world_to_pixel(c, p);
        EXPECT_NEAR(q.x, (p.dot(right) / 1.3 + 1) * 32, 1e-9);
        EXPECT_NEAR(q.y, (1 - p.dot(up) / 1.3) * 32, 1e-9);
        EXPECT_NEAR(q.depth, -p.dot(toward_camera), 1e-12);
      }
    }
  }
}

TEST(Projection, FullTurnIsIdentical) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (double az : {0.0, 45.0, 90.0, 180.0, 270.0, 315.0}) {
    Camera a, b;
    a.azimuth = az;
    b.azimuth = az + 360.0;
    for (int i = 0; i < 10; ++i) {
      const Eigen::Vector3d p(u(rng), u(rng), u(rng));
      const auto pa = world_to_pixel(a, p), pb = world_to_pixel(b, p);
      EXPECT_EQ(pa.x, pb.x);
      EXPECT_EQ(pa.y, pb.y);
      EXPECT_EQ(pa.depth, pb.depth);
    }
  }
}

TEST(Projection, IsAffineOnMidpoints) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  Camera c;
  c.azimuth = 90;
  for (int i = 0; i < 50; ++i) {
    // Dyadic coordinates keep every product exact.
    const Eigen::Vector3d p = (Eigen::Vector3d(u(rng), u(rng), u(rng)) * 64).array().round() / 64;
    const Eigen::Vector3d q = (Eigen::Vector3d(u(rng), u(rng), u(rng)) * 64).array().round() / 64;
    const auto pp = world_to_pixel(c, p), pq = world_to_pixel(c, q);
    const auto pm = world_to_pixel(c, Eigen::Vector3d((p + q) / 2));
    EXPECT_EQ(pm.x, (pp.x + pq.x) / 2);
    EXPECT_EQ(pm.y, (pp.y + pq.y) / 2);
    EXPECT_EQ(pm.depth, (pp.depth + pq.depth) / 2);
  }
}

TEST(Projection, MovingAlongViewChangesOnlyDepth) {
  Camera c;
  c.azimuth = 45;
  const Eigen::Vector3d p(0.2, -0.3, 0.4);
  const auto a = world_to_pixel(c, p);
  const auto b = world_to_pixel(c, Eigen::Vector3d(p + 0.7 * c.view_direction()));
  EXPECT_NEAR(a.x, b.x, 1e-12);
  EXPECT_NEAR(a.y, b.y, 1e-12);
  EXPECT_NEAR(b.depth - a.depth, 0.7, 1e-12);
}

TEST(Projection, OppositeCamerasHaveNegatedViewDirections) {
  Camera front, back;
  back.azimuth = 180;
  EXPECT_EQ(front.view_direction(), Eigen::Vector3d(-back.view_direction()));
  Camera side, other;
  side.azimuth = 45;
  other.azimuth = 225;
  EXPECT_EQ(side.view_direction(), Eigen::Vector3d(-other.view_direction()));
}

}  // namespace
