#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "panokit/projection.hpp"

using namespace panokit;

namespace {

constexpr double kPi = std::numbers::pi;

double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

RgbImage solid(std::size_t w, std::size_t h, Rgb c) { return RgbImage(w, h, c); }

}  // namespace

TEST_CASE("pixel_to_ray cardinal directions") {
  // 2x1 grid over a symmetric latitude band: both rays sit on the equator
  PanoramaSpec spec{2, 1, -0.3, 0.3};
  Vec3 right = pixel_to_ray(spec, 0, 0);  // theta = -pi/2
  CHECK(right[0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(right[1] == Catch::Approx(-1.0).epsilon(1e-12));
  CHECK(right[2] == Catch::Approx(0.0).margin(1e-15));
  Vec3 left = pixel_to_ray(spec, 0, 1);  // theta = +pi/2
  CHECK(left[1] == Catch::Approx(1.0).epsilon(1e-12));

  // 4-wide: column centers at -3pi/4, -pi/4, +pi/4, +3pi/4
  PanoramaSpec spec4{4, 1, -0.3, 0.3};
  Vec3 fr = pixel_to_ray(spec4, 0, 1);
  CHECK(std::atan2(fr[1], fr[0]) == Catch::Approx(-kPi / 4).epsilon(1e-12));
  Vec3 bl = pixel_to_ray(spec4, 0, 3);
  CHECK(std::atan2(bl[1], bl[0]) == Catch::Approx(3 * kPi / 4).epsilon(1e-12));
}

TEST_CASE("pixel_to_ray latitude runs top-down") {
  PanoramaSpec spec;  // 1024x256, phi in [-45, 45] deg
  Vec3 top = pixel_to_ray(spec, 0, 512);
  Vec3 bottom = pixel_to_ray(spec, 255, 512);
  CHECK(top[2] > 0.0);
  CHECK(bottom[2] < 0.0);
  CHECK(top[2] == Catch::Approx(-bottom[2]).epsilon(1e-12));
  const double expect_phi = kPi / 4 - (0.5 / 256.0) * (kPi / 2);
  CHECK(std::asin(top[2]) == Catch::Approx(expect_phi).epsilon(1e-12));
}

TEST_CASE("pixel_to_ray yields unit vectors and validates bounds") {
  PanoramaSpec spec;
  Rng rng(12);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform(0, 256));
    const std::size_t k = static_cast<std::size_t>(rng.uniform(0, 1024));
    CHECK(std::abs(norm(pixel_to_ray(spec, std::min<std::size_t>(j, 255),
                                     std::min<std::size_t>(k, 1023))) -
                   1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(pixel_to_ray(spec, 256, 0), ConfigError);
  CHECK_THROWS_AS(pixel_to_ray(spec, 0, 1024), ConfigError);
}

TEST_CASE("panorama spec validation") {
  PanoramaSpec bad{0, 256, -0.1, 0.1};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  PanoramaSpec inverted{16, 16, 0.5, -0.5};
  CHECK_THROWS_AS(inverted.validate(), ConfigError);
  PanoramaSpec over{16, 16, -2.0, 0.5};
  CHECK_THROWS_AS(over.validate(), ConfigError);
}

TEST_CASE("project_to_camera optical axis, behind, and field-of-view edge") {
  PinholeCamera cam = PinholeCamera::looking(0.0, 100.0, 100.0, 200, 200, 0);
  cam.validate();

  auto center = project_to_camera(cam, Vec3{1, 0, 0});
  REQUIRE(center.has_value());
  CHECK(center->u == Catch::Approx(100.0).margin(1e-12));
  CHECK(center->v == Catch::Approx(100.0).margin(1e-12));

  CHECK_FALSE(project_to_camera(cam, Vec3{-1, 0, 0}).has_value());
  // orthogonal ray: depth 0, behind the epsilon plane
  CHECK_FALSE(project_to_camera(cam, Vec3{0, 0, 1}).has_value());

  // fx = width/2 gives a 90-degree horizontal FoV
  const double deg = kPi / 180.0;
  auto inside = project_to_camera(cam, Vec3{std::cos(44.9 * deg), std::sin(44.9 * deg), 0});
  CHECK(inside.has_value());
  auto outside = project_to_camera(cam, Vec3{std::cos(45.1 * deg), std::sin(45.1 * deg), 0});
  CHECK_FALSE(outside.has_value());
  auto outside_r = project_to_camera(cam, Vec3{std::cos(-45.1 * deg), std::sin(-45.1 * deg), 0});
  CHECK_FALSE(outside_r.has_value());
}

TEST_CASE("project_to_camera left of axis lands left of center") {
  // theta > 0 is leftward in the ego frame; camera x (u) points right, so a
  // leftward ray must land at u < cx.
  PinholeCamera cam = PinholeCamera::looking(0.0, 100.0, 100.0, 200, 200, 0);
  auto hit = project_to_camera(cam, Vec3{std::cos(0.2), std::sin(0.2), 0});
  REQUIRE(hit.has_value());
  CHECK(hit->u < cam.cx);
  // upward ray lands above center (v < cy)
  auto up = project_to_camera(cam, Vec3{std::cos(0.2), 0, std::sin(0.2)});
  REQUIRE(up.has_value());
  CHECK(up->v < cam.cy);
}

TEST_CASE("camera validation rejects bad rotation and intrinsics") {
  PinholeCamera cam = PinholeCamera::looking(0.3, 50, 50, 100, 100, 0);
  cam.validate();
  cam.rotation[0] += 1e-6;
  CHECK_THROWS_AS(cam.validate(), ConfigError);

  PinholeCamera neg = PinholeCamera::looking(0, -1, 50, 100, 100, 0);
  CHECK_THROWS_AS(neg.validate(), ConfigError);
}

TEST_CASE("rig validation enforces contiguous priorities") {
  CameraRig rig;
  rig.cameras.push_back(PinholeCamera::looking(0, 50, 50, 100, 100, 0));
  rig.cameras.push_back(PinholeCamera::looking(1.0, 50, 50, 100, 100, 2));
  CHECK_THROWS_WITH(rig.validate(), Catch::Matchers::ContainsSubstring("contiguous"));
}

TEST_CASE("stitch single forward camera covers the front only") {
  CameraRig rig;
  rig.cameras.push_back(PinholeCamera::looking(0, 32.0, 32.0, 64, 96, 0));
  PanoramaSpec spec{256, 64, -kPi / 4, kPi / 4};
  std::vector<RgbImage> imgs = {solid(64, 96, {200, 10, 10})};
  StitchResult res = stitch(rig, imgs, spec);

  // forward pixel (theta ~ 0): column 128; backward pixel: column 0
  CHECK(res.coverage.at(128, 32) == 0);
  CHECK(res.panorama.at(128, 32) == Rgb{200, 10, 10});
  CHECK(res.coverage.at(0, 32) == kUncovered);
  CHECK(res.panorama.at(0, 32) == Rgb{});

  // covered azimuth span is (-45, 45) degrees: about a quarter of the equator
  std::size_t covered = 0;
  for (std::size_t k = 0; k < 256; ++k) covered += res.coverage.at(k, 32) != kUncovered;
  CHECK(covered == 64);
}

TEST_CASE("stitch credits the lowest priority among identical cameras") {
  CameraRig rig;
  rig.cameras.push_back(PinholeCamera::looking(0, 32.0, 32.0, 64, 96, 0));
  rig.cameras.push_back(PinholeCamera::looking(0, 32.0, 32.0, 64, 96, 1));
  PanoramaSpec spec{128, 32, -kPi / 4, kPi / 4};
  std::vector<RgbImage> imgs = {solid(64, 96, {0, 255, 0}), solid(64, 96, {0, 0, 255})};
  StitchResult res = stitch(rig, imgs, spec);
  for (std::size_t j = 0; j < 32; ++j)
    for (std::size_t k = 0; k < 128; ++k) {
      if (res.coverage.at(k, j) == kUncovered) continue;
      CHECK(res.coverage.at(k, j) == 0);
      CHECK(res.panorama.at(k, j) == Rgb{0, 255, 0});
    }
}

TEST_CASE("stitch validates image list against the rig") {
  CameraRig rig = demo_rig(64);
  PanoramaSpec spec{64, 16, -kPi / 4, kPi / 4};
  std::vector<RgbImage> too_few(5, solid(64, 96, {}));
  CHECK_THROWS_AS(stitch(rig, too_few, spec), ConfigError);
  std::vector<RgbImage> wrong_size(6, solid(32, 32, {}));
  CHECK_THROWS_AS(stitch(rig, wrong_size, spec), ConfigError);
}

TEST_CASE("adding cameras only grows coverage and never flips winners") {
  PanoramaSpec spec{128, 32, -kPi / 4, kPi / 4};
  CameraRig full = demo_rig(64);
  std::vector<RgbImage> imgs;
  for (std::size_t i = 0; i < 6; ++i)
    imgs.push_back(solid(64, 96, {static_cast<std::uint8_t>(40 * i), 0, 0}));

  GrayImage prev;
  for (std::size_t n = 1; n <= 6; ++n) {
    CameraRig sub;
    sub.cameras.assign(full.cameras.begin(), full.cameras.begin() + n);
    std::vector<RgbImage> sub_imgs(imgs.begin(), imgs.begin() + n);
    StitchResult res = stitch(sub, sub_imgs, spec);
    if (n > 1) {
      for (std::size_t p = 0; p < res.coverage.pixels.size(); ++p) {
        if (prev.pixels[p] != kUncovered) CHECK(res.coverage.pixels[p] == prev.pixels[p]);
      }
    }
    prev = res.coverage;
  }
}

TEST_CASE("stitch output is independent of worker count and repeatable") {
  CameraRig rig = demo_rig(64);
  std::vector<RgbImage> imgs;
  Rng rng(17);
  for (std::size_t i = 0; i < 6; ++i) {
    RgbImage img(64, 96);
    for (auto& p : img.pixels)
      p = {static_cast<std::uint8_t>(rng.uniform(0, 256)),
           static_cast<std::uint8_t>(rng.uniform(0, 256)),
           static_cast<std::uint8_t>(rng.uniform(0, 256))};
    imgs.push_back(std::move(img));
  }
  PanoramaSpec spec{256, 64, -kPi / 4, kPi / 4};
  StitchResult a = stitch(rig, imgs, spec, 1);
  StitchResult b = stitch(rig, imgs, spec, 4);
  StitchResult c = stitch(rig, imgs, spec, 4);
  CHECK(a.panorama == b.panorama);
  CHECK(a.coverage == b.coverage);
  CHECK(b.panorama == c.panorama);
}

TEST_CASE("demo rig covers the full latitude band") {
  CameraRig rig = demo_rig(64);
  std::vector<RgbImage> imgs(6, solid(64, 96, {1, 2, 3}));
  PanoramaSpec spec{360, 90, -kPi / 4, kPi / 4};
  StitchResult res = stitch(rig, imgs, spec);
  for (auto v : res.coverage.pixels) CHECK(v != kUncovered);
}

TEST_CASE("rig JSON round trip preserves every field") {
  CameraRig rig = demo_rig(128);
  nlohmann::json j = rig_to_json(rig);
  CameraRig back = rig_from_json(j);
  REQUIRE(back.cameras.size() == rig.cameras.size());
  for (std::size_t i = 0; i < rig.cameras.size(); ++i) {
    const auto& a = rig.cameras[i];
    const auto& b = back.cameras[i];
    CHECK(a.priority == b.priority);
    CHECK(a.width == b.width);
    CHECK(a.height == b.height);
    CHECK(a.fx == b.fx);
    CHECK(a.fy == b.fy);
    CHECK(a.cx == b.cx);
    CHECK(a.cy == b.cy);
    for (int r = 0; r < 9; ++r) CHECK(a.rotation[r] == b.rotation[r]);
  }
}

TEST_CASE("rig JSON rejects malformed input") {
  CHECK_THROWS_AS(rig_from_json(nlohmann::json::object()), ConfigError);

  nlohmann::json j = rig_to_json(demo_rig(64));
  j["cameras"][0].erase("fx");
  CHECK_THROWS_AS(rig_from_json(j), ConfigError);

  nlohmann::json k = rig_to_json(demo_rig(64));
  k["cameras"][0]["rotation"][0] = 0.5;  // breaks orthonormality
  CHECK_THROWS_AS(rig_from_json(k), ConfigError);
}

TEST_CASE("rig JSON sorts cameras by priority") {
  nlohmann::json j = rig_to_json(demo_rig(64));
  std::swap(j["cameras"][0], j["cameras"][3]);
  CameraRig rig = rig_from_json(j);
  for (std::size_t i = 0; i < rig.cameras.size(); ++i) CHECK(rig.cameras[i].priority == i);
}

TEST_CASE("yaw rotation turns forward toward the left") {
  Mat3 r = yaw_rotation(kPi / 2);
  Vec3 v = mat3_apply(r, Vec3{1, 0, 0});
  CHECK(v[0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(v[1] == Catch::Approx(1.0).epsilon(1e-12));
}
