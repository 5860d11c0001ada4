#pragma once

// Multi-camera panorama synthesis. Rays are cast from a shared optical origin
// through an equirectangular grid; each ray is projected into the cameras in
// priority order and the first valid hit supplies the color. No blending.
//
// Conventions: ego frame x forward, y left, z up. Longitude theta in
// [-pi, pi) increases leftward; latitude phi increases upward. Camera frame
// x right (u), y down (v), z forward.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "panokit/image.hpp"
#include "panokit/matrix.hpp"
#include "panokit/parallel.hpp"

namespace panokit {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;  // row-major

inline Vec3 mat3_apply(const Mat3& m, const Vec3& v) {
  return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
          m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
          m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

inline Mat3 mat3_mul(const Mat3& a, const Mat3& b) {
  Mat3 out{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 3; ++k) out[r * 3 + c] += a[r * 3 + k] * b[k * 3 + c];
  return out;
}

// Rotation of the ego frame about +z (up) by yaw, i.e. a leftward turn.
inline Mat3 yaw_rotation(double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c, -s, 0, s, c, 0, 0, 0, 1};
}

struct PinholeCamera {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  std::size_t width = 0, height = 0;
  Mat3 rotation{};  // world -> camera
  std::size_t priority = 0;

  void validate() const {
    if (fx <= 0 || fy <= 0) throw ConfigError("camera: focal lengths must be positive");
    if (cx < 0 || cx >= static_cast<double>(width) || cy < 0 ||
        cy >= static_cast<double>(height))
      throw ConfigError("camera: principal point outside image");
    // orthonormality: R^T R = I within 1e-9
    Mat3 rt = {rotation[0], rotation[3], rotation[6], rotation[1], rotation[4],
               rotation[7], rotation[2], rotation[5], rotation[8]};
    Mat3 prod = mat3_mul(rt, rotation);
    for (int i = 0; i < 9; ++i) {
      const double expect = (i % 4 == 0) ? 1.0 : 0.0;
      if (std::abs(prod[i] - expect) > 1e-9)
        throw ConfigError("camera: rotation is not orthonormal");
    }
  }

  // Camera looking along `forward` (unit, horizontal yaw only here), image up
  // aligned with world up.
  static PinholeCamera looking(double yaw, double fx, double fy, std::size_t width,
                               std::size_t height, std::size_t priority) {
    PinholeCamera cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = static_cast<double>(width) / 2.0;
    cam.cy = static_cast<double>(height) / 2.0;
    cam.width = width;
    cam.height = height;
    cam.priority = priority;
    const double c = std::cos(yaw), s = std::sin(yaw);
    // rows: camera right, camera down, camera forward (world coords)
    cam.rotation = {s, -c, 0, 0, 0, -1, c, s, 0};
    return cam;
  }
};

struct CameraRig {
  std::vector<PinholeCamera> cameras;  // sorted by priority ascending

  void validate() const {
    for (std::size_t i = 0; i < cameras.size(); ++i) {
      if (cameras[i].priority != i)
        throw ConfigError("rig: priorities must be unique and contiguous from 0 (got " +
                          std::to_string(cameras[i].priority) + " at position " +
                          std::to_string(i) + ")");
      cameras[i].validate();
    }
  }
};

struct PanoramaSpec {
  std::size_t width = 1024, height = 256;
  double lat_min = -std::numbers::pi / 4;  // phi_min
  double lat_max = std::numbers::pi / 4;   // phi_max

  void validate() const {
    if (!(lat_min >= -std::numbers::pi / 2 && lat_min < lat_max &&
          lat_max <= std::numbers::pi / 2))
      throw ConfigError("panorama: need -pi/2 <= lat_min < lat_max <= pi/2");
    if (width == 0 || height == 0) throw ConfigError("panorama: zero size");
  }
};

// Unit ray through the center of pano pixel (j, k). Row 0 is lat_max.
inline Vec3 pixel_to_ray(const PanoramaSpec& spec, std::size_t j, std::size_t k) {
  if (j >= spec.height || k >= spec.width)
    throw ConfigError("pixel_to_ray: pixel (" + std::to_string(j) + "," + std::to_string(k) +
                      ") outside " + std::to_string(spec.width) + "x" +
                      std::to_string(spec.height));
  const double theta =
      (static_cast<double>(k) + 0.5) / static_cast<double>(spec.width) * 2.0 * std::numbers::pi -
      std::numbers::pi;
  const double phi = spec.lat_max - (static_cast<double>(j) + 0.5) /
                                        static_cast<double>(spec.height) *
                                        (spec.lat_max - spec.lat_min);
  const double cp = std::cos(phi);
  return {cp * std::cos(theta), cp * std::sin(theta), std::sin(phi)};
}

struct PixelCoord {
  double u, v;
};

// Pinhole projection of a world ray; none when the ray points behind the
// camera or lands outside the image. Equivalent to intersecting the ray with
// the tangent image plane z = f in the camera frame.
inline std::optional<PixelCoord> project_to_camera(const PinholeCamera& cam, const Vec3& ray) {
  constexpr double kFrontEps = 1e-6;
  const Vec3 p = mat3_apply(cam.rotation, ray);
  if (p[2] <= kFrontEps) return std::nullopt;
  const double u = cam.fx * p[0] / p[2] + cam.cx;
  const double v = cam.fy * p[1] / p[2] + cam.cy;
  if (u < 0.0 || u >= static_cast<double>(cam.width) || v < 0.0 ||
      v >= static_cast<double>(cam.height))
    return std::nullopt;
  return PixelCoord{u, v};
}

constexpr std::uint8_t kUncovered = 255;

struct StitchResult {
  RgbImage panorama;
  GrayImage coverage;  // winning camera priority per pixel, 255 = none
};

// First valid camera in priority order wins; nearest-neighbor sampling.
inline StitchResult stitch(const CameraRig& rig, const std::vector<RgbImage>& images,
                           const PanoramaSpec& spec, std::size_t num_workers = 1) {
  rig.validate();
  spec.validate();
  if (images.size() != rig.cameras.size())
    throw ConfigError("stitch: " + std::to_string(images.size()) + " images for " +
                      std::to_string(rig.cameras.size()) + " cameras");
  for (std::size_t i = 0; i < images.size(); ++i)
    if (images[i].width != rig.cameras[i].width || images[i].height != rig.cameras[i].height)
      throw ConfigError("stitch: image " + std::to_string(i) + " size mismatch with camera");

  StitchResult out{RgbImage(spec.width, spec.height), GrayImage(spec.width, spec.height,
                                                                kUncovered)};
  parallel_for(spec.height, num_workers, [&](std::size_t j) {
    for (std::size_t k = 0; k < spec.width; ++k) {
      const Vec3 ray = pixel_to_ray(spec, j, k);
      for (std::size_t i = 0; i < rig.cameras.size(); ++i) {
        auto hit = project_to_camera(rig.cameras[i], ray);
        if (!hit) continue;
        const std::size_t u = static_cast<std::size_t>(hit->u);
        const std::size_t v = static_cast<std::size_t>(hit->v);
        out.panorama.at(k, j) = images[i].at(u, v);
        out.coverage.at(k, j) = static_cast<std::uint8_t>(i);
        break;
      }
    }
  });
  return out;
}

// ---- rig JSON ----

inline CameraRig rig_from_json(const nlohmann::json& j) {
  CameraRig rig;
  if (!j.contains("cameras") || !j["cameras"].is_array())
    throw ConfigError("rig: missing 'cameras' array");
  for (const auto& c : j["cameras"]) {
    PinholeCamera cam;
    try {
      cam.priority = c.at("priority").get<std::size_t>();
      cam.width = c.at("width").get<std::size_t>();
      cam.height = c.at("height").get<std::size_t>();
      cam.fx = c.at("fx").get<double>();
      cam.fy = c.at("fy").get<double>();
      cam.cx = c.at("cx").get<double>();
      cam.cy = c.at("cy").get<double>();
      const auto rot = c.at("rotation");
      if (!rot.is_array() || rot.size() != 9)
        throw ConfigError("rig: 'rotation' must hold 9 floats row-major");
      for (std::size_t i = 0; i < 9; ++i) cam.rotation[i] = rot[i].get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("rig: bad camera entry: ") + e.what());
    }
    rig.cameras.push_back(cam);
  }
  std::sort(rig.cameras.begin(), rig.cameras.end(),
            [](const PinholeCamera& a, const PinholeCamera& b) { return a.priority < b.priority; });
  rig.validate();
  return rig;
}

inline nlohmann::json rig_to_json(const CameraRig& rig) {
  nlohmann::json j;
  j["cameras"] = nlohmann::json::array();
  for (const auto& cam : rig.cameras) {
    nlohmann::json c;
    c["priority"] = cam.priority;
    c["width"] = cam.width;
    c["height"] = cam.height;
    c["fx"] = cam.fx;
    c["fy"] = cam.fy;
    c["cx"] = cam.cx;
    c["cy"] = cam.cy;
    c["rotation"] = cam.rotation;
    j["cameras"].push_back(c);
  }
  return j;
}

// The six-camera demo rig: 90-degree horizontal FoV (fx = width/2), yaws
// 0, +-60, +-120, 180 degrees in priority order. The image is tall enough
// (height = 3/2 width with fy = fx) that the phi in [-45, 45] degree band is
// fully covered.
inline CameraRig demo_rig(std::size_t cam_width = 256) {
  const double deg = std::numbers::pi / 180.0;
  const double yaws[6] = {0, 60 * deg, -60 * deg, 120 * deg, -120 * deg, 180 * deg};
  const double fx = static_cast<double>(cam_width) / 2.0;
  const std::size_t cam_height = cam_width * 3 / 2;
  CameraRig rig;
  for (std::size_t i = 0; i < 6; ++i)
    rig.cameras.push_back(PinholeCamera::looking(yaws[i], fx, fx, cam_width, cam_height, i));
  return rig;
}

}  // namespace panokit
