#pragma once

// Structured scene annotation math: per-object quadruples, depth-averaged
// distance over polygonal regions, occlusion ordering, and visibility
// bucketing. All area computations go through one deterministic pixel-center
// rasterizer (even-odd rule).

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "panokit/matrix.hpp"

namespace panokit {

struct GeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Point2 {
  double u = 0, v = 0;
};

namespace detail {

inline bool segments_properly_intersect(Point2 a, Point2 b, Point2 c, Point2 d) {
  auto cross = [](Point2 o, Point2 p, Point2 q) {
    return (p.u - o.u) * (q.v - o.v) - (p.v - o.v) * (q.u - o.u);
  };
  const double d1 = cross(c, d, a), d2 = cross(c, d, b);
  const double d3 = cross(a, b, c), d4 = cross(a, b, d);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
         ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

}  // namespace detail

struct PolygonRegion {
  std::vector<Point2> vertices;

  PolygonRegion() = default;
  explicit PolygonRegion(std::vector<Point2> vs) : vertices(std::move(vs)) { validate(); }

  void validate() const {
    if (vertices.size() < 3)
      throw GeometryError("polygon: need at least 3 vertices, got " +
                          std::to_string(vertices.size()));
    const std::size_t n = vertices.size();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        // skip edges sharing an endpoint
        if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
        if (detail::segments_properly_intersect(vertices[i], vertices[(i + 1) % n],
                                                vertices[j], vertices[(j + 1) % n]))
          throw GeometryError("polygon: self-intersecting (edges " + std::to_string(i) +
                              " and " + std::to_string(j) + ")");
      }
    }
  }

  // Even-odd rule; points exactly on an edge classify by the crossing count.
  bool contains(double u, double v) const {
    bool inside = false;
    const std::size_t n = vertices.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const Point2& a = vertices[i];
      const Point2& b = vertices[j];
      if ((a.v > v) != (b.v > v)) {
        const double x = (b.u - a.u) * (v - a.v) / (b.v - a.v) + a.u;
        if (u < x) inside = !inside;
      }
    }
    return inside;
  }

  double min_u() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& p : vertices) m = std::min(m, p.u);
    return m;
  }
  double max_u() const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& p : vertices) m = std::max(m, p.u);
    return m;
  }
  double min_v() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& p : vertices) m = std::min(m, p.v);
    return m;
  }
  double max_v() const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& p : vertices) m = std::max(m, p.v);
    return m;
  }
};

struct DepthMap {
  std::size_t width = 0, height = 0;
  std::vector<double> values;  // meters, NaN = invalid

  DepthMap() = default;
  DepthMap(std::size_t w, std::size_t h, double fill = std::numeric_limits<double>::quiet_NaN())
      : width(w), height(h), values(w * h, fill) {}

  double& at(std::size_t u, std::size_t v) { return values[v * width + u]; }
  double at(std::size_t u, std::size_t v) const { return values[v * width + u]; }
};

// Mean of valid depth samples whose pixel centers (u+0.5, v+0.5) fall inside
// the region. Scan order is row-major so the sum is reproducible exactly.
inline double mean_depth(const PolygonRegion& region, const DepthMap& depth) {
  const long u0 = std::max(0L, static_cast<long>(std::floor(region.min_u() - 1.0)));
  const long v0 = std::max(0L, static_cast<long>(std::floor(region.min_v() - 1.0)));
  const long u1 = std::min(static_cast<long>(depth.width) - 1,
                           static_cast<long>(std::ceil(region.max_u() + 1.0)));
  const long v1 = std::min(static_cast<long>(depth.height) - 1,
                           static_cast<long>(std::ceil(region.max_v() + 1.0)));
  double sum = 0.0;
  std::size_t count = 0;
  for (long v = v0; v <= v1; ++v) {
    for (long u = u0; u <= u1; ++u) {
      if (!region.contains(static_cast<double>(u) + 0.5, static_cast<double>(v) + 0.5)) continue;
      const double d = depth.at(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
      if (std::isnan(d)) continue;
      sum += d;
      ++count;
    }
  }
  if (count == 0) throw GeometryError("mean_depth: no valid depth pixels inside region");
  return sum / static_cast<double>(count);
}

struct OverlapResult {
  double intersection_area = 0;  // in source units (cell area accounted)
  double fraction_of_a = 0;
  double fraction_of_b = 0;
  double iou = 0;
  std::size_t cells_a = 0, cells_b = 0, cells_intersection = 0, cells_union = 0;
};

// Rasterized overlap on a square grid spanning the joint bounding box.
// `resolution` is the cell count along the longer bbox axis.
inline OverlapResult polygon_overlap(const PolygonRegion& a, const PolygonRegion& b,
                                     std::size_t resolution = 256) {
  if (resolution < 2) throw GeometryError("polygon_overlap: resolution too small");
  const double u0 = std::min(a.min_u(), b.min_u());
  const double v0 = std::min(a.min_v(), b.min_v());
  const double u1 = std::max(a.max_u(), b.max_u());
  const double v1 = std::max(a.max_v(), b.max_v());
  const double span = std::max(u1 - u0, v1 - v0);
  if (!(span > 0)) throw GeometryError("polygon_overlap: degenerate bounding box");
  const double cell = span / static_cast<double>(resolution);
  const std::size_t nu = static_cast<std::size_t>(std::ceil((u1 - u0) / cell));
  const std::size_t nv = static_cast<std::size_t>(std::ceil((v1 - v0) / cell));

  OverlapResult r;
  for (std::size_t iv = 0; iv < nv; ++iv) {
    const double v = v0 + (static_cast<double>(iv) + 0.5) * cell;
    for (std::size_t iu = 0; iu < nu; ++iu) {
      const double u = u0 + (static_cast<double>(iu) + 0.5) * cell;
      const bool in_a = a.contains(u, v);
      const bool in_b = b.contains(u, v);
      r.cells_a += in_a;
      r.cells_b += in_b;
      r.cells_intersection += in_a && in_b;
      r.cells_union += in_a || in_b;
    }
  }
  if (r.cells_a == 0 || r.cells_b == 0)
    throw GeometryError("polygon_overlap: polygon with zero raster area");
  const double cell_area = cell * cell;
  r.intersection_area = static_cast<double>(r.cells_intersection) * cell_area;
  r.fraction_of_a =
      static_cast<double>(r.cells_intersection) / static_cast<double>(r.cells_a);
  r.fraction_of_b =
      static_cast<double>(r.cells_intersection) / static_cast<double>(r.cells_b);
  r.iou = r.cells_union
              ? static_cast<double>(r.cells_intersection) / static_cast<double>(r.cells_union)
              : 0.0;
  return r;
}

struct OcclusionRelation {
  std::size_t occluder = 0;
  std::size_t occluded = 0;
  double overlap_fraction = 0;  // intersection over the occluded object's area
  double iou = 0;
};

// The polygon whose bottom-most extent (max v in image coordinates) has the
// smaller value occludes the other; ties go to the lower id. The comparator
// is isolated here so the convention can be swapped in one place.
inline bool occludes_by_y_rule(double bottom_a, std::size_t id_a, double bottom_b,
                               std::size_t id_b) {
  if (bottom_a != bottom_b) return bottom_a < bottom_b;
  return id_a < id_b;
}

inline std::optional<OcclusionRelation> occlusion_order(const PolygonRegion& a, std::size_t id_a,
                                                        const PolygonRegion& b, std::size_t id_b,
                                                        std::size_t resolution = 256) {
  OverlapResult ov = polygon_overlap(a, b, resolution);
  if (ov.cells_intersection == 0) return std::nullopt;
  OcclusionRelation rel;
  if (occludes_by_y_rule(a.max_v(), id_a, b.max_v(), id_b)) {
    rel.occluder = id_a;
    rel.occluded = id_b;
    rel.overlap_fraction = ov.fraction_of_b;
  } else {
    rel.occluder = id_b;
    rel.occluded = id_a;
    rel.overlap_fraction = ov.fraction_of_a;
  }
  rel.iou = ov.iou;
  return rel;
}

// Fig-8 style encoding of the visible fraction.
inline int visibility_bucket(double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw GeometryError("visibility_bucket: fraction " + std::to_string(fraction) +
                        " outside [0,1]");
  if (fraction < 0.40) return 1;
  if (fraction < 0.60) return 2;
  if (fraction < 0.80) return 3;
  return 4;
}

inline const std::array<std::string, 8>& direction_labels() {
  static const std::array<std::string, 8> labels = {
      "front", "front-left", "left", "back-left", "back", "back-right", "right", "front-right"};
  return labels;
}

// Eight 45-degree sectors around the ego heading; positive angles turn left.
// Front is [-22.5, +22.5) degrees; every boundary belongs to the
// counterclockwise (next) sector.
inline std::string direction_label(double angle) {
  const double pi = std::numbers::pi;
  // normalize to (-pi, pi]
  double a = std::remainder(angle, 2 * pi);
  if (a <= -pi) a += 2 * pi;
  const double sector = (a + pi / 8) / (pi / 4);
  long idx = static_cast<long>(std::floor(sector)) % 8;
  if (idx < 0) idx += 8;
  return direction_labels()[static_cast<std::size_t>(idx)];
}

enum class Subset { N, O, D };

inline Subset subset_from_string(const std::string& s) {
  if (s == "N" || s == "n") return Subset::N;
  if (s == "O" || s == "o") return Subset::O;
  if (s == "D" || s == "d") return Subset::D;
  throw SchemaError("subset must be one of N, O, D (got '" + s + "')");
}

struct ObjectQuadruple {
  std::string category;
  std::string direction;
  double distance = 0;       // meters, raw
  long distance_meters = 0;  // rounded for rendered text
  std::optional<int> visibility;  // N/O subsets
  std::optional<double> speed;    // D subset
};

inline long round_half_away(double x) {
  return static_cast<long>(x >= 0 ? std::floor(x + 0.5) : std::ceil(x - 0.5));
}

struct AnnotatedObject {
  std::size_t id = 0;
  std::string category;
  std::optional<PolygonRegion> polygon;
  std::optional<std::array<double, 3>> position;  // ego meters (x fwd, y left, z up)
  std::optional<double> speed;                    // m/s
  std::optional<int> visibility;                  // from source metadata (subset N)
};

struct SceneFrame {
  std::vector<AnnotatedObject> objects;
  double ego_heading = 0;  // radians
};

namespace detail {

// Visible fraction of `self` given all polygons that occlude it: raster the
// own region, subtract cells covered by any occluder.
inline double visible_fraction(const PolygonRegion& self,
                               const std::vector<const PolygonRegion*>& occluders,
                               std::size_t resolution) {
  const double u0 = self.min_u(), v0 = self.min_v();
  const double span = std::max(self.max_u() - u0, self.max_v() - v0);
  if (!(span > 0)) throw GeometryError("visible_fraction: degenerate region");
  const double cell = span / static_cast<double>(resolution);
  const std::size_t nu = static_cast<std::size_t>(std::ceil((self.max_u() - u0) / cell));
  const std::size_t nv = static_cast<std::size_t>(std::ceil((self.max_v() - v0) / cell));
  std::size_t own = 0, hidden = 0;
  for (std::size_t iv = 0; iv < nv; ++iv) {
    const double v = v0 + (static_cast<double>(iv) + 0.5) * cell;
    for (std::size_t iu = 0; iu < nu; ++iu) {
      const double u = u0 + (static_cast<double>(iu) + 0.5) * cell;
      if (!self.contains(u, v)) continue;
      ++own;
      for (const PolygonRegion* occ : occluders) {
        if (occ->contains(u, v)) {
          ++hidden;
          break;
        }
      }
    }
  }
  if (own == 0) throw GeometryError("visible_fraction: zero raster area");
  return 1.0 - static_cast<double>(hidden) / static_cast<double>(own);
}

}  // namespace detail

// Assemble the quadruple for one object. Subset N and D take the distance
// from the 3-D position norm; subset O averages the depth map over the
// polygon. The fourth slot is a visibility bucket for N/O and the raw speed
// for D.
inline ObjectQuadruple build_quadruple(const AnnotatedObject& obj, const SceneFrame& frame,
                                       const DepthMap* depth, Subset subset,
                                       std::size_t raster_resolution = 256) {
  ObjectQuadruple q;
  q.category = obj.category;

  if (!obj.position)
    throw SchemaError("object " + std::to_string(obj.id) + ": missing /objects/position");
  const double angle =
      std::atan2((*obj.position)[1], (*obj.position)[0]) - frame.ego_heading;
  q.direction = direction_label(angle);

  if (subset == Subset::O) {
    if (!obj.polygon)
      throw SchemaError("object " + std::to_string(obj.id) + ": subset O needs /objects/polygon");
    if (!depth)
      throw SchemaError("object " + std::to_string(obj.id) + ": subset O needs a depth map");
    q.distance = mean_depth(*obj.polygon, *depth);
  } else {
    const auto& p = *obj.position;
    q.distance = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
  }
  q.distance_meters = round_half_away(q.distance);

  if (subset == Subset::D) {
    if (!obj.speed)
      throw SchemaError("object " + std::to_string(obj.id) + ": subset D needs /objects/speed");
    q.speed = obj.speed;
  } else if (subset == Subset::N) {
    if (!obj.visibility)
      throw SchemaError("object " + std::to_string(obj.id) +
                        ": subset N needs /objects/visibility");
    q.visibility = obj.visibility;
  } else {
    // subset O: visibility from geometry
    std::vector<const PolygonRegion*> occluders;
    for (const auto& other : frame.objects) {
      if (other.id == obj.id || !other.polygon) continue;
      auto rel = occlusion_order(*obj.polygon, obj.id, *other.polygon, other.id,
                                 raster_resolution);
      if (rel && rel->occluder == other.id) occluders.push_back(&*other.polygon);
    }
    double fraction = occluders.empty()
                          ? 1.0
                          : detail::visible_fraction(*obj.polygon, occluders, raster_resolution);
    q.visibility = visibility_bucket(std::clamp(fraction, 0.0, 1.0));
  }
  return q;
}

// ---- frame JSON ----

inline SceneFrame frame_from_json(const nlohmann::json& j) {
  SceneFrame frame;
  if (!j.contains("objects") || !j["objects"].is_array())
    throw SchemaError("/objects: missing or not an array");
  if (j.contains("ego")) {
    if (!j["ego"].contains("heading")) throw SchemaError("/ego/heading: missing");
    frame.ego_heading = j["ego"]["heading"].get<double>();
  }
  std::size_t i = 0;
  for (const auto& o : j["objects"]) {
    AnnotatedObject obj;
    const std::string at = "/objects/" + std::to_string(i);
    if (!o.contains("id")) throw SchemaError(at + "/id: missing");
    if (!o.contains("category")) throw SchemaError(at + "/category: missing");
    obj.id = o["id"].get<std::size_t>();
    obj.category = o["category"].get<std::string>();
    if (o.contains("polygon")) {
      std::vector<Point2> pts;
      for (const auto& p : o["polygon"]) {
        if (!p.is_array() || p.size() != 2) throw SchemaError(at + "/polygon: bad vertex");
        pts.push_back({p[0].get<double>(), p[1].get<double>()});
      }
      try {
        obj.polygon = PolygonRegion(std::move(pts));
      } catch (const GeometryError& e) {
        throw SchemaError(at + "/polygon: " + e.what());
      }
    }
    if (o.contains("position")) {
      const auto& p = o["position"];
      if (!p.is_array() || p.size() != 3) throw SchemaError(at + "/position: need [x,y,z]");
      obj.position = {{p[0].get<double>(), p[1].get<double>(), p[2].get<double>()}};
    }
    if (o.contains("speed")) obj.speed = o["speed"].get<double>();
    if (o.contains("visibility")) obj.visibility = o["visibility"].get<int>();
    ++i;
    frame.objects.push_back(std::move(obj));
  }
  return frame;
}

struct FrameAnnotation {
  std::vector<std::pair<std::size_t, ObjectQuadruple>> quadruples;  // (object id, quadruple)
  std::vector<OcclusionRelation> occlusions;
};

inline FrameAnnotation annotate_frame(const SceneFrame& frame, const DepthMap* depth,
                                      Subset subset, std::size_t raster_resolution = 256) {
  FrameAnnotation out;
  for (const auto& obj : frame.objects)
    out.quadruples.emplace_back(obj.id,
                                build_quadruple(obj, frame, depth, subset, raster_resolution));
  for (std::size_t i = 0; i < frame.objects.size(); ++i) {
    for (std::size_t j = i + 1; j < frame.objects.size(); ++j) {
      const auto& a = frame.objects[i];
      const auto& b = frame.objects[j];
      if (!a.polygon || !b.polygon) continue;
      auto rel = occlusion_order(*a.polygon, a.id, *b.polygon, b.id, raster_resolution);
      if (rel) out.occlusions.push_back(*rel);
    }
  }
  return out;
}

inline nlohmann::json annotation_to_json(const FrameAnnotation& ann) {
  nlohmann::json j;
  j["quadruples"] = nlohmann::json::array();
  for (const auto& [id, q] : ann.quadruples) {
    nlohmann::json o;
    o["id"] = id;
    o["category"] = q.category;
    o["direction"] = q.direction;
    o["distance"] = q.distance;
    o["distance_meters"] = q.distance_meters;
    if (q.visibility) o["visibility"] = *q.visibility;
    if (q.speed) o["speed"] = *q.speed;
    j["quadruples"].push_back(o);
  }
  j["occlusions"] = nlohmann::json::array();
  for (const auto& rel : ann.occlusions) {
    nlohmann::json o;
    o["occluder"] = rel.occluder;
    o["occluded"] = rel.occluded;
    o["visible_fraction"] = 1.0 - rel.overlap_fraction;
    o["iou"] = rel.iou;
    j["occlusions"].push_back(o);
  }
  return j;
}

}  // namespace panokit
