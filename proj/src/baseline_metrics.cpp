#include "shadowscope/baseline_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>
#include <json.hpp>

#include "shadowscope/error.hpp"
#include "shadowscope/shadow_region.hpp"

namespace shadowscope {

namespace bg = boost::geometry;

namespace {

using BgPoint = bg::model::d2::point_xy<double>;
using BgPolygon = bg::model::polygon<BgPoint, /*clockwise=*/false>;
using BgMulti = bg::model::multi_polygon<BgPolygon>;

BgPolygon to_bg(const Polygon2D& p) {
  BgPolygon out;
  for (const auto& v : p.vertices) out.outer().emplace_back(v.x, v.y);
  out.outer().emplace_back(p.vertices.front().x, p.vertices.front().y);
  return out;
}

double signed_area(const std::vector<Vec2>& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2& a = v[i];
    const Vec2& b = v[(i + 1) % v.size()];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * s;
}

using Complex = std::complex<double>;

// Centered samples scaled to unit Frobenius norm; returns the original norm.
double normalize_shape(std::vector<Complex>& z) {
  Complex mean = 0.0;
  for (const auto& c : z) mean += c;
  mean /= static_cast<double>(z.size());
  double norm2 = 0.0;
  for (auto& c : z) {
    c -= mean;
    norm2 += std::norm(c);
  }
  const double norm = std::sqrt(norm2);
  if (!(norm > 0.0)) throw DegenerateGeometryError("procrustes: shape collapses to a point");
  for (auto& c : z) c /= norm;
  return norm;
}

}  // namespace

double lpd_ratio(const Scene& scene, const BoundingBox3D& box) {
  const ShadowRegion wedge = propose_region(box, scene.geometry, HeightMode::bev());
  std::size_t inside = 0;
  std::size_t behind = 0;
  for (const auto& p : scene.cloud) {
    const double r = p.radial();
    if (r > scene.geometry.max_range) continue;
    const double rel = normalize_angle(p.azimuth() - wedge.angle_center());
    if (std::abs(rel) > wedge.half_width()) continue;
    ++inside;
    if (r > wedge.d_start) ++behind;
  }
  return inside == 0 ? 0.0 : static_cast<double>(behind) / static_cast<double>(inside);
}

Polygon2D make_polygon(std::vector<Vec2> vertices) {
  if (vertices.size() >= 2 && vertices.front() == vertices.back()) vertices.pop_back();
  if (vertices.size() < 3) throw InvalidInputError("polygon needs at least 3 vertices");
  for (const auto& v : vertices) {
    if (!std::isfinite(v.x) || !std::isfinite(v.y)) {
      throw InvalidInputError("polygon vertex is not finite");
    }
  }
  const double area = signed_area(vertices);
  if (!(std::abs(area) > 0.0)) throw InvalidInputError("polygon has zero area");
  if (area < 0.0) std::reverse(vertices.begin(), vertices.end());
  Polygon2D out{std::move(vertices)};
  std::string reason;
  if (!bg::is_valid(to_bg(out), reason)) {
    throw InvalidInputError("polygon is not simple: " + reason);
  }
  return out;
}

double polygon_area(const Polygon2D& polygon) { return signed_area(polygon.vertices); }

double polygon_iou(const Polygon2D& a, const Polygon2D& b) {
  const BgPolygon pa = to_bg(a);
  const BgPolygon pb = to_bg(b);
  const double area_a = bg::area(pa);
  const double area_b = bg::area(pb);
  if (!(area_a > 0.0) || !(area_b > 0.0)) {
    throw DegenerateGeometryError("polygon_iou: zero-area polygon");
  }
  BgMulti inter;
  bg::intersection(pa, pb, inter);
  const double i = std::clamp(bg::area(inter), 0.0, std::min(area_a, area_b));
  return i / (area_a + area_b - i);
}

std::vector<Vec2> resample_boundary(const Polygon2D& polygon, std::size_t n_samples) {
  if (n_samples < 3) throw InvalidInputError("resampling needs at least 3 samples");
  const auto& v = polygon.vertices;
  const std::size_t n = v.size();
  std::vector<double> cumulative(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = v[i];
    const Vec2& b = v[(i + 1) % n];
    cumulative[i + 1] = cumulative[i] + std::hypot(b.x - a.x, b.y - a.y);
  }
  const double perimeter = cumulative[n];
  if (!(perimeter > 0.0)) throw DegenerateGeometryError("polygon has zero perimeter");
  std::vector<Vec2> out;
  out.reserve(n_samples);
  std::size_t edge = 0;
  for (std::size_t k = 0; k < n_samples; ++k) {
    const double s = perimeter * static_cast<double>(k) / static_cast<double>(n_samples);
    while (edge + 1 < n && cumulative[edge + 1] <= s) ++edge;
    const double len = cumulative[edge + 1] - cumulative[edge];
    const double f = len > 0.0 ? (s - cumulative[edge]) / len : 0.0;
    const Vec2& a = v[edge];
    const Vec2& b = v[(edge + 1) % n];
    out.push_back({a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)});
  }
  return out;
}

ProcrustesResult procrustes(const Polygon2D& ground_truth, const Polygon2D& computed,
                            std::size_t n_samples) {
  auto to_complex = [&](const Polygon2D& p) {
    std::vector<Complex> z;
    for (const auto& s : resample_boundary(p, n_samples)) z.emplace_back(s.x, s.y);
    return z;
  };
  std::vector<Complex> a = to_complex(ground_truth);
  std::vector<Complex> b = to_complex(computed);
  const double size_a = normalize_shape(a);
  const double size_b = normalize_shape(b);
  // With unit-norm centered shapes, the residual after the best rotation of b
  // onto a is 1 - |sum a_i conj(b_i)|^2.
  double best = 0.0;
  for (std::size_t shift = 0; shift < n_samples; ++shift) {
    Complex acc = 0.0;
    for (std::size_t i = 0; i < n_samples; ++i) acc += a[i] * std::conj(b[(i + shift) % n_samples]);
    best = std::max(best, std::norm(acc));
  }
  ProcrustesResult r;
  r.similarity = std::clamp(best, 0.0, 1.0);
  r.scale = size_a / size_b;
  return r;
}

namespace {

Annotation annotation_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw MalformedInputError("annotation must be a JSON object");
  for (const char* key : {"scene_id", "object_id", "polygon"}) {
    if (!j.contains(key)) throw MalformedInputError(std::string("annotation lacks ") + key);
  }
  Annotation a;
  try {
    a.scene_id = j.at("scene_id").get<std::string>();
    const auto id = j.at("object_id").get<long long>();
    if (id < 0) throw MalformedInputError("annotation object_id is negative");
    a.object_id = static_cast<std::size_t>(id);
    std::vector<Vec2> vertices;
    for (const auto& v : j.at("polygon")) {
      if (!v.is_array() || v.size() != 2) throw MalformedInputError("polygon vertex must be [x, y]");
      vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
    }
    a.polygon = make_polygon(std::move(vertices));
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInputError(std::string("annotation: ") + e.what());
  } catch (const InvalidInputError& e) {
    throw MalformedInputError(std::string("annotation polygon: ") + e.what());
  }
  return a;
}

}  // namespace

std::vector<Annotation> parse_annotations(std::string_view text) {
  std::vector<Annotation> out;
  const auto whole = nlohmann::json::parse(text, nullptr, false);
  if (!whole.is_discarded()) {
    if (whole.is_array()) {
      for (const auto& j : whole) out.push_back(annotation_from_json(j));
    } else {
      out.push_back(annotation_from_json(whole));
    }
    return out;
  }
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw MalformedInputError("annotations: invalid JSON on line", line_no);
    }
    try {
      out.push_back(annotation_from_json(j));
    } catch (const MalformedInputError& e) {
      throw MalformedInputError(e.what(), line_no);
    }
  }
  return out;
}

std::string format_annotations(const std::vector<Annotation>& annotations) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& a : annotations) {
    nlohmann::ordered_json j;
    j["scene_id"] = a.scene_id;
    j["object_id"] = a.object_id;
    nlohmann::ordered_json poly = nlohmann::ordered_json::array();
    for (const auto& v : a.polygon.vertices) poly.push_back({v.x, v.y});
    j["polygon"] = std::move(poly);
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

}  // namespace shadowscope
