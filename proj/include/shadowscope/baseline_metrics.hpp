#pragma once

// Frustum point-ratio baseline and shadow-shape agreement metrics (polygon
// IoU, Procrustes similarity and scale) against annotated outlines.

#include <string>
#include <string_view>
#include <vector>

#include "shadowscope/core_model.hpp"

namespace shadowscope {

/// Ratio of frustum points radially beyond the box's far corner to all points
/// in the frustum (the corner wedge out to max range). Empty frustum gives 0.
/// Throws DegenerateGeometryError when the wedge is undefined.
double lpd_ratio(const Scene& scene, const BoundingBox3D& box);

/// Simple polygon; construction through make_polygon validates it and
/// returns counterclockwise vertex order.
struct Polygon2D {
  std::vector<Vec2> vertices;
};

/// Throws InvalidInputError for fewer than 3 vertices, non-finite
/// coordinates, self-intersection or zero area. Clockwise input is reversed.
Polygon2D make_polygon(std::vector<Vec2> vertices);

double polygon_area(const Polygon2D& polygon);

double polygon_iou(const Polygon2D& a, const Polygon2D& b);

struct ProcrustesResult {
  double similarity = 0.0;  // 1 - residual disparity, in [0, 1]
  double scale = 0.0;       // size(ground truth) / size(computed)
};

/// Both outlines are resampled to `n_samples` points equally spaced by arc
/// length; correspondence is the cyclic shift with the least disparity after
/// centering, unit-size normalization and the optimal rotation.
ProcrustesResult procrustes(const Polygon2D& ground_truth, const Polygon2D& computed,
                            std::size_t n_samples = 64);

/// Points equally spaced by arc length along the closed boundary, starting at
/// the first vertex.
std::vector<Vec2> resample_boundary(const Polygon2D& polygon, std::size_t n_samples);

struct Annotation {
  std::string scene_id;
  std::size_t object_id = 0;
  Polygon2D polygon;
};

/// Accepts a JSON array of {scene_id, object_id, polygon: [[x, y], ...]}
/// objects, a single such object, or one object per line.
std::vector<Annotation> parse_annotations(std::string_view text);
std::string format_annotations(const std::vector<Annotation>& annotations);

}  // namespace shadowscope
