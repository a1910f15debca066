#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <optional>

#include "floorplan/errors.hpp"

namespace floorplan::geometry {

using Point3 = Eigen::Vector3d;
using Point2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

/// Tolerance used by the intersection and collinearity predicates (meters).
inline constexpr double kGeomEps = 1e-9;

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Plane n.p + d = 0 with unit normal n; d = -n.p0 for any p0 on the plane.
struct PlaneCartesian {
  Vec3 n{0.0, 0.0, 1.0};
  double d{0.0};

  [[nodiscard]] double signed_distance(const Point3& p) const { return n.dot(p) + d; }

  /// Plane through p0 with normal n (normalized here).
  static PlaneCartesian from_point_normal(const Point3& p0, const Vec3& normal);

  /// The same plane with its normal flipped so that the first component whose
  /// magnitude exceeds kGeomEps is positive.
  [[nodiscard]] PlaneCartesian canonical() const;

  [[nodiscard]] bool valid() const;
};

/// Rigid motion p -> R p + t.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_quaternion(const Eigen::Quaterniond& q, const Vec3& t);
  static RigidTransform yaw(double radians, const Vec3& t = Vec3::Zero());

  [[nodiscard]] Point3 apply(const Point3& p) const { return rotation * p + translation; }
  [[nodiscard]] Vec3 rotate(const Vec3& v) const { return rotation * v; }
  [[nodiscard]] RigidTransform inverse() const;
  /// (*this) o other: first other, then this.
  [[nodiscard]] RigidTransform compose(const RigidTransform& other) const;
  [[nodiscard]] Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation); }

  [[nodiscard]] bool valid() const;
};

struct Segment2 {
  Point2 a;
  Point2 b;

  [[nodiscard]] double length() const { return (b - a).norm(); }
  [[nodiscard]] Vec2 direction() const { return (b - a).normalized(); }
  [[nodiscard]] Point2 at(double s) const { return a + s * (b - a); }
};

class CollinearOverlap : public Error {
 public:
  CollinearOverlap() : Error("segments overlap along a common sub-segment") {}
};

[[nodiscard]] double point_to_plane_distance(const Point3& p, const PlaneCartesian& pl);

/// Maps the plane into the frame reached by T: every point p on the input maps
/// to T(p) on the output. Orientation of the normal is preserved.
[[nodiscard]] PlaneCartesian transform_plane(const PlaneCartesian& pl, const RigidTransform& T);

/// Unoriented angle between plane normals, radians in [0, pi/2].
[[nodiscard]] double normal_angle(const Vec3& a, const Vec3& b);

/// Unoriented angle between two 2D directions, radians in [0, pi/2].
[[nodiscard]] double line_angle(const Vec2& a, const Vec2& b);

/// Single intersection point of two closed segments, or nullopt when disjoint.
/// Throws CollinearOverlap when they share a sub-segment of positive length.
[[nodiscard]] std::optional<Point2> segment_intersection(const Segment2& s1, const Segment2& s2);

/// True when the closed segments touch or overlap, collinear cases included.
[[nodiscard]] bool segments_touch(const Segment2& s1, const Segment2& s2);

[[nodiscard]] double point_segment_distance(const Point2& p, const Segment2& s);

/// Parameter of the orthogonal projection of p onto the line through s
/// (0 at a, 1 at b), unclamped.
[[nodiscard]] double project_param(const Point2& p, const Segment2& s);

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace floorplan::geometry
