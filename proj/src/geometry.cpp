#include "floorplan/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace floorplan::geometry {

PlaneCartesian PlaneCartesian::from_point_normal(const Point3& p0, const Vec3& normal) {
  PlaneCartesian pl;
  pl.n = normal.normalized();
  pl.d = -pl.n.dot(p0);
  return pl;
}

PlaneCartesian PlaneCartesian::canonical() const {
  for (int i = 0; i < 3; ++i) {
    if (std::abs(n[i]) > kGeomEps) {
      if (n[i] < 0.0) return PlaneCartesian{-n, -d};
      return *this;
    }
  }
  return *this;
}

bool PlaneCartesian::valid() const {
  return n.allFinite() && std::isfinite(d) && std::abs(n.norm() - 1.0) <= 1e-9;
}

RigidTransform RigidTransform::from_quaternion(const Eigen::Quaterniond& q, const Vec3& t) {
  RigidTransform T;
  T.rotation = q.normalized().toRotationMatrix();
  T.translation = t;
  return T;
}

RigidTransform RigidTransform::yaw(double radians, const Vec3& t) {
  RigidTransform T;
  T.rotation = Eigen::AngleAxisd(radians, Vec3::UnitZ()).toRotationMatrix();
  T.translation = t;
  return T;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

bool RigidTransform::valid() const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Eigen::Matrix3d should_be_identity = rotation.transpose() * rotation;
  return (should_be_identity - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-9 &&
         std::abs(rotation.determinant() - 1.0) <= 1e-9;
}

double point_to_plane_distance(const Point3& p, const PlaneCartesian& pl) {
  return std::abs(pl.signed_distance(p));
}

PlaneCartesian transform_plane(const PlaneCartesian& pl, const RigidTransform& T) {
  // n'.(R p + t) + d' = 0  with  n' = R n  gives  d' = d - n'.t
  PlaneCartesian out;
  out.n = (T.rotation * pl.n).normalized();
  out.d = pl.d - out.n.dot(T.translation);
  return out;
}

double normal_angle(const Vec3& a, const Vec3& b) {
  const double c = std::abs(a.normalized().dot(b.normalized()));
  return std::acos(std::clamp(c, 0.0, 1.0));
}

double line_angle(const Vec2& a, const Vec2& b) {
  const double c = std::abs(a.normalized().dot(b.normalized()));
  return std::acos(std::clamp(c, 0.0, 1.0));
}

namespace {

struct IntersectionResult {
  enum Kind { kNone, kPoint, kOverlap } kind = kNone;
  Point2 point = Point2::Zero();
};

IntersectionResult intersect(const Segment2& s1, const Segment2& s2) {
  const Vec2 d1 = s1.b - s1.a;
  const Vec2 d2 = s2.b - s2.a;
  const double l1 = d1.norm();
  const double l2 = d2.norm();
  const Vec2 w = s2.a - s1.a;
  const double denom = cross2(d1, d2);

  if (std::abs(denom) <= kGeomEps * l1 * l2) {
    // Parallel; collinear only if s2.a lies on the line through s1.
    if (std::abs(cross2(w, d1)) > kGeomEps * l1) return {};
    const double inv = 1.0 / (l1 * l1);
    double t0 = w.dot(d1) * inv;
    double t1 = (s2.b - s1.a).dot(d1) * inv;
    if (t0 > t1) std::swap(t0, t1);
    const double lo = std::max(0.0, t0);
    const double hi = std::min(1.0, t1);
    const double tol = kGeomEps / l1;
    if (hi < lo - tol) return {};
    if ((hi - lo) * l1 > kGeomEps) return {IntersectionResult::kOverlap, {}};
    return {IntersectionResult::kPoint, s1.at(std::clamp(0.5 * (lo + hi), 0.0, 1.0))};
  }

  const double t = cross2(w, d2) / denom;
  const double u = cross2(w, d1) / denom;
  const double tol1 = kGeomEps / l1;
  const double tol2 = kGeomEps / l2;
  if (t < -tol1 || t > 1.0 + tol1 || u < -tol2 || u > 1.0 + tol2) return {};
  return {IntersectionResult::kPoint, s1.at(std::clamp(t, 0.0, 1.0))};
}

}  // namespace

std::optional<Point2> segment_intersection(const Segment2& s1, const Segment2& s2) {
  const auto r = intersect(s1, s2);
  switch (r.kind) {
    case IntersectionResult::kOverlap:
      throw CollinearOverlap();
    case IntersectionResult::kPoint:
      return r.point;
    default:
      return std::nullopt;
  }
}

bool segments_touch(const Segment2& s1, const Segment2& s2) {
  return intersect(s1, s2).kind != IntersectionResult::kNone;
}

double project_param(const Point2& p, const Segment2& s) {
  const Vec2 d = s.b - s.a;
  return (p - s.a).dot(d) / d.squaredNorm();
}

double point_segment_distance(const Point2& p, const Segment2& s) {
  const double t = std::clamp(project_param(p, s), 0.0, 1.0);
  return (p - s.at(t)).norm();
}

}  // namespace floorplan::geometry
