#pragma once

// Narrow-phase distance/overlap tests between the three shape primitives
// (sphere, box, capsule). Everything is expressed through exact distance
// functions so overlap is monotone in the radii.

#include "skillgen/geometry.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <stdexcept>
#include <string>

namespace skillgen {

struct Shape {
    enum class Kind { sphere, box, capsule };

    Kind kind = Kind::sphere;
    double radius = 0.0;                                   // sphere, capsule
    Eigen::Vector3d half_extents = Eigen::Vector3d::Zero();  // box
    Eigen::Vector3d a = Eigen::Vector3d::Zero();           // capsule endpoints (local)
    Eigen::Vector3d b = Eigen::Vector3d::Zero();

    static Shape sphere(double r) {
        Shape s;
        s.kind = Kind::sphere;
        s.radius = r;
        return s;
    }

    static Shape box(const Eigen::Vector3d& half) {
        Shape s;
        s.kind = Kind::box;
        s.half_extents = half;
        return s;
    }

    static Shape capsule(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double r) {
        Shape s;
        s.kind = Kind::capsule;
        s.a = a;
        s.b = b;
        s.radius = r;
        return s;
    }

    // Radius of a sphere centered at the local origin that contains the shape.
    double bounding_radius() const {
        switch (kind) {
            case Kind::sphere: return radius;
            case Kind::box: return half_extents.norm();
            case Kind::capsule: return std::max(a.norm(), b.norm()) + radius;
        }
        return 0.0;
    }
};

inline double point_segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                     const Eigen::Vector3d& b) {
    const Eigen::Vector3d ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 < 1e-18) return (p - a).norm();
    const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

inline double segment_segment_distance(const Eigen::Vector3d& p1, const Eigen::Vector3d& q1,
                                       const Eigen::Vector3d& p2, const Eigen::Vector3d& q2) {
    // Ericson, Real-Time Collision Detection, 5.1.9.
    const Eigen::Vector3d d1 = q1 - p1;
    const Eigen::Vector3d d2 = q2 - p2;
    const Eigen::Vector3d r = p1 - p2;
    const double a = d1.squaredNorm();
    const double e = d2.squaredNorm();
    const double f = d2.dot(r);
    double s = 0.0, t = 0.0;
    if (a < 1e-18 && e < 1e-18) return r.norm();
    if (a < 1e-18) {
        t = std::clamp(f / e, 0.0, 1.0);
    } else {
        const double c = d1.dot(r);
        if (e < 1e-18) {
            s = std::clamp(-c / a, 0.0, 1.0);
        } else {
            const double b = d1.dot(d2);
            const double denom = a * e - b * b;
            if (denom > 1e-18) s = std::clamp((b * f - c * e) / denom, 0.0, 1.0);
            t = (b * s + f) / e;
            if (t < 0.0) {
                t = 0.0;
                s = std::clamp(-c / a, 0.0, 1.0);
            } else if (t > 1.0) {
                t = 1.0;
                s = std::clamp((b - c) / a, 0.0, 1.0);
            }
        }
    }
    return ((p1 + s * d1) - (p2 + t * d2)).norm();
}

// Distance from a world point to an oriented box.
inline double point_box_distance(const Eigen::Vector3d& p, const Pose& box_pose,
                                 const Eigen::Vector3d& half) {
    const Eigen::Vector3d local = inverse(box_pose).apply(p);
    const Eigen::Vector3d clamped = local.cwiseMax(-half).cwiseMin(half);
    return (local - clamped).norm();
}

// Distance from a world segment to an oriented box. Distance-to-convex-set is
// convex along the segment, so ternary search converges to the minimum.
inline double segment_box_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                   const Pose& box_pose, const Eigen::Vector3d& half) {
    double lo = 0.0, hi = 1.0;
    auto dist = [&](double t) { return point_box_distance(a + t * (b - a), box_pose, half); };
    for (int i = 0; i < 100; ++i) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        if (dist(m1) <= dist(m2))
            hi = m2;
        else
            lo = m1;
    }
    return std::min({dist(lo), dist(0.5 * (lo + hi)), dist(hi)});
}

// Separating-axis test for two oriented boxes (15 axes).
inline bool boxes_overlap(const Pose& pa, const Eigen::Vector3d& ha, const Pose& pb,
                          const Eigen::Vector3d& hb) {
    const Eigen::Matrix3d ra = pa.rotation.toRotationMatrix();
    const Eigen::Matrix3d rb = pb.rotation.toRotationMatrix();
    const Eigen::Vector3d d = pb.translation - pa.translation;
    auto separated = [&](const Eigen::Vector3d& axis) {
        const double len = axis.norm();
        if (len < 1e-12) return false;  // degenerate cross product, skip axis
        const Eigen::Vector3d u = axis / len;
        double proj_a = 0.0, proj_b = 0.0;
        for (int i = 0; i < 3; ++i) {
            proj_a += ha[i] * std::abs(u.dot(ra.col(i)));
            proj_b += hb[i] * std::abs(u.dot(rb.col(i)));
        }
        return std::abs(u.dot(d)) > proj_a + proj_b;
    };
    for (int i = 0; i < 3; ++i) {
        if (separated(ra.col(i))) return false;
        if (separated(rb.col(i))) return false;
    }
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (separated(ra.col(i).cross(rb.col(j)))) return false;
    return true;
}

// Exact separation distance between two posed shapes; negative/zero means the
// surfaces touch or penetrate. Box-box pairs only report overlap (distance is
// not needed there), returning -1 on overlap and +1 otherwise.
inline double shape_distance(const Shape& sa, const Pose& ta, const Shape& sb, const Pose& tb) {
    using K = Shape::Kind;
    if (sa.kind == K::box && sb.kind != K::box) return shape_distance(sb, tb, sa, ta);
    if (sa.kind == K::capsule && sb.kind == K::sphere) return shape_distance(sb, tb, sa, ta);

    if (sa.kind == K::sphere && sb.kind == K::sphere)
        return (ta.translation - tb.translation).norm() - sa.radius - sb.radius;

    if (sa.kind == K::sphere && sb.kind == K::capsule)
        return point_segment_distance(ta.translation, tb.apply(sb.a), tb.apply(sb.b)) -
               sa.radius - sb.radius;

    if (sa.kind == K::sphere && sb.kind == K::box)
        return point_box_distance(ta.translation, tb, sb.half_extents) - sa.radius;

    if (sa.kind == K::capsule && sb.kind == K::capsule)
        return segment_segment_distance(ta.apply(sa.a), ta.apply(sa.b), tb.apply(sb.a),
                                        tb.apply(sb.b)) -
               sa.radius - sb.radius;

    if (sa.kind == K::capsule && sb.kind == K::box)
        return segment_box_distance(ta.apply(sa.a), ta.apply(sa.b), tb, sb.half_extents) -
               sa.radius;

    return boxes_overlap(ta, sa.half_extents, tb, sb.half_extents) ? -1.0 : 1.0;
}

inline bool shapes_overlap(const Shape& sa, const Pose& ta, const Shape& sb, const Pose& tb) {
    return shape_distance(sa, ta, sb, tb) <= 0.0;
}

}  // namespace skillgen
