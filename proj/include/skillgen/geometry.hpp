#pragma once

// SE(3) poses as translation + unit quaternion (w,x,y,z), the currency for
// every frame in the system: end-effector targets, object poses, object-frame
// action storage. Quaternions are kept unit-norm and canonical (w >= 0) so
// that equality and serialization are well-defined; q and -q compare equal.

#include "skillgen/rng.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace skillgen {

struct Pose {
    Eigen::Vector3d translation{Eigen::Vector3d::Zero()};
    Eigen::Quaterniond rotation{Eigen::Quaterniond::Identity()};

    Pose() = default;

    Pose(const Eigen::Vector3d& t, const Eigen::Quaterniond& q)
        : translation(t), rotation(q) {
        // Renormalize only when drifted; leaves already-unit bit patterns
        // intact so save/load round-trips are exact.
        const double n2 = rotation.squaredNorm();
        if (std::abs(n2 - 1.0) > 1e-12) {
            if (n2 < 1e-24) throw std::invalid_argument("Pose: zero quaternion");
            rotation.coeffs() /= std::sqrt(n2);
        }
        if (rotation.w() < 0.0) rotation.coeffs() = -rotation.coeffs();
    }

    static Pose identity() { return {}; }

    static Pose from_translation(double x, double y, double z) {
        return Pose(Eigen::Vector3d(x, y, z), Eigen::Quaterniond::Identity());
    }

    static Pose from_translation(const Eigen::Vector3d& t) {
        return Pose(t, Eigen::Quaterniond::Identity());
    }

    static Pose from_axis_angle(const Eigen::Vector3d& axis, double angle,
                                const Eigen::Vector3d& t = Eigen::Vector3d::Zero()) {
        return Pose(t, Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized())));
    }

    static Pose rotate_x(double angle) { return from_axis_angle(Eigen::Vector3d::UnitX(), angle); }
    static Pose rotate_y(double angle) { return from_axis_angle(Eigen::Vector3d::UnitY(), angle); }
    static Pose rotate_z(double angle) { return from_axis_angle(Eigen::Vector3d::UnitZ(), angle); }

    // Transform a point: R p + t.
    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }

    // Rotate a direction (no translation).
    Eigen::Vector3d rotate(const Eigen::Vector3d& v) const { return rotation * v; }

    Eigen::Matrix4d matrix() const {
        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        m.block<3, 3>(0, 0) = rotation.toRotationMatrix();
        m.block<3, 1>(0, 3) = translation;
        return m;
    }

    // Wire format: [tx, ty, tz, qw, qx, qy, qz].
    std::array<double, 7> to_array() const {
        return {translation.x(), translation.y(), translation.z(),
                rotation.w(),    rotation.x(),    rotation.y(),    rotation.z()};
    }

    static Pose from_array(const std::array<double, 7>& a) {
        Eigen::Quaterniond q(a[3], a[4], a[5], a[6]);
        const double n = q.norm();
        if (std::abs(n - 1.0) > 1e-6)
            throw std::invalid_argument("Pose: quaternion norm " + std::to_string(n) +
                                        " too far from 1");
        return Pose(Eigen::Vector3d(a[0], a[1], a[2]), q);
    }
};

inline Pose compose(const Pose& a, const Pose& b) {
    return Pose(a.translation + a.rotation * b.translation, a.rotation * b.rotation);
}

inline Pose inverse(const Pose& p) {
    const Eigen::Quaterniond qi = p.rotation.conjugate();
    return Pose(-(qi * p.translation), qi);
}

// Linear in translation, shortest-arc slerp in rotation. s in [0, 1].
inline Pose interpolate(const Pose& a, const Pose& b, double s) {
    s = std::clamp(s, 0.0, 1.0);
    return Pose((1.0 - s) * a.translation + s * b.translation, a.rotation.slerp(s, b.rotation));
}

// (translation distance in meters, geodesic rotation angle in [0, pi]).
inline std::pair<double, double> pose_distance(const Pose& a, const Pose& b) {
    return {(a.translation - b.translation).norm(), a.rotation.angularDistance(b.rotation)};
}

inline bool approx_equal(const Pose& a, const Pose& b, double tol = 1e-9) {
    const auto [dt, dr] = pose_distance(a, b);
    return dt <= tol && dr <= tol;
}

// Rotation vector (axis * angle) of q, angle in [0, pi].
inline Eigen::Vector3d rotation_log(const Eigen::Quaterniond& q) {
    Eigen::AngleAxisd aa(q.w() >= 0.0 ? q : Eigen::Quaterniond(-q.coeffs()));
    return aa.angle() * aa.axis();
}

// exp of a rotation vector.
inline Eigen::Quaterniond rotation_exp(const Eigen::Vector3d& v) {
    const double angle = v.norm();
    if (angle < 1e-14) return Eigen::Quaterniond::Identity();
    return Eigen::Quaterniond(Eigen::AngleAxisd(angle, v / angle));
}

struct TranslationNoiseSpec {
    double half_width = 0.0;  // per-axis uniform bound, meters
};

struct RotationNoiseSpec {
    double max_angle = 0.0;  // radians; sampled angle uniform in [0, max_angle]
};

// Translation per-axis uniform in [-t, t]; rotation about a uniformly random
// axis with angle uniform in [0, r]. Draw order is fixed: 3 translations,
// then the axis, then the angle.
inline Pose sample_pose_noise(Rng& rng, const TranslationNoiseSpec& t_spec,
                              const RotationNoiseSpec& r_spec) {
    if (t_spec.half_width < 0.0 || r_spec.max_angle < 0.0)
        throw std::invalid_argument("sample_pose_noise: negative noise bound");
    Eigen::Vector3d t;
    for (int i = 0; i < 3; ++i)
        t[i] = t_spec.half_width > 0.0 ? rng.uniform(-t_spec.half_width, t_spec.half_width) : 0.0;
    if (r_spec.max_angle <= 0.0) return Pose::from_translation(t);
    const Eigen::Vector3d axis = rng.unit_vector();
    const double angle = rng.uniform(0.0, r_spec.max_angle);
    return Pose::from_axis_angle(axis, angle, t);
}

}  // namespace skillgen
