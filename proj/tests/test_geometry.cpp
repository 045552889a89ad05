#include "skillgen/geometry.hpp"
#include "skillgen/rng.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>

using namespace skillgen;

namespace {

constexpr double kPi = 3.14159265358979323846;

Pose random_pose(Rng& rng, double span = 2.0) {
    const Eigen::Vector3d t(rng.uniform(-span, span), rng.uniform(-span, span),
                            rng.uniform(-span, span));
    return Pose::from_axis_angle(rng.unit_vector(), rng.uniform(0.0, kPi), t);
}

}  // namespace

TEST_CASE("compose: identity, inverse, analytic case") {
    Rng rng(11);
    const Pose p = random_pose(rng);
    CHECK(approx_equal(compose(Pose::identity(), p), p));
    CHECK(approx_equal(compose(p, Pose::identity()), p));
    CHECK(approx_equal(compose(p, inverse(p)), Pose::identity()));

    // Rz(90deg) at origin, then translate (1,0,0): net translation (0,1,0).
    const Pose rz = Pose::rotate_z(kPi / 2);
    const Pose got = compose(rz, Pose::from_translation(1, 0, 0));
    CHECK(got.translation.isApprox(Eigen::Vector3d(0, 1, 0), 1e-12));
    CHECK(approx_equal(Pose(Eigen::Vector3d::Zero(), got.rotation), rz, 1e-12));
}

TEST_CASE("inverse: trivial cases and homogeneous-matrix oracle") {
    CHECK(approx_equal(inverse(Pose::identity()), Pose::identity()));
    CHECK(inverse(Pose::from_translation(1, 2, 3))
              .translation.isApprox(Eigen::Vector3d(-1, -2, -3), 1e-12));

    Rng rng(42);
    for (int i = 0; i < 200; ++i) {
        const Pose p = random_pose(rng);
        const Eigen::Matrix4d m = p.matrix().inverse();  // independent 4x4 route
        const Eigen::Matrix4d got = inverse(p).matrix();
        CHECK((m - got).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("group laws hold to 1e-9 on random poses") {
    Rng rng(7);
    for (int i = 0; i < 500; ++i) {
        const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
        CHECK(approx_equal(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-9));
        CHECK(approx_equal(compose(inverse(a), a), Pose::identity(), 1e-9));
        CHECK(std::abs(a.rotation.norm() - 1.0) < 1e-9);
        CHECK(a.rotation.w() >= 0.0);
    }
}

TEST_CASE("interpolate: endpoints, midpoint translation, midpoint rotation") {
    Rng rng(3);
    const Pose a = random_pose(rng), b = random_pose(rng);
    CHECK(approx_equal(interpolate(a, b, 0.0), a, 1e-12));
    CHECK(approx_equal(interpolate(a, b, 1.0), b, 1e-12));

    const Pose mid = interpolate(Pose::identity(), Pose::from_translation(2, 0, 0), 0.5);
    CHECK(approx_equal(mid, Pose::from_translation(1, 0, 0), 1e-12));

    const Pose half = interpolate(Pose::identity(), Pose::rotate_z(kPi / 2), 0.5);
    CHECK(approx_equal(half, Pose::rotate_z(kPi / 4), 1e-12));
}

TEST_CASE("interpolation is left-invariant") {
    Rng rng(13);
    for (int i = 0; i < 200; ++i) {
        const Pose g = random_pose(rng), a = random_pose(rng), b = random_pose(rng);
        const double s = rng.uniform();
        CHECK(approx_equal(compose(g, interpolate(a, b, s)),
                           interpolate(compose(g, a), compose(g, b), s), 1e-9));
    }
}

TEST_CASE("pose_distance") {
    Rng rng(5);
    const Pose p = random_pose(rng);
    const auto [dt0, dr0] = pose_distance(p, p);
    CHECK(dt0 == 0.0);
    CHECK(dr0 < 1e-12);

    const auto [dt, dr] =
        pose_distance(Pose::from_translation(0, 0, 0), Pose::from_translation(3, 4, 0));
    CHECK(dt == Catch::Approx(5.0));
    CHECK(dr < 1e-12);

    const auto [dt2, dr2] = pose_distance(Pose::rotate_z(10 * kPi / 180),
                                          Pose::rotate_z(70 * kPi / 180));
    CHECK(dt2 == 0.0);
    CHECK(dr2 == Catch::Approx(60 * kPi / 180).margin(1e-12));
}

TEST_CASE("quaternion canonicalization: q and -q compare equal") {
    Rng rng(17);
    const Pose p = random_pose(rng);
    const Pose flipped(p.translation, Eigen::Quaterniond(-p.rotation.w(), -p.rotation.x(),
                                                         -p.rotation.y(), -p.rotation.z()));
    CHECK(p.rotation.coeffs().isApprox(flipped.rotation.coeffs(), 1e-15));
    CHECK(approx_equal(p, flipped, 1e-15));
}

TEST_CASE("sample_pose_noise: zero specs give identity") {
    Rng rng(1);
    const Pose p = sample_pose_noise(rng, {0.0}, {0.0});
    CHECK(approx_equal(p, Pose::identity(), 1e-15));
}

TEST_CASE("sample_pose_noise: default bounds hold for every sample") {
    const TranslationNoiseSpec t{0.08};
    const RotationNoiseSpec r{80.0 * kPi / 180.0};
    Rng rng(99);
    for (int i = 0; i < 2000; ++i) {
        const Pose n = sample_pose_noise(rng, t, r);
        CHECK(n.translation.cwiseAbs().maxCoeff() <= 0.08 + 1e-12);
        const auto [dt, dr] = pose_distance(Pose::identity(), n);
        CHECK(dr <= 80.0 * kPi / 180.0 + 1e-9);
    }
}

TEST_CASE("sample_pose_noise: empirical mean angle is r/2 within 2%") {
    const RotationNoiseSpec r{80.0 * kPi / 180.0};
    Rng rng(123);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const Pose s = sample_pose_noise(rng, {0.0}, r);
        sum += pose_distance(Pose::identity(), s).second;
    }
    const double mean = sum / n;
    CHECK(mean == Catch::Approx(r.max_angle / 2).epsilon(0.02));
}

TEST_CASE("sample_pose_noise: same seed is bit-identical") {
    Rng a(777), b(777);
    for (int i = 0; i < 50; ++i) {
        const Pose pa = sample_pose_noise(a, {0.08}, {1.4});
        const Pose pb = sample_pose_noise(b, {0.08}, {1.4});
        CHECK(pa.to_array() == pb.to_array());
    }
}

TEST_CASE("serialization: 7-tuple round-trip and corrupt quaternion rejection") {
    Rng rng(31);
    const Pose p = random_pose(rng);
    const auto a = p.to_array();
    const Pose q = Pose::from_array(a);
    CHECK(q.to_array() == a);  // bit-exact round trip

    std::array<double, 7> bad{0, 0, 0, 0.5, 0, 0, 0};  // norm 0.5
    CHECK_THROWS_AS(Pose::from_array(bad), std::invalid_argument);
}

TEST_CASE("rotation_log / rotation_exp round trip") {
    Rng rng(57);
    for (int i = 0; i < 100; ++i) {
        const Eigen::Vector3d v = rng.uniform(0.0, 3.0) * rng.unit_vector();
        const Eigen::Vector3d back = rotation_log(rotation_exp(v));
        CHECK((back - v).norm() < 1e-9);
    }
}
