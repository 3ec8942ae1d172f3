#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "equibim/geometry.hpp"
#include "equibim/rng.hpp"

using namespace equibim;

namespace {

UnitQuat random_unit_quat(Rng& rng) {
    UnitQuat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    return q.normalized().canonical();
}

RigidTransform random_transform(Rng& rng) {
    return {random_unit_quat(rng),
            {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}};
}

// Independent oracle: apply T^-1 R_y T as literal 4x4 homogeneous matrices.
Vec3 reflect_point_homogeneous_oracle(const Vec3& p, const RigidTransform& t) {
    double T[16], Ti[16], M[16];
    auto fill = [](double* h, const Mat3& r, const Vec3& tr) {
        h[0] = r.m[0]; h[1] = r.m[1]; h[2] = r.m[2]; h[3] = tr.x;
        h[4] = r.m[3]; h[5] = r.m[4]; h[6] = r.m[5]; h[7] = tr.y;
        h[8] = r.m[6]; h[9] = r.m[7]; h[10] = r.m[8]; h[11] = tr.z;
        h[12] = 0; h[13] = 0; h[14] = 0; h[15] = 1;
    };
    fill(T, quat_to_matrix(t.rotation), t.translation);
    RigidTransform inv = invert(t);
    fill(Ti, quat_to_matrix(inv.rotation), inv.translation);
    fill(M, reflection_matrix_y(), {0, 0, 0});
    auto mul = [](const double* a, const double* b, double* c) {
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                double s = 0;
                for (int k = 0; k < 4; ++k) s += a[4 * i + k] * b[4 * k + j];
                c[4 * i + j] = s;
            }
    };
    double MT[16], full[16];
    mul(M, T, MT);
    mul(Ti, MT, full);
    double v[4] = {p.x, p.y, p.z, 1.0}, out[4];
    for (int i = 0; i < 4; ++i) {
        out[i] = 0;
        for (int k = 0; k < 4; ++k) out[i] += full[4 * i + k] * v[k];
    }
    return {out[0], out[1], out[2]};
}

double quat_dist(const UnitQuat& a, const UnitQuat& b) {
    UnitQuat ca = a.canonical(), cb = b.canonical();
    return std::max({std::abs(ca.w - cb.w), std::abs(ca.x - cb.x),
                     std::abs(ca.y - cb.y), std::abs(ca.z - cb.z)});
}

}  // namespace

TEST_CASE("reflect_point with identity extrinsics reduces to R_y p") {
    Vec3 r = reflect_point({1, 2, 3}, RigidTransform::identity());
    CHECK(r.x == doctest::Approx(1).epsilon(1e-15));
    CHECK(r.y == doctest::Approx(-2).epsilon(1e-15));
    CHECK(r.z == doctest::Approx(3).epsilon(1e-15));

    Vec3 o = reflect_point({0, 0, 0}, RigidTransform::identity());
    CHECK(o.norm() == doctest::Approx(0));
}

TEST_CASE("reflect_point with translated extrinsics") {
    RigidTransform t = RigidTransform::from_translation({0, 1, 0});
    Vec3 r = reflect_point({1, 2, 3}, t);
    CHECK(r.x == doctest::Approx(1).epsilon(1e-14));
    CHECK(r.y == doctest::Approx(-4).epsilon(1e-14));
    CHECK(r.z == doctest::Approx(3).epsilon(1e-14));

    Vec3 oracle = reflect_point_homogeneous_oracle({1, 2, 3}, t);
    CHECK((r - oracle).norm() < 1e-12);
}

TEST_CASE("reflect_point matches the homogeneous-matrix oracle on random inputs") {
    Rng rng(12345);
    for (int i = 0; i < 500; ++i) {
        Vec3 p{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        RigidTransform t = random_transform(rng);
        Vec3 a = reflect_point(p, t);
        Vec3 b = reflect_point_homogeneous_oracle(p, t);
        CHECK((a - b).norm() < 1e-10);
    }
}

TEST_CASE("reflect_point is an involution") {
    Rng rng(777);
    for (int i = 0; i < 1000; ++i) {
        Vec3 p{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        RigidTransform t = random_transform(rng);
        Vec3 back = reflect_point(reflect_point(p, t), t);
        CHECK((back - p).norm() < 1e-12);
    }
}

TEST_CASE("reflect_rotation fixed values") {
    UnitQuat id;
    CHECK(quat_dist(reflect_rotation(id), id) == 0.0);

    double s = std::sqrt(0.5);
    UnitQuat z90{s, 0, 0, s};
    UnitQuat rz = reflect_rotation(z90);
    CHECK(rz.w == doctest::Approx(s));
    CHECK(rz.z == doctest::Approx(-s));

    UnitQuat y90{s, 0, s, 0};
    UnitQuat ry = reflect_rotation(y90);
    CHECK(quat_dist(ry, y90) < 1e-15);  // rotations about the plane normal are fixed
}

TEST_CASE("reflect_rotation equals 3x3 conjugation M R M and stays proper") {
    Rng rng(42);
    Mat3 M = reflection_matrix_y();
    for (int i = 0; i < 1000; ++i) {
        UnitQuat q = random_unit_quat(rng);
        Mat3 expect = M * quat_to_matrix(q) * M;
        Mat3 got = quat_to_matrix(reflect_rotation(q));
        for (int k = 0; k < 9; ++k) CHECK(std::abs(expect.m[k] - got.m[k]) < 1e-9);
        CHECK(std::abs(got.det() - 1.0) < 1e-9);
        Mat3 gtg = got.transposed() * got;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                CHECK(std::abs(gtg.at(r, c) - (r == c ? 1.0 : 0.0)) < 1e-9);
    }
}

TEST_CASE("reflect_pose basics") {
    Pose id;
    Pose r = reflect_pose(id, RigidTransform::identity());
    CHECK(r.position.norm() == 0.0);
    CHECK(quat_dist(r.orientation, UnitQuat{}) == 0.0);

    Pose p{{0.2, 0.3, 0.1}, UnitQuat{}};
    Pose rp = reflect_pose(p, RigidTransform::identity());
    CHECK(rp.position.x == doctest::Approx(0.2));
    CHECK(rp.position.y == doctest::Approx(-0.3));
    CHECK(rp.position.z == doctest::Approx(0.1));
    CHECK(quat_dist(rp.orientation, UnitQuat{}) < 1e-15);
    CHECK(rp.position.y == -p.position.y);  // exact with identity extrinsics
}

TEST_CASE("reflect_pose is an involution under arbitrary extrinsics") {
    Rng rng(99);
    for (int i = 0; i < 500; ++i) {
        Pose p{{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)},
               random_unit_quat(rng)};
        RigidTransform t = random_transform(rng);
        Pose back = reflect_pose(reflect_pose(p, t), t);
        CHECK((back.position - p.position).norm() < 1e-12);
        CHECK(quat_dist(back.orientation, p.orientation) < 1e-12);
    }
}

TEST_CASE("compose and invert") {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        RigidTransform a = random_transform(rng);
        RigidTransform r = compose(a, invert(a));
        CHECK(r.translation.norm() < 1e-12);
        CHECK(quat_dist(r.rotation, UnitQuat{}) < 1e-12);
    }
}

TEST_CASE("matrix_to_quat identity and round trip") {
    UnitQuat q = matrix_to_quat(Mat3{});
    CHECK(q.w == doctest::Approx(1));
    CHECK(std::abs(q.x) + std::abs(q.y) + std::abs(q.z) == doctest::Approx(0));

    Rng rng(31337);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        UnitQuat a = random_unit_quat(rng);
        UnitQuat b = matrix_to_quat(quat_to_matrix(a));
        worst = std::max(worst, quat_dist(a, b));
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("matrix_to_quat rejects non-orthonormal input") {
    Mat3 bad;
    bad.m[0] = 1.1;
    CHECK_THROWS_AS(matrix_to_quat(bad), Error);
    Mat3 mirror = reflection_matrix_y();  // orthonormal but det = -1
    CHECK_THROWS_AS(matrix_to_quat(mirror), Error);
}

TEST_CASE("quaternion canonicalization") {
    UnitQuat q{-0.5, 0.5, 0.5, 0.5};
    UnitQuat c = q.canonical();
    CHECK(c.w == 0.5);
    CHECK(c.x == -0.5);
    UnitQuat tie{0.0, -1.0, 0.0, 0.0};
    CHECK(tie.canonical().x == 1.0);
}
