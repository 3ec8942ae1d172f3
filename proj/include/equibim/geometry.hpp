#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace equibim {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double squared_norm() const { return dot(*this); }
    double norm() const { return std::sqrt(squared_norm()); }
    bool finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Row-major 3x3, used for the conjugation oracle and rpy handling.
struct Mat3 {
    double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};

    double& at(int r, int c) { return m[3 * r + c]; }
    double at(int r, int c) const { return m[3 * r + c]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += at(i, k) * o.at(k, j);
                r.at(i, j) = s;
            }
        return r;
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.at(i, j) = at(j, i);
        return r;
    }
    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) -
               m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }
};

// The sagittal reflection in the camera frame, R_y = diag(1,-1,1).
inline Mat3 reflection_matrix_y() {
    Mat3 r;
    r.m[4] = -1.0;
    return r;
}

// Unit quaternion, canonical sign w >= 0 (tie broken toward x >= 0, then y, z).
struct UnitQuat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    static UnitQuat from_axis_angle(const Vec3& axis, double angle) {
        double n = axis.norm();
        if (n < 1e-12) return {};
        double h = 0.5 * angle, s = std::sin(h) / n;
        return UnitQuat{std::cos(h), axis.x * s, axis.y * s, axis.z * s};
    }

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    UnitQuat normalized() const {
        double n = norm();
        return {w / n, x / n, y / n, z / n};
    }

    UnitQuat canonical() const {
        bool flip = w < 0.0 ||
                    (w == 0.0 && (x < 0.0 || (x == 0.0 && (y < 0.0 || (y == 0.0 && z < 0.0)))));
        return flip ? UnitQuat{-w, -x, -y, -z} : *this;
    }

    UnitQuat conjugate() const { return {w, -x, -y, -z}; }

    // Hamilton product.
    UnitQuat operator*(const UnitQuat& q) const {
        return {w * q.w - x * q.x - y * q.y - z * q.z,
                w * q.x + x * q.w + y * q.z - z * q.y,
                w * q.y - x * q.z + y * q.w + z * q.x,
                w * q.z + x * q.y - y * q.x + z * q.w};
    }

    Vec3 rotate(const Vec3& v) const {
        // q v q* expanded via the cross-product form.
        Vec3 u{x, y, z};
        Vec3 t = 2.0 * u.cross(v);
        return v + w * t + u.cross(t);
    }

    bool unit_within(double tol) const { return std::abs(norm() - 1.0) <= tol; }
};

struct Pose {
    Vec3 position;
    UnitQuat orientation;
};

// Rigid map p -> R p + t.
struct RigidTransform {
    UnitQuat rotation;
    Vec3 translation;

    static RigidTransform identity() { return {}; }
    static RigidTransform from_translation(const Vec3& t) { return {UnitQuat{}, t}; }
    static RigidTransform from_pose(const Pose& p) { return {p.orientation, p.position}; }

    Pose as_pose() const { return {translation, rotation}; }

    Vec3 apply(const Vec3& p) const { return rotation.rotate(p) + translation; }
    Vec3 apply_vector(const Vec3& v) const { return rotation.rotate(v); }
};

RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& a);

Mat3 quat_to_matrix(const UnitQuat& q);
// Throws Error when the input is not orthonormal within 1e-6.
UnitQuat matrix_to_quat(const Mat3& m);

UnitQuat rpy_to_quat(double roll, double pitch, double yaw);

// Eq-style sagittal reflection: T_cam^-1 * R_y * T_cam * p.
Vec3 reflect_point(const Vec3& p, const RigidTransform& t_cam);

// Conjugation M R M with M = R_y; component map (w,x,y,z) -> (w,-x,y,-z), canonical.
UnitQuat reflect_rotation(const UnitQuat& q);

// Position via reflect_point, orientation conjugated in the t_cam frame.
Pose reflect_pose(const Pose& pose, const RigidTransform& t_cam);

// Mirror of a relative transform between two mirrored frames: M X M in the local
// frame, independent of t_cam.
Pose mirror_relative(const Pose& rel);

}  // namespace equibim
