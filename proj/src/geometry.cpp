#include "equibim/geometry.hpp"

namespace equibim {

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
    return {a.rotation * b.rotation, a.rotation.rotate(b.translation) + a.translation};
}

RigidTransform invert(const RigidTransform& a) {
    UnitQuat inv = a.rotation.conjugate();
    return {inv, inv.rotate(-a.translation)};
}

Mat3 quat_to_matrix(const UnitQuat& q) {
    Mat3 r;
    double w = q.w, x = q.x, y = q.y, z = q.z;
    r.m[0] = 1 - 2 * (y * y + z * z);
    r.m[1] = 2 * (x * y - w * z);
    r.m[2] = 2 * (x * z + w * y);
    r.m[3] = 2 * (x * y + w * z);
    r.m[4] = 1 - 2 * (x * x + z * z);
    r.m[5] = 2 * (y * z - w * x);
    r.m[6] = 2 * (x * z - w * y);
    r.m[7] = 2 * (y * z + w * x);
    r.m[8] = 1 - 2 * (x * x + y * y);
    return r;
}

UnitQuat matrix_to_quat(const Mat3& m) {
    Mat3 mtm = m.transposed() * m;
    double residual = 0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            residual = std::max(residual, std::abs(mtm.at(i, j) - (i == j ? 1.0 : 0.0)));
    if (residual > 1e-6 || m.det() < 0)
        throw Error("matrix_to_quat: input is not a rotation (orthonormality residual " +
                    std::to_string(residual) + ")");

    // Shepperd's method: pick the largest diagonal combination.
    double t = m.m[0] + m.m[4] + m.m[8];
    UnitQuat q;
    if (t > 0) {
        double s = std::sqrt(t + 1.0) * 2;
        q.w = 0.25 * s;
        q.x = (m.at(2, 1) - m.at(1, 2)) / s;
        q.y = (m.at(0, 2) - m.at(2, 0)) / s;
        q.z = (m.at(1, 0) - m.at(0, 1)) / s;
    } else if (m.at(0, 0) > m.at(1, 1) && m.at(0, 0) > m.at(2, 2)) {
        double s = std::sqrt(1.0 + m.at(0, 0) - m.at(1, 1) - m.at(2, 2)) * 2;
        q.w = (m.at(2, 1) - m.at(1, 2)) / s;
        q.x = 0.25 * s;
        q.y = (m.at(0, 1) + m.at(1, 0)) / s;
        q.z = (m.at(0, 2) + m.at(2, 0)) / s;
    } else if (m.at(1, 1) > m.at(2, 2)) {
        double s = std::sqrt(1.0 + m.at(1, 1) - m.at(0, 0) - m.at(2, 2)) * 2;
        q.w = (m.at(0, 2) - m.at(2, 0)) / s;
        q.x = (m.at(0, 1) + m.at(1, 0)) / s;
        q.y = 0.25 * s;
        q.z = (m.at(1, 2) + m.at(2, 1)) / s;
    } else {
        double s = std::sqrt(1.0 + m.at(2, 2) - m.at(0, 0) - m.at(1, 1)) * 2;
        q.w = (m.at(1, 0) - m.at(0, 1)) / s;
        q.x = (m.at(0, 2) + m.at(2, 0)) / s;
        q.y = (m.at(1, 2) + m.at(2, 1)) / s;
        q.z = 0.25 * s;
    }
    return q.normalized().canonical();
}

UnitQuat rpy_to_quat(double roll, double pitch, double yaw) {
    UnitQuat qz = UnitQuat::from_axis_angle({0, 0, 1}, yaw);
    UnitQuat qy = UnitQuat::from_axis_angle({0, 1, 0}, pitch);
    UnitQuat qx = UnitQuat::from_axis_angle({1, 0, 0}, roll);
    return qz * qy * qx;
}

static Vec3 flip_y(const Vec3& v) { return {v.x, -v.y, v.z}; }

Vec3 reflect_point(const Vec3& p, const RigidTransform& t_cam) {
    return invert(t_cam).apply(flip_y(t_cam.apply(p)));
}

UnitQuat reflect_rotation(const UnitQuat& q) {
    return UnitQuat{q.w, -q.x, q.y, -q.z}.canonical();
}

Pose reflect_pose(const Pose& pose, const RigidTransform& t_cam) {
    RigidTransform in_cam = compose(t_cam, RigidTransform::from_pose(pose));
    RigidTransform mirrored{UnitQuat{in_cam.rotation.w, -in_cam.rotation.x,
                                     in_cam.rotation.y, -in_cam.rotation.z},
                            flip_y(in_cam.translation)};
    RigidTransform back = compose(invert(t_cam), mirrored);
    return {back.translation, back.rotation.canonical()};
}

Pose mirror_relative(const Pose& rel) {
    return {flip_y(rel.position), reflect_rotation(rel.orientation)};
}

}  // namespace equibim
