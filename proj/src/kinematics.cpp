#include "equibim/kinematics.hpp"

#include <algorithm>
#include <map>

#include "equibim/rng.hpp"

namespace equibim {

namespace {

// Joint indices (all kinds) along root->tip, shallow first.
std::vector<int> chain_joints(const RobotModel& m, const std::string& tip) {
    if (!m.has_link(tip)) throw Error("unknown tip link '" + tip + "'");
    std::map<std::string, int> parent_joint;
    for (size_t i = 0; i < m.joints.size(); ++i)
        parent_joint[m.joints[i].child_link] = static_cast<int>(i);
    std::vector<int> chain;
    std::string cur = tip;
    while (cur != m.root_link) {
        auto it = parent_joint.find(cur);
        if (it == parent_joint.end())
            throw StructureError("link '" + cur + "' is not connected to the root");
        chain.push_back(it->second);
        cur = m.joints[it->second].parent_link;
    }
    std::reverse(chain.begin(), chain.end());
    return chain;
}

RigidTransform joint_motion(const Joint& j, double v) {
    switch (j.kind) {
        case JointKind::revolute:
            return {UnitQuat::from_axis_angle(j.axis, v), {0, 0, 0}};
        case JointKind::prismatic:
            return {UnitQuat{}, j.axis * v};
        default:
            return {};
    }
}

// Position of each actuated joint in q's full indexing.
std::map<int, int> actuated_slot(const RobotModel& m) {
    std::map<int, int> slot;
    int k = 0;
    for (size_t i = 0; i < m.joints.size(); ++i)
        if (m.joints[i].actuated()) slot[static_cast<int>(i)] = k++;
    return slot;
}

bool pose_close(const Pose& a, const Pose& b, double tol) {
    if ((a.position - b.position).norm() > tol) return false;
    UnitQuat ca = a.orientation.canonical(), cb = b.orientation.canonical();
    return std::abs(ca.w - cb.w) <= tol && std::abs(ca.x - cb.x) <= tol &&
           std::abs(ca.y - cb.y) <= tol && std::abs(ca.z - cb.z) <= tol;
}

double pose_residual(const Pose& a, const Pose& b) {
    double r = (a.position - b.position).norm();
    UnitQuat ca = a.orientation.canonical(), cb = b.orientation.canonical();
    r = std::max(r, std::abs(ca.w - cb.w));
    r = std::max(r, std::abs(ca.x - cb.x));
    r = std::max(r, std::abs(ca.y - cb.y));
    r = std::max(r, std::abs(ca.z - cb.z));
    return r;
}

std::vector<double> random_config(const RobotModel& m, Rng& rng) {
    std::vector<double> q;
    for (const auto& j : m.joints)
        if (j.actuated()) q.push_back(rng.uniform(j.limit_lo, j.limit_hi));
    return q;
}

}  // namespace

std::vector<double> apply_joint_symmetry(const JointSymmetryMap& map,
                                         const std::vector<double>& q) {
    if (q.size() != map.perm.size())
        throw Error("joint vector length " + std::to_string(q.size()) +
                    " does not match symmetry map size " + std::to_string(map.perm.size()));
    std::vector<double> out(q.size());
    for (size_t i = 0; i < q.size(); ++i) out[map.perm[i]] = map.sign[i] * q[i];
    return out;
}

std::vector<int> chain_actuated_joints(const RobotModel& m, const std::string& tip) {
    std::vector<int> out;
    for (int ji : chain_joints(m, tip))
        if (m.joints[ji].actuated()) out.push_back(ji);
    return out;
}

Pose forward_kinematics(const RobotModel& m, const std::vector<double>& q,
                        const std::string& tip) {
    auto slots = actuated_slot(m);
    if (q.size() != slots.size())
        throw Error("joint vector length " + std::to_string(q.size()) + " != actuated count " +
                    std::to_string(slots.size()));
    RigidTransform acc;
    for (int ji : chain_joints(m, tip)) {
        const Joint& j = m.joints[ji];
        acc = compose(acc, j.origin);
        if (j.actuated()) acc = compose(acc, joint_motion(j, q[slots[ji]]));
    }
    return {acc.translation, acc.rotation.canonical()};
}

std::vector<double> tip_jacobian(const RobotModel& m, const std::vector<double>& q,
                                 const std::string& tip) {
    auto slots = actuated_slot(m);
    struct Axis {
        Vec3 dir, origin;
        JointKind kind;
    };
    std::vector<Axis> axes;
    RigidTransform acc;
    for (int ji : chain_joints(m, tip)) {
        const Joint& j = m.joints[ji];
        acc = compose(acc, j.origin);
        if (j.actuated()) {
            axes.push_back({acc.rotation.rotate(j.axis), acc.translation, j.kind});
            acc = compose(acc, joint_motion(j, q[slots[ji]]));
        }
    }
    Vec3 tip_pos = acc.translation;
    std::vector<double> jac(6 * axes.size(), 0.0);
    size_t cols = axes.size();
    for (size_t k = 0; k < cols; ++k) {
        Vec3 lin, ang;
        if (axes[k].kind == JointKind::revolute) {
            lin = axes[k].dir.cross(tip_pos - axes[k].origin);
            ang = axes[k].dir;
        } else {
            lin = axes[k].dir;
            ang = {0, 0, 0};
        }
        jac[0 * cols + k] = lin.x;
        jac[1 * cols + k] = lin.y;
        jac[2 * cols + k] = lin.z;
        jac[3 * cols + k] = ang.x;
        jac[4 * cols + k] = ang.y;
        jac[5 * cols + k] = ang.z;
    }
    return jac;
}

std::vector<Vec3> chain_joint_positions(const RobotModel& m, const std::vector<double>& q,
                                        const std::string& tip) {
    auto slots = actuated_slot(m);
    std::vector<Vec3> pts;
    RigidTransform acc;
    for (int ji : chain_joints(m, tip)) {
        const Joint& j = m.joints[ji];
        acc = compose(acc, j.origin);
        if (j.actuated()) {
            pts.push_back(acc.translation);
            acc = compose(acc, joint_motion(j, q[slots[ji]]));
        }
    }
    pts.push_back(acc.translation);
    return pts;
}

JointSymmetryMap discover_joint_symmetry(const RobotModel& m, const std::string& left_tip,
                                         const std::string& right_tip,
                                         const RigidTransform& plane_frame,
                                         const DiscoveryConfig& cfg) {
    if (cfg.samples < 16) throw Error("discovery needs at least 16 validation samples");
    std::vector<int> left = chain_actuated_joints(m, left_tip);
    std::vector<int> right = chain_actuated_joints(m, right_tip);
    if (left.size() != right.size())
        throw StructureError("chains have different actuated joint counts (" +
                             std::to_string(left.size()) + " vs " + std::to_string(right.size()) +
                             ")");
    for (int l : left)
        for (int r : right)
            if (l == r)
                throw StructureError("chains share actuated joint '" + m.joints[l].name +
                                     "'; twin serial arms required");
    auto slots = actuated_slot(m);
    size_t n_act = slots.size();
    if (left.size() + right.size() != n_act)
        throw StructureError("robot has actuated joints outside the two chains");

    std::vector<double> zero(n_act, 0.0);
    Pose base_l = forward_kinematics(m, zero, left_tip);
    Pose base_r = forward_kinematics(m, zero, right_tip);
    if (!pose_close(base_r, reflect_pose(base_l, plane_frame), cfg.tol))
        throw AsymmetryError(
            "zero-configuration poses are not mirror images (residual " +
            std::to_string(pose_residual(base_r, reflect_pose(base_l, plane_frame))) + ")");

    JointSymmetryMap map;
    map.perm.resize(n_act);
    map.sign.assign(n_act, 1.0);

    // Depth pairing plus per-joint sign probing: perturb one left joint, pick the
    // sign that lets the right chain reproduce the reflected tip pose.
    for (size_t d = 0; d < left.size(); ++d) {
        int ls = slots[left[d]], rs = slots[right[d]];
        map.perm[ls] = rs;
        map.perm[rs] = ls;

        std::vector<double> ql = zero;
        ql[ls] = cfg.delta;
        Pose target = reflect_pose(forward_kinematics(m, ql, left_tip), plane_frame);
        double chosen = 0;
        for (double s : {+1.0, -1.0}) {
            std::vector<double> qr = zero;
            qr[rs] = s * cfg.delta;
            if (pose_close(forward_kinematics(m, qr, right_tip), target, cfg.tol)) {
                chosen = s;
                break;
            }
        }
        if (chosen == 0)
            throw AsymmetryError("no sign for joint '" + m.joints[left[d]].name +
                                 "' reproduces the mirrored pose; the robot is not bilaterally "
                                 "symmetric about the given plane");
        map.sign[ls] = chosen;
        map.sign[rs] = chosen;
    }

    // Global validation on random configurations, both directions.
    Rng rng(cfg.seed);
    for (int it = 0; it < cfg.samples; ++it) {
        std::vector<double> q = random_config(m, rng);
        std::vector<double> qs = apply_joint_symmetry(map, q);
        if (!pose_close(forward_kinematics(m, qs, right_tip),
                        reflect_pose(forward_kinematics(m, q, left_tip), plane_frame), cfg.tol) ||
            !pose_close(forward_kinematics(m, qs, left_tip),
                        reflect_pose(forward_kinematics(m, q, right_tip), plane_frame), cfg.tol))
            throw AsymmetryError("per-joint signs fail global validation at sample " +
                                 std::to_string(it) + "; chains are coupled asymmetrically");
    }
    return map;
}

double symmetry_certificate(const RobotModel& m, const JointSymmetryMap& map,
                            const std::string& left_tip, const std::string& right_tip,
                            const RigidTransform& plane_frame, int n, uint64_t seed) {
    Rng rng(seed);
    double worst = 0;
    for (int i = 0; i < n; ++i) {
        std::vector<double> q = random_config(m, rng);
        std::vector<double> qs = apply_joint_symmetry(map, q);
        worst = std::max(
            worst, pose_residual(forward_kinematics(m, qs, right_tip),
                                 reflect_pose(forward_kinematics(m, q, left_tip), plane_frame)));
        worst = std::max(
            worst, pose_residual(forward_kinematics(m, qs, left_tip),
                                 reflect_pose(forward_kinematics(m, q, right_tip), plane_frame)));
    }
    return worst;
}

}  // namespace equibim
