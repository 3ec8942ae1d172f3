#pragma once

#include <vector>

#include "equibim/urdf.hpp"

namespace equibim {

struct AsymmetryError : Error {
    using Error::Error;
};

// Left<->right pairing P plus per-joint signs (the diagonal of D), over the
// actuated joints in document order. Applying it exchanges arm roles and flips
// signs: out[perm[i]] = sign[i] * q[i].
struct JointSymmetryMap {
    std::vector<int> perm;
    std::vector<double> sign;

    size_t size() const { return perm.size(); }
    bool involution() const {
        for (size_t i = 0; i < perm.size(); ++i) {
            size_t p = static_cast<size_t>(perm[i]);
            if (p >= perm.size() || static_cast<size_t>(perm[p]) != i) return false;
            if (sign[i] != sign[p]) return false;
        }
        return true;
    }
};

std::vector<double> apply_joint_symmetry(const JointSymmetryMap& map,
                                         const std::vector<double>& q);

// Pose of `tip` in the root frame. q covers all actuated joints in document
// order; joints off the root->tip chain are ignored.
Pose forward_kinematics(const RobotModel& model, const std::vector<double>& q,
                        const std::string& tip);

// Actuated joint indices (document order) along the root->tip chain, shallow first.
std::vector<int> chain_actuated_joints(const RobotModel& model, const std::string& tip);

// 6xK geometric Jacobian of `tip` (rows: linear xyz, angular xyz) w.r.t. the
// chain's actuated joints, evaluated at q (full actuated vector).
// Column order matches chain_actuated_joints.
std::vector<double> tip_jacobian(const RobotModel& model, const std::vector<double>& q,
                                 const std::string& tip);

// World positions of each actuated joint origin along the root->tip chain,
// followed by the tip itself.
std::vector<Vec3> chain_joint_positions(const RobotModel& model, const std::vector<double>& q,
                                        const std::string& tip);

struct DiscoveryConfig {
    int samples = 64;       // global validation draws
    double delta = 0.1;     // probe perturbation, rad or m
    double tol = 1e-6;      // pose match tolerance
    uint64_t seed = 2024;
};

// Recovers (P, D) such that FK(partner chain, PDq) = reflect_pose(FK(chain, q), plane)
// for all q, by per-joint probing plus global random validation.
// Throws StructureError on non-twin chains, AsymmetryError when no consistent
// sign assignment exists.
JointSymmetryMap discover_joint_symmetry(const RobotModel& model, const std::string& left_tip,
                                         const std::string& right_tip,
                                         const RigidTransform& plane_frame,
                                         const DiscoveryConfig& cfg = {});

// Max FK-equivariance residual (meters / canonical quat components) over n fresh
// random configurations; the held-out certificate for a discovered map.
double symmetry_certificate(const RobotModel& model, const JointSymmetryMap& map,
                            const std::string& left_tip, const std::string& right_tip,
                            const RigidTransform& plane_frame, int n, uint64_t seed);

}  // namespace equibim
