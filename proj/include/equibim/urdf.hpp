#pragma once

#include <string>
#include <vector>

#include "equibim/geometry.hpp"

namespace equibim {

struct ParseError : Error {
    int line, column;
    ParseError(int l, int c, const std::string& msg)
        : Error("parse error at " + std::to_string(l) + ":" + std::to_string(c) + ": " + msg),
          line(l),
          column(c) {}
};

struct StructureError : Error {
    using Error::Error;
};

struct ValidationError : Error {
    using Error::Error;
};

enum class JointKind { revolute, prismatic, fixed };

struct Joint {
    std::string name;
    JointKind kind = JointKind::fixed;
    std::string parent_link;
    std::string child_link;
    Vec3 origin_xyz;           // raw document values, serialized verbatim
    Vec3 origin_rpy;
    RigidTransform origin;     // derived: parent-link frame -> joint/child frame
    Vec3 axis{1, 0, 0};        // unit, child-joint frame; meaningless for fixed
    double limit_lo = 0.0;     // rad or m
    double limit_hi = 0.0;

    bool actuated() const { return kind != JointKind::fixed; }
};

struct RobotModel {
    std::string name;
    std::vector<std::string> links;
    std::vector<Joint> joints;
    std::string root_link;

    int link_index(const std::string& n) const;
    bool has_link(const std::string& n) const { return link_index(n) >= 0; }
    // Indices into joints, document order.
    std::vector<int> actuated_joints() const;
};

// Parses the URDF subset: robot, link(name), joint(name,type) with
// parent/child/origin(xyz,rpy)/axis(xyz)/limit(lower,upper).
// Unknown elements are skipped. Throws ParseError / StructureError / ValidationError.
RobotModel parse_robot(const std::string& text);
RobotModel parse_robot_file(const std::string& path);

// Canonical text form; parse(serialize(m)) reproduces m exactly.
std::string serialize_robot(const RobotModel& model);

}  // namespace equibim
