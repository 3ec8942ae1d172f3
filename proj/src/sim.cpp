#include "equibim/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Dense>

#include "equibim/rng.hpp"

namespace equibim {

namespace {

constexpr double kWindowHalfX = 0.45;  // camera-frame x extent (rows)
constexpr double kWindowHalfY = 0.55;  // camera-frame y extent (columns)
constexpr double kLinkRadius = 0.012;
constexpr double kLinkIntensity = 0.6;
constexpr double kObjectIntensity = 1.0;

constexpr double kGraspEps = 0.015;   // start closing inside this EE-object distance
constexpr double kAttachLevel = 0.5;  // aperture below this (and not opening) grasps
constexpr double kDetachLevel = 0.75;
constexpr double kPlaceEps = 0.005;   // release inside this object-goal distance
constexpr double kExchangeX = 0.35;
constexpr double kExchangeYOff = 0.05;
constexpr double kExchangeNear = 0.035;
constexpr double kStandoff = 0.08;
constexpr double kReceiverReady = 0.03;

double clampd(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

Vec3 rotvec_between(const UnitQuat& target, const UnitQuat& current) {
    UnitQuat err = (target * current.conjugate()).canonical();
    double vn = std::sqrt(err.x * err.x + err.y * err.y + err.z * err.z);
    if (vn < 1e-12) return {0, 0, 0};
    double angle = 2.0 * std::atan2(vn, err.w);
    return Vec3{err.x, err.y, err.z} * (angle / vn);
}

}  // namespace

const char* to_string(TaskId t) {
    switch (t) {
        case TaskId::reach_touch: return "reach_touch";
        case TaskId::pick_place: return "pick_place";
        default: return "handover";
    }
}

const char* to_string(SideFilter s) {
    switch (s) {
        case SideFilter::left_only: return "left";
        case SideFilter::right_only: return "right";
        default: return "both";
    }
}

TaskId task_from_string(const std::string& s) {
    if (s == "reach_touch") return TaskId::reach_touch;
    if (s == "pick_place") return TaskId::pick_place;
    if (s == "handover") return TaskId::handover;
    throw Error("unknown task '" + s + "' (expected reach_touch|pick_place|handover)");
}

SideFilter side_from_string(const std::string& s) {
    if (s == "left") return SideFilter::left_only;
    if (s == "right") return SideFilter::right_only;
    if (s == "both") return SideFilter::both;
    throw Error("unknown side filter '" + s + "' (expected left|right|both)");
}

TaskSpec make_task(TaskId id, SideFilter side) {
    TaskSpec t;
    t.id = id;
    t.side = side;
    if (id == TaskId::handover) t.target = {0.45, 0.18, 0.0};
    return t;
}

const char* builtin_robot_urdf() {
    return R"(<robot name="duo">
  <link name="base"/>
  <link name="l0"/><link name="l1"/><link name="l2"/><link name="l3"/><link name="left_ee"/>
  <link name="r0"/><link name="r1"/><link name="r2"/><link name="r3"/><link name="right_ee"/>
  <joint name="l_j1" type="revolute">
    <parent link="base"/><child link="l0"/>
    <origin xyz="0 0.25 0" rpy="0 0 0"/><axis xyz="0 0 1"/>
    <limit lower="-2.9" upper="2.9"/>
  </joint>
  <joint name="l_j2" type="revolute">
    <parent link="l0"/><child link="l1"/>
    <origin xyz="0.22 0 0" rpy="0 0 0"/><axis xyz="0 0 1"/>
    <limit lower="-2.9" upper="2.9"/>
  </joint>
  <joint name="l_j3" type="revolute">
    <parent link="l1"/><child link="l2"/>
    <origin xyz="0.18 0 0" rpy="0 0 0"/><axis xyz="0 0 1"/>
    <limit lower="-2.9" upper="2.9"/>
  </joint>
  <joint name="l_j4" type="revolute">
    <parent link="l2"/><child link="l3"/>
    <origin xyz="0.14 0 0" rpy="0 0 0"/><axis xyz="0 0 1"/>
    <limit lower="-2.9" upper="2.9"/>
  </joint>
  <joint name="l_tip" type="fixed">
    <parent link="l3"/><child link="left_ee"/>
    <origin xyz="0.12 0 0" rpy="0 0 0"/>
  </joint>
  <joint name="r_j1" type="revolute">
    <parent link="base"/><child link="r0"/>
    <origin xyz="0 -0.25 0" rpy="0 0 0"/><axis xyz="0 0 1"/>
    <limit lower="-2.9" upper="2.9"/>
  </joint>
  <joint name="r_j2" type="revolute">
    <parent link="r0"/><child link="r1"/>
    <origin xyz="0.22 0 0" rpy="0 0 0"/><axis xyz="0 0 1"/>
    <limit lower="-2.9" upper="2.9"/>
  </joint>
  <joint name="r_j3" type="revolute">
    <parent link="r1"/><child link="r2"/>
    <origin xyz="0.18 0 0" rpy="0 0 0"/><axis xyz="0 0 1"/>
    <limit lower="-2.9" upper="2.9"/>
  </joint>
  <joint name="r_j4" type="revolute">
    <parent link="r2"/><child link="r3"/>
    <origin xyz="0.14 0 0" rpy="0 0 0"/><axis xyz="0 0 1"/>
    <limit lower="-2.9" upper="2.9"/>
  </joint>
  <joint name="r_tip" type="fixed">
    <parent link="r3"/><child link="right_ee"/>
    <origin xyz="0.12 0 0" rpy="0 0 0"/>
  </joint>
</robot>
)";
}

// ---------------------------------------------------------------------------

ImageGrid render_primitives(const std::vector<ScenePrimitive>& prims,
                            const RigidTransform& t_cam, int width, int height) {
    if (width < 8 || height < 8) throw Error("render resolution must be at least 8x8");
    ImageGrid img{width, height, 1, std::vector<float>(static_cast<size_t>(width) * height, 0.0f)};
    const double px = 2.0 * kWindowHalfX / height;
    const double py = 2.0 * kWindowHalfY / width;
    const double aa = std::min(px, py);
    const double hr = (height - 1) / 2.0, hc = (width - 1) / 2.0;

    for (const auto& prim : prims) {
        Vec3 ca = t_cam.apply(prim.a), cb = t_cam.apply(prim.b);
        double ax = ca.x, ay = ca.y, bx = cb.x, by = cb.y;
        double pad = prim.radius + aa;
        int r0 = std::max(0, static_cast<int>(std::floor((std::min(ax, bx) - pad) / px + hr)));
        int r1 = std::min(height - 1,
                          static_cast<int>(std::ceil((std::max(ax, bx) + pad) / px + hr)));
        int c0 = std::max(0, static_cast<int>(std::floor((std::min(ay, by) - pad) / py + hc)));
        int c1 = std::min(width - 1,
                          static_cast<int>(std::ceil((std::max(ay, by) + pad) / py + hc)));
        double ex = bx - ax, ey = by - ay;
        double len2 = ex * ex + ey * ey;
        for (int r = r0; r <= r1; ++r) {
            double X = (r - hr) * px;
            for (int c = c0; c <= c1; ++c) {
                double Y = (c - hc) * py;
                double t = len2 > 0 ? clampd(((X - ax) * ex + (Y - ay) * ey) / len2, 0.0, 1.0) : 0.0;
                double dx = X - (ax + t * ex), dy = Y - (ay + t * ey);
                double d = std::sqrt(dx * dx + dy * dy);
                double cov = clampd(0.5 + (prim.radius - d) / aa, 0.0, 1.0);
                if (cov > 0) {
                    float v = static_cast<float>(prim.intensity * cov);
                    float& pix = img.at(r, c);
                    if (v > pix) pix = v;
                }
            }
        }
    }
    return img;
}

// ---------------------------------------------------------------------------

Simulator::Simulator(SimConfig cfg)
    : cfg_(cfg),
      robot_(parse_robot(builtin_robot_urdf())),
      t_cam_{UnitQuat{0.0, 0.0, 1.0, 0.0}, {0.35, 0.0, 0.7}},  // Ry(pi), above the table
      tips_{"left_ee", "right_ee"} {
    map_ = discover_joint_symmetry(robot_, tips_[0], tips_[1], t_cam_);
    const auto act = robot_.actuated_joints();
    auto slot_of = [&](int ji) {
        return static_cast<int>(std::find(act.begin(), act.end(), ji) - act.begin());
    };
    for (int arm = 0; arm < 2; ++arm) {
        std::vector<int> chain = chain_actuated_joints(robot_, tips_[arm]);
        for (int d = 0; d < 4; ++d)
            if (slot_of(chain[d]) != arm * 4 + d)
                throw Error("builtin robot chains are not in the expected document order");
    }
    home_q_ = {1.2789, -1.0579, -1.516, -1.6283, -1.2789, 1.0579, 1.516, 1.6283};
}

SymmetryOp Simulator::symmetry_op(ActionMode am, ObsModality om) const {
    SymmetryOp s;
    s.t_cam = t_cam_;
    s.joint_map = map_;
    s.action_mode = am;
    s.obs_modality = om;
    s.joints_per_arm = joints_per_arm();
    return s;
}

FeaturizeConfig Simulator::featurize_config(ObsModality om, ActionMode am) const {
    FeaturizeConfig f;
    f.modality = om;
    f.action_mode = am;
    f.image_w = cfg_.image_w;
    f.image_h = cfg_.image_h;
    f.cloud_points = cfg_.cloud_points;
    f.joints_per_arm = joints_per_arm();
    f.history = cfg_.history;
    f.horizon = cfg_.horizon;
    return f;
}

WorldState Simulator::reset(const TaskSpec& task, uint64_t seed) const {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(task.id) + 101));
    double side;
    switch (task.side) {
        case SideFilter::left_only: side = 1.0; break;
        case SideFilter::right_only: side = -1.0; break;
        default: side = rng.coin() ? 1.0 : -1.0;
    }
    double x = rng.uniform(task.spawn.x_lo, task.spawn.x_hi);
    double y = side * rng.uniform(task.spawn.y_lo, task.spawn.y_hi);

    WorldState s;
    s.q = home_q_;
    s.grip[0] = s.grip[1] = 1.0;
    s.object = {{x, y, 0.0}, UnitQuat{}};
    switch (task.id) {
        case TaskId::reach_touch: s.goal = s.object; break;
        case TaskId::pick_place: s.goal = {{task.target.x, 0.0, 0.0}, UnitQuat{}}; break;
        case TaskId::handover:
            s.goal = {{task.target.x, -side * std::abs(task.target.y), 0.0}, UnitQuat{}};
            break;
    }
    return s;
}

Pose Simulator::ee_pose(const WorldState& s, int arm) const {
    return forward_kinematics(robot_, s.q, tips_[arm]);
}

std::vector<double> Simulator::arm_joints(const WorldState& s, int arm) const {
    return {s.q.begin() + arm * 4, s.q.begin() + arm * 4 + 4};
}

std::vector<Vec3> Simulator::chain_points(const WorldState& s, int arm) const {
    return chain_joint_positions(robot_, s.q, tips_[arm]);
}

std::vector<double> Simulator::ik_position(const WorldState& s, int arm, const Vec3& target,
                                           int iterations) const {
    WorldState work = s;
    const int base = arm * 4;
    auto tip_err = [&]() {
        Vec3 p = forward_kinematics(robot_, work.q, tips_[arm]).position;
        return Vec3{target.x - p.x, target.y - p.y, 0.0};
    };
    double initial = tip_err().norm();
    const double lam2 = cfg_.ik_damping * cfg_.ik_damping;
    for (int it = 0; it < iterations; ++it) {
        Vec3 e = tip_err();
        if (e.norm() < 1e-12) break;
        std::vector<double> J = tip_jacobian(robot_, work.q, tips_[arm]);  // 6x4
        // position rows x,y
        double a00 = lam2, a01 = 0, a11 = lam2;
        for (int k = 0; k < 4; ++k) {
            a00 += J[k] * J[k];
            a01 += J[k] * J[4 + k];
            a11 += J[4 + k] * J[4 + k];
        }
        double det = a00 * a11 - a01 * a01;
        if (std::abs(det) < 1e-18) break;
        double ax = (a11 * e.x - a01 * e.y) / det;
        double ay = (a00 * e.y - a01 * e.x) / det;
        for (int k = 0; k < 4; ++k) {
            const Joint& j = robot_.joints[robot_.actuated_joints()[base + k]];
            work.q[base + k] =
                clampd(work.q[base + k] + J[k] * ax + J[4 + k] * ay, j.limit_lo, j.limit_hi);
        }
    }
    double final_err = tip_err().norm();
    bool finite = true;
    for (int k = 0; k < 4; ++k) finite = finite && std::isfinite(work.q[base + k]);
    if (!finite || final_err > initial + 1e-12) return arm_joints(s, arm);  // hold
    return arm_joints(work, arm);
}

std::vector<double> Simulator::ik_pose(const WorldState& s, int arm, const Pose& target) const {
    WorldState work = s;
    const int base = arm * 4;
    const double w_rot = 0.3;
    const double lam2 = cfg_.ik_damping * cfg_.ik_damping;
    auto pos_err = [&]() {
        return (target.position - forward_kinematics(robot_, work.q, tips_[arm]).position).norm();
    };
    double initial = pos_err();
    for (int it = 0; it < cfg_.ik_iterations; ++it) {
        Pose cur = forward_kinematics(robot_, work.q, tips_[arm]);
        Vec3 ep = target.position - cur.position;
        Vec3 er = rotvec_between(target.orientation, cur.orientation) * w_rot;
        Eigen::Matrix<double, 6, 1> e;
        e << ep.x, ep.y, ep.z, er.x, er.y, er.z;
        if (e.norm() < 1e-12) break;
        std::vector<double> Jv = tip_jacobian(robot_, work.q, tips_[arm]);
        Eigen::Matrix<double, 6, 4> J;
        for (int r = 0; r < 6; ++r)
            for (int c = 0; c < 4; ++c) J(r, c) = (r < 3 ? 1.0 : w_rot) * Jv[r * 4 + c];
        Eigen::Matrix<double, 6, 6> A = J * J.transpose();
        A.diagonal().array() += lam2;
        Eigen::Matrix<double, 6, 1> alpha = A.ldlt().solve(e);
        Eigen::Matrix<double, 4, 1> dq = J.transpose() * alpha;
        for (int k = 0; k < 4; ++k) {
            const Joint& j = robot_.joints[robot_.actuated_joints()[base + k]];
            work.q[base + k] = clampd(work.q[base + k] + dq(k), j.limit_lo, j.limit_hi);
        }
    }
    double final_err = pos_err();
    bool finite = true;
    for (int k = 0; k < 4; ++k) finite = finite && std::isfinite(work.q[base + k]);
    if (!finite || final_err > initial + 1e-12) return arm_joints(s, arm);  // hold
    return arm_joints(work, arm);
}

WorldState Simulator::step(const WorldState& s, const ActionStep& cmd, ActionMode mode) const {
    auto check_finite = [](const ArmBlock& a, ActionMode m) {
        if (m == ActionMode::joint) {
            if (a.joints.size() != 4) throw Error("joint command must have 4 entries per arm");
            for (double v : a.joints)
                if (!std::isfinite(v)) throw Error("non-finite joint command");
        } else {
            if (!a.ee.position.finite() || !std::isfinite(a.ee.orientation.w))
                throw Error("non-finite pose command");
        }
        if (!std::isfinite(a.gripper)) throw Error("non-finite gripper command");
    };
    check_finite(cmd.left, mode);
    check_finite(cmd.right, mode);

    WorldState n = s;
    const auto act = robot_.actuated_joints();
    for (int arm = 0; arm < 2; ++arm) {
        const ArmBlock& c = arm == 0 ? cmd.left : cmd.right;
        std::vector<double> tgt =
            mode == ActionMode::joint ? c.joints : ik_pose(s, arm, c.ee);
        for (int k = 0; k < 4; ++k) {
            int g = arm * 4 + k;
            const Joint& j = robot_.joints[act[g]];
            double d = clampd(tgt[k] - s.q[g], -cfg_.joint_rate, cfg_.joint_rate);
            n.q[g] = clampd(s.q[g] + d, j.limit_lo, j.limit_hi);
        }
        double gc = clampd(c.gripper, 0.0, 1.0);
        double gd = clampd(gc - s.grip[arm], -cfg_.grip_rate, cfg_.grip_rate);
        n.grip[arm] = clampd(s.grip[arm] + gd, 0.0, 1.0);
    }

    if (s.attached != Attach::none) {
        int a = s.attached == Attach::left ? 0 : 1;
        RigidTransform ee = RigidTransform::from_pose(ee_pose(n, a));
        RigidTransform obj = compose(ee, RigidTransform::from_pose(s.attach_offset));
        n.object = {obj.translation, obj.rotation.canonical()};
        if (n.grip[a] >= kDetachLevel) {
            n.attached = Attach::none;
            n.object.position.z = 0.0;  // rests on the table plane
        }
    } else {
        // A closed (and not opening) gripper within tolerance grasps the object.
        int best = -1;
        double best_d = cfg_.attach_tol;
        for (int arm = 0; arm < 2; ++arm) {
            bool closed = n.grip[arm] < kAttachLevel && n.grip[arm] <= s.grip[arm];
            if (!closed) continue;
            double d = (ee_pose(n, arm).position - n.object.position).norm();
            if (d <= best_d && (best < 0 || d < best_d)) {
                best = arm;
                best_d = d;
            }
        }
        if (best >= 0) {
            // the closing gripper funnels the object to its center
            n.attached = best == 0 ? Attach::left : Attach::right;
            n.attach_offset = Pose{};
            n.object = ee_pose(n, best);
        }
    }
    n.step_index = s.step_index + 1;
    return n;
}

bool Simulator::success(const WorldState& s, const TaskSpec& task) const {
    if (task.id == TaskId::reach_touch) {
        for (int arm = 0; arm < 2; ++arm)
            if ((ee_pose(s, arm).position - s.object.position).norm() <= task.tol) return true;
        return false;
    }
    return s.attached == Attach::none &&
           (s.object.position - s.goal.position).norm() <= task.tol;
}

WorldState Simulator::mirror_state(const WorldState& s) const {
    WorldState m = s;
    m.q = apply_joint_symmetry(map_, s.q);
    m.grip[0] = s.grip[1];
    m.grip[1] = s.grip[0];
    m.object = reflect_pose(s.object, t_cam_);
    m.goal = reflect_pose(s.goal, t_cam_);
    if (s.attached == Attach::left) m.attached = Attach::right;
    else if (s.attached == Attach::right) m.attached = Attach::left;
    m.attach_offset = mirror_relative(s.attach_offset);
    return m;
}

std::vector<ScenePrimitive> Simulator::scene(const WorldState& s) const {
    std::vector<ScenePrimitive> prims;
    for (int arm = 0; arm < 2; ++arm) {
        std::vector<Vec3> pts = chain_points(s, arm);
        for (size_t i = 0; i + 1 < pts.size(); ++i)
            prims.push_back({pts[i], pts[i + 1], kLinkRadius, kLinkIntensity});
    }
    prims.push_back({s.object.position, s.object.position, cfg_.object_radius, kObjectIntensity});
    return prims;
}

ImageGrid Simulator::render_image(const WorldState& s, const RigidTransform& t_cam, int w,
                                  int h) const {
    return render_primitives(scene(s), t_cam, w, h);
}

ImageGrid Simulator::render_image(const WorldState& s) const {
    return render_image(s, t_cam_, cfg_.image_w, cfg_.image_h);
}

PointCloud Simulator::render_pointcloud(const WorldState& s, int n_points, uint64_t seed) const {
    if (n_points < 16) throw Error("point cloud needs at least 16 points");
    const int per_link = n_points / 32;
    const int n_obj = n_points - 8 * per_link;

    PointCloud pc;
    pc.points.reserve(n_points);
    for (int arm = 0; arm < 2; ++arm) {
        std::vector<Vec3> pts = chain_points(s, arm);
        for (size_t link = 0; link + 1 < pts.size(); ++link) {
            for (int k = 0; k < per_link; ++k) {
                // jitter depends on (link depth, k) only, never on the arm, so the
                // strata of mirrored states are mirror images of one another
                double u = Rng(mix_seed(seed, static_cast<uint64_t>(link) * 100003 + k)).uniform();
                double t = (k + u) / per_link;
                pc.points.push_back(pts[link] + t * (pts[link + 1] - pts[link]));
            }
        }
    }
    // Object boundary: uniform angles with cos/sin tables mirrored about zero so
    // the sample set is bitwise closed under y-negation.
    std::vector<double> cs(n_obj), sn(n_obj);
    for (int l = 0; l <= n_obj / 2; ++l) {
        double th = 2.0 * std::acos(-1.0) * l / n_obj;
        cs[l] = std::cos(th);
        sn[l] = std::sin(th);
    }
    for (int l = n_obj / 2 + 1; l < n_obj; ++l) {
        cs[l] = cs[n_obj - l];
        sn[l] = -sn[n_obj - l];
    }
    RigidTransform obj = RigidTransform::from_pose(s.object);
    for (int l = 0; l < n_obj; ++l)
        pc.points.push_back(
            obj.apply({cfg_.object_radius * cs[l], cfg_.object_radius * sn[l], 0.0}));

    std::sort(pc.points.begin(), pc.points.end(), [](const Vec3& a, const Vec3& b) {
        return std::tie(a.x, a.y, a.z) < std::tie(b.x, b.y, b.z);
    });
    return pc;
}

PointCloud Simulator::render_pointcloud(const WorldState& s) const {
    return render_pointcloud(s, cfg_.cloud_points, cfg_.cloud_seed);
}

Frame Simulator::observe(const WorldState& s, ObsModality om, ActionMode am) const {
    Frame f;
    if (om == ObsModality::image) f.image = render_image(s);
    else f.cloud = render_pointcloud(s);
    for (int arm = 0; arm < 2; ++arm) {
        ArmBlock& blk = arm == 0 ? f.proprio.left : f.proprio.right;
        if (am == ActionMode::joint) blk.joints = arm_joints(s, arm);
        else blk.ee = ee_pose(s, arm);
        blk.gripper = s.grip[arm];
    }
    return f;
}

// ---------------------------------------------------------------------------
// Scripted experts. Every branch below is phrased in mirror-covariant
// quantities (goal side, attachment, distances), which is what makes
// scripted_expert(S(state)) = S(scripted_expert(state)) hold.

ActionChunk Simulator::scripted_expert(const WorldState& s, const TaskSpec& task, ActionMode mode,
                                       int horizon, std::string* phase_out) const {
    struct ArmCmd {
        std::vector<double> joints;
        double grip = 1.0;
    };
    std::array<ArmCmd, 2> cmd;
    cmd[0].joints = {home_q_.begin(), home_q_.begin() + 4};
    cmd[1].joints = {home_q_.begin() + 4, home_q_.end()};

    const Pose ee_l = ee_pose(s, 0), ee_r = ee_pose(s, 1);
    const Vec3 obj = s.object.position;
    auto hold = [&](int arm) { cmd[arm].joints = arm_joints(s, arm); };
    auto move_to = [&](int arm, const Vec3& target) {
        cmd[arm].joints = ik_position(s, arm, target);
    };
    // EE target that parks the *object* at `target` given the grasp offset.
    auto carry_target = [&](const Vec3& target) {
        RigidTransform goal_tf{s.object.orientation, target};
        RigidTransform ee = compose(goal_tf, invert(RigidTransform::from_pose(s.attach_offset)));
        return ee.translation;
    };

    double d_l = std::abs(obj.y - ee_l.position.y);
    double d_r = std::abs(obj.y - ee_r.position.y);
    int nearer = d_l <= d_r ? 0 : 1;  // exact tie falls to the left arm
    std::string phase = "hold";

    switch (task.id) {
        case TaskId::reach_touch: {
            if (s.attached == Attach::none) {
                const Pose& ee = nearer == 0 ? ee_l : ee_r;
                if ((ee.position - obj).norm() > 0.5 * task.tol) {
                    move_to(nearer, obj);
                    phase = "approach";
                } else {
                    hold(nearer);
                    phase = "touch";
                }
            }
            break;
        }
        case TaskId::pick_place: {
            if (s.attached == Attach::none) {
                if ((obj - s.goal.position).norm() <= kPlaceEps) {
                    phase = "done";
                    break;
                }
                const Pose& ee = nearer == 0 ? ee_l : ee_r;
                if ((ee.position - obj).norm() > kGraspEps) {
                    move_to(nearer, obj);
                    phase = "approach";
                } else {
                    move_to(nearer, obj);
                    cmd[nearer].grip = 0.0;
                    phase = "grasp";
                }
            } else {
                int a = s.attached == Attach::left ? 0 : 1;
                if ((obj - s.goal.position).norm() > kPlaceEps) {
                    move_to(a, carry_target(s.goal.position));
                    cmd[a].grip = 0.0;
                    phase = "transport";
                } else {
                    move_to(a, carry_target(s.goal.position));
                    cmd[a].grip = 1.0;
                    phase = "release";
                }
            }
            break;
        }
        case TaskId::handover: {
            double g_side = s.goal.position.y >= 0 ? 1.0 : -1.0;
            int receiver = g_side > 0 ? 0 : 1;
            int giver = 1 - receiver;
            const Vec3 exchange{kExchangeX, g_side * kExchangeYOff, 0.0};
            const Vec3 standoff{kExchangeX, g_side * (kExchangeYOff + kStandoff), 0.0};
            const Pose& ee_recv = receiver == 0 ? ee_l : ee_r;
            const Pose& ee_give = giver == 0 ? ee_l : ee_r;

            if (s.attached == Attach::none) {
                if ((obj - s.goal.position).norm() <= kPlaceEps) {
                    phase = "done";
                } else if ((obj - exchange).norm() <= kExchangeNear) {
                    if ((ee_recv.position - obj).norm() > kGraspEps) {
                        move_to(receiver, obj);
                        phase = "recv_approach";
                    } else {
                        move_to(receiver, obj);
                        cmd[receiver].grip = 0.0;
                        phase = "recv_grasp";
                    }
                } else {
                    if ((ee_give.position - obj).norm() > kGraspEps) {
                        move_to(giver, obj);
                        phase = "fetch";
                    } else {
                        move_to(giver, obj);
                        cmd[giver].grip = 0.0;
                        phase = "pick";
                    }
                    move_to(receiver, standoff);
                }
            } else {
                int holder = s.attached == Attach::left ? 0 : 1;
                if (holder == giver) {
                    if ((obj - exchange).norm() > kPlaceEps) {
                        move_to(giver, carry_target(exchange));
                        cmd[giver].grip = 0.0;
                        move_to(receiver, standoff);
                        phase = "to_exchange";
                    } else if ((ee_recv.position - standoff).norm() <= kReceiverReady) {
                        hold(giver);
                        cmd[giver].grip = 1.0;  // let go, the receiver takes over
                        hold(receiver);
                        phase = "handoff";
                    } else {
                        hold(giver);
                        cmd[giver].grip = 0.0;
                        move_to(receiver, standoff);
                        phase = "wait_receiver";
                    }
                } else {
                    if ((obj - s.goal.position).norm() > kPlaceEps) {
                        move_to(receiver, carry_target(s.goal.position));
                        cmd[receiver].grip = 0.0;
                        phase = "deliver";
                    } else {
                        move_to(receiver, carry_target(s.goal.position));
                        cmd[receiver].grip = 1.0;
                        phase = "place";
                    }
                }
            }
            break;
        }
    }

    if (phase_out) *phase_out = phase;

    ActionChunk chunk;
    chunk.mode = mode;
    ActionStep step;
    for (int arm = 0; arm < 2; ++arm) {
        ArmBlock& blk = arm == 0 ? step.left : step.right;
        if (mode == ActionMode::joint) {
            blk.joints = cmd[arm].joints;
        } else {
            WorldState probe = s;
            for (int k = 0; k < 4; ++k) probe.q[arm * 4 + k] = cmd[arm].joints[k];
            blk.ee = ee_pose(probe, arm);
        }
        blk.gripper = cmd[arm].grip;
    }
    chunk.steps.assign(horizon, step);
    return chunk;
}

ActionChunk Simulator::scripted_expert(const WorldState& s, const TaskSpec& task) const {
    return scripted_expert(s, task, ActionMode::joint, cfg_.horizon);
}

}  // namespace equibim
