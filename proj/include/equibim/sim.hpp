#pragma once

#include <string>
#include <vector>

#include "equibim/symmetry.hpp"

namespace equibim {

enum class TaskId { reach_touch, pick_place, handover };
enum class SideFilter { left_only, right_only, both };

const char* to_string(TaskId t);
const char* to_string(SideFilter s);
TaskId task_from_string(const std::string& s);
SideFilter side_from_string(const std::string& s);

struct SpawnRegion {
    double x_lo = 0.30, x_hi = 0.40;
    double y_lo = 0.12, y_hi = 0.24;  // |y| range; the sign is the side
};

struct TaskSpec {
    TaskId id = TaskId::pick_place;
    SideFilter side = SideFilter::both;
    SpawnRegion spawn;
    // pick_place: fixed target on the sagittal plane. handover: |y| is the
    // lateral magnitude, materialized on the side opposite the spawn at reset.
    Vec3 target{0.45, 0.0, 0.0};
    double tol = 0.02;  // success position tolerance, m
    int episode_cap = 200;
};

TaskSpec make_task(TaskId id, SideFilter side = SideFilter::both);

enum class Attach { none, left, right };

struct WorldState {
    std::vector<double> q;        // 8 actuated joints, [left 4, right 4]
    double grip[2] = {1.0, 1.0};  // apertures, 0 closed .. 1 open
    Pose object;
    Attach attached = Attach::none;
    Pose attach_offset;           // EE -> object while attached
    Pose goal;                    // per-episode instance target
    int step_index = 0;
    std::string phase = "init";
};

struct SimConfig {
    int image_w = 64, image_h = 64;
    int cloud_points = 256;
    int history = 2;   // m
    int horizon = 8;   // n
    double joint_rate = 0.15;   // rad per step
    double grip_rate = 0.6;     // aperture per step
    double attach_tol = 0.02;   // m
    double object_radius = 0.05;
    int episode_cap = 200;
    uint64_t cloud_seed = 42;   // stratified-jitter stream for recorded clouds
    double ik_damping = 1e-2;
    int ik_iterations = 20;
};

// A scene element in the robot frame; segments for links, a disc for the object.
struct ScenePrimitive {
    Vec3 a, b;          // segment endpoints (a == b for a disc center)
    double radius = 0.0;
    double intensity = 0.0;
};

// Orthographic top-down rasterizer; image columns run along camera-frame y
// (the lateral axis), rows along camera-frame x. Max-composited, antialiased.
ImageGrid render_primitives(const std::vector<ScenePrimitive>& prims,
                            const RigidTransform& t_cam, int width, int height);

// Deterministic kinematic dual-arm tabletop world with bilaterally symmetric
// tasks and scripted equivariant experts.
class Simulator {
  public:
    explicit Simulator(SimConfig cfg = {});

    const SimConfig& config() const { return cfg_; }
    const RobotModel& robot() const { return robot_; }
    const JointSymmetryMap& joint_map() const { return map_; }
    const RigidTransform& t_cam() const { return t_cam_; }
    int joints_per_arm() const { return 4; }
    const std::vector<double>& home_q() const { return home_q_; }

    SymmetryOp symmetry_op(ActionMode am, ObsModality om) const;
    FeaturizeConfig featurize_config(ObsModality om, ActionMode am) const;

    WorldState reset(const TaskSpec& task, uint64_t seed) const;
    WorldState step(const WorldState& s, const ActionStep& cmd, ActionMode mode) const;
    bool success(const WorldState& s, const TaskSpec& task) const;

    // The world-side mirror: joint map on q, swapped grips/attachment, reflected
    // object and goal. step/render/expert all commute with it.
    WorldState mirror_state(const WorldState& s) const;

    ImageGrid render_image(const WorldState& s, const RigidTransform& t_cam, int w, int h) const;
    ImageGrid render_image(const WorldState& s) const;
    PointCloud render_pointcloud(const WorldState& s, int n_points, uint64_t seed) const;
    PointCloud render_pointcloud(const WorldState& s) const;

    Frame observe(const WorldState& s, ObsModality om, ActionMode am) const;

    ActionChunk scripted_expert(const WorldState& s, const TaskSpec& task, ActionMode mode,
                                int horizon, std::string* phase_out = nullptr) const;
    ActionChunk scripted_expert(const WorldState& s, const TaskSpec& task) const;

    Pose ee_pose(const WorldState& s, int arm) const;  // 0 = left, 1 = right
    std::vector<double> arm_joints(const WorldState& s, int arm) const;

    // Damped-least-squares IK for one arm; position-only target. Returns the
    // absolute joint target (4 values); falls back to the current configuration
    // on divergence.
    std::vector<double> ik_position(const WorldState& s, int arm, const Vec3& target,
                                    int iterations = 60) const;
    // Full pose tracking used for EE-mode commands.
    std::vector<double> ik_pose(const WorldState& s, int arm, const Pose& target) const;

  private:
    SimConfig cfg_;
    RobotModel robot_;
    JointSymmetryMap map_;
    RigidTransform t_cam_;
    std::vector<double> home_q_;
    std::vector<std::string> tips_;

    std::vector<Vec3> chain_points(const WorldState& s, int arm) const;
    std::vector<ScenePrimitive> scene(const WorldState& s) const;
};

// Canonical text of the built-in dual-arm robot (4 revolute joints per arm,
// exact mirror pair); parsed once per Simulator.
const char* builtin_robot_urdf();

}  // namespace equibim
