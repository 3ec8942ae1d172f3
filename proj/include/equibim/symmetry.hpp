#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "equibim/geometry.hpp"
#include "equibim/kinematics.hpp"

namespace equibim {

enum class ActionMode { joint, ee };
enum class ObsModality { image, pointcloud };

const char* to_string(ActionMode m);
const char* to_string(ObsModality m);
ActionMode action_mode_from_string(const std::string& s);
ObsModality obs_modality_from_string(const std::string& s);

// Row-major grayscale-or-multichannel grid, intensities in [0,1].
struct ImageGrid {
    int width = 0, height = 0, channels = 1;
    std::vector<float> data;  // data[(r*width + c)*channels + ch]

    float at(int r, int c, int ch = 0) const {
        return data[(static_cast<size_t>(r) * width + c) * channels + ch];
    }
    float& at(int r, int c, int ch = 0) {
        return data[(static_cast<size_t>(r) * width + c) * channels + ch];
    }
    bool valid() const {
        return width > 0 && height > 0 && channels > 0 &&
               data.size() == static_cast<size_t>(width) * height * channels;
    }
};

struct PointCloud {
    std::vector<Vec3> points;
};

// Per-arm state block; `joints` is used in joint mode, `ee` in EE mode.
struct ArmBlock {
    std::vector<double> joints;
    Pose ee;
    double gripper = 1.0;
};

struct Proprio {
    ArmBlock left, right;
};

struct Frame {
    std::optional<ImageGrid> image;
    std::optional<PointCloud> cloud;
    Proprio proprio;
};

// History of m frames, oldest first.
struct Observation {
    std::vector<Frame> frames;
};

struct ActionStep {
    ArmBlock left, right;
};

// n absolute commands, layout [left, right] per step.
struct ActionChunk {
    ActionMode mode = ActionMode::joint;
    std::vector<ActionStep> steps;
};

struct ActionLayout {
    ActionMode mode = ActionMode::joint;
    int joints_per_arm = 4;
    int horizon = 8;

    int arm_dim() const { return mode == ActionMode::joint ? joints_per_arm + 1 : 8; }
    int step_dim() const { return 2 * arm_dim(); }
    int flat_dim() const { return horizon * step_dim(); }
};

// Flat encoding: per step [left block, right block]; joint block = [q..., grip],
// EE block = [pos xyz, quat wxyz (canonical sign), grip].
std::vector<double> encode_chunk(const ActionChunk& a, const ActionLayout& layout);
// Quats are renormalized (and sign-canonicalized) on decode.
ActionChunk decode_chunk(const std::vector<double>& flat, const ActionLayout& layout);

// Mean over steps of the per-step L2 norm of the encoding difference.
double chunk_distance(const ActionChunk& a, const ActionChunk& b);

// The fully bound symmetry operator S.
struct SymmetryOp {
    RigidTransform t_cam;
    JointSymmetryMap joint_map;  // over [left joints..., right joints...]
    ActionMode action_mode = ActionMode::joint;
    ObsModality obs_modality = ObsModality::image;
    int joints_per_arm = 4;
};

// Horizontal flip: column x -> width-1-x, lossless.
ImageGrid flip_image(const ImageGrid& img);

// reflect_point per point, then canonical lexicographic (x, y, z) order.
PointCloud reflect_pointcloud(const PointCloud& pc, const RigidTransform& t_cam);

Observation transform_observation(const SymmetryOp& s, const Observation& o);
ActionChunk transform_action_chunk(const SymmetryOp& s, const ActionChunk& a);

// ---------------------------------------------------------------------------
// S restricted to one step of the flat chunk encoding: a fixed signed
// permutation plus (in EE mode) small dense blocks and an affine offset, with
// quaternion blocks re-canonicalized after the linear part. This is what the
// training tape differentiates through.

struct StepLinearMap {
    int dim = 0;
    std::vector<int> src;        // out[i] = sign[i] * in[src[i]] unless covered by a block
    std::vector<double> sign;
    struct Block {
        int dst = 0, src = 0, size = 0;  // size 3 (position) or 4 (quaternion)
        double mat[16] = {0};            // row-major size x size
    };
    std::vector<Block> blocks;
    std::vector<double> offset;   // added after the linear part
    std::vector<int> quat_dst;    // starts of quat blocks to sign-canonicalize

    void apply_linear(const double* in, double* out) const;
    void apply_transpose(const double* in, double* out) const;
    // Linear part + offset + quaternion canonicalization: S on one encoded step.
    std::vector<double> apply(const std::vector<double>& in) const;
};

StepLinearMap build_action_step_symmetry(const SymmetryOp& s, const ActionLayout& layout);

// ---------------------------------------------------------------------------
// Observation featurization shared by the recorder, the learner and rollouts.

struct FeaturizeConfig {
    ObsModality modality = ObsModality::image;
    ActionMode action_mode = ActionMode::joint;  // selects the proprio representation
    int image_w = 64, image_h = 64, image_c = 1;
    int cloud_points = 256;
    int joints_per_arm = 4;
    int history = 2;  // m
    int horizon = 8;  // n

    int visual_dim() const {
        return modality == ObsModality::image ? image_w * image_h * image_c : 3 * cloud_points;
    }
    int proprio_dim() const {
        return action_mode == ActionMode::joint ? 2 * (joints_per_arm + 1) : 16;
    }
    int frame_dim() const { return visual_dim() + proprio_dim(); }
    int input_dim() const { return history * frame_dim(); }

    ActionLayout action_layout() const { return {action_mode, joints_per_arm, horizon}; }
};

// One frame as stored on disk: [visual..., left block, right block], f32.
std::vector<float> frame_features(const Frame& f, const FeaturizeConfig& cfg);

// Concatenation of the m history frames, oldest first.
Eigen::VectorXd featurize(const std::vector<std::vector<float>>& frames,
                          const FeaturizeConfig& cfg);

// S on feature vectors; matches frame_features(transform_observation(...)) up to
// f32 rounding, and exactly for flips and signed permutations.
class FeatureSymmetry {
  public:
    FeatureSymmetry(const SymmetryOp& s, const FeaturizeConfig& cfg);

    std::vector<float> apply_frame(const std::vector<float>& frame) const;
    Eigen::VectorXd apply(const Eigen::VectorXd& features) const;

    // Scalar pattern over one frame (visual flip + proprio signed permutation);
    // fully covering in image+joint mode.
    const std::vector<int>& scalar_src() const { return src_; }
    const std::vector<double>& scalar_sign() const { return sign_; }

  private:
    FeaturizeConfig cfg_;
    SymmetryOp op_;
    std::vector<int> src_;
    std::vector<double> sign_;
    // EE-mode proprio uses the dense pose machinery of the step map.
    StepLinearMap proprio_map_;
    bool dense_proprio_ = false;
    // Cloud reflection as an affine map p -> A p + b in the robot frame.
    Mat3 cloud_a_;
    Vec3 cloud_b_;
};

}  // namespace equibim
