#include "equibim/symmetry.hpp"

#include <algorithm>
#include <cstring>
#include <tuple>

namespace equibim {

const char* to_string(ActionMode m) { return m == ActionMode::joint ? "joint" : "ee"; }
const char* to_string(ObsModality m) { return m == ObsModality::image ? "image" : "pointcloud"; }

ActionMode action_mode_from_string(const std::string& s) {
    if (s == "joint") return ActionMode::joint;
    if (s == "ee") return ActionMode::ee;
    throw Error("unknown action mode '" + s + "' (expected joint|ee)");
}

ObsModality obs_modality_from_string(const std::string& s) {
    if (s == "image") return ObsModality::image;
    if (s == "pointcloud") return ObsModality::pointcloud;
    throw Error("unknown observation modality '" + s + "' (expected image|pointcloud)");
}

namespace {

void encode_arm(const ArmBlock& arm, const ActionLayout& layout, std::vector<double>& out) {
    if (layout.mode == ActionMode::joint) {
        if (static_cast<int>(arm.joints.size()) != layout.joints_per_arm)
            throw Error("arm block has " + std::to_string(arm.joints.size()) + " joints, layout wants " +
                        std::to_string(layout.joints_per_arm));
        out.insert(out.end(), arm.joints.begin(), arm.joints.end());
        out.push_back(arm.gripper);
    } else {
        UnitQuat q = arm.ee.orientation.canonical();
        out.push_back(arm.ee.position.x);
        out.push_back(arm.ee.position.y);
        out.push_back(arm.ee.position.z);
        out.push_back(q.w);
        out.push_back(q.x);
        out.push_back(q.y);
        out.push_back(q.z);
        out.push_back(arm.gripper);
    }
}

ArmBlock decode_arm(const double* v, const ActionLayout& layout) {
    ArmBlock arm;
    if (layout.mode == ActionMode::joint) {
        arm.joints.assign(v, v + layout.joints_per_arm);
        arm.gripper = v[layout.joints_per_arm];
    } else {
        arm.ee.position = {v[0], v[1], v[2]};
        UnitQuat q{v[3], v[4], v[5], v[6]};
        double n = q.norm();
        arm.ee.orientation = n < 1e-12 ? UnitQuat{} : q.normalized().canonical();
        arm.gripper = v[7];
    }
    return arm;
}

std::vector<double> cat_joints(const ArmBlock& l, const ArmBlock& r) {
    std::vector<double> q = l.joints;
    q.insert(q.end(), r.joints.begin(), r.joints.end());
    return q;
}

bool lex_less(const Vec3& a, const Vec3& b) {
    return std::tie(a.x, a.y, a.z) < std::tie(b.x, b.y, b.z);
}

}  // namespace

std::vector<double> encode_chunk(const ActionChunk& a, const ActionLayout& layout) {
    if (a.mode != layout.mode) throw Error("chunk/layout action-mode mismatch");
    if (static_cast<int>(a.steps.size()) != layout.horizon)
        throw Error("chunk has " + std::to_string(a.steps.size()) + " steps, layout wants " +
                    std::to_string(layout.horizon));
    std::vector<double> out;
    out.reserve(layout.flat_dim());
    for (const auto& s : a.steps) {
        encode_arm(s.left, layout, out);
        encode_arm(s.right, layout, out);
    }
    return out;
}

ActionChunk decode_chunk(const std::vector<double>& flat, const ActionLayout& layout) {
    if (static_cast<int>(flat.size()) != layout.flat_dim())
        throw Error("flat chunk length " + std::to_string(flat.size()) + " != layout dim " +
                    std::to_string(layout.flat_dim()));
    ActionChunk a;
    a.mode = layout.mode;
    a.steps.resize(layout.horizon);
    const int ad = layout.arm_dim();
    for (int s = 0; s < layout.horizon; ++s) {
        const double* base = flat.data() + static_cast<size_t>(s) * layout.step_dim();
        a.steps[s].left = decode_arm(base, layout);
        a.steps[s].right = decode_arm(base + ad, layout);
    }
    return a;
}

double chunk_distance(const ActionChunk& a, const ActionChunk& b) {
    if (a.mode != b.mode || a.steps.size() != b.steps.size())
        throw Error("chunk_distance: shape mismatch");
    if (a.steps.empty()) return 0.0;
    ActionLayout layout{a.mode,
                        a.mode == ActionMode::joint ? static_cast<int>(a.steps[0].left.joints.size())
                                                    : 0,
                        static_cast<int>(a.steps.size())};
    std::vector<double> ea = encode_chunk(a, layout), eb = encode_chunk(b, layout);
    double total = 0.0;
    int sd = layout.step_dim();
    for (int s = 0; s < layout.horizon; ++s) {
        double ss = 0;
        for (int i = 0; i < sd; ++i) {
            double d = ea[s * sd + i] - eb[s * sd + i];
            ss += d * d;
        }
        total += std::sqrt(ss);
    }
    return total / layout.horizon;
}

ImageGrid flip_image(const ImageGrid& img) {
    if (!img.valid()) throw Error("flip_image: invalid grid");
    ImageGrid out = img;
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            for (int ch = 0; ch < img.channels; ++ch)
                out.at(r, img.width - 1 - c, ch) = img.at(r, c, ch);
    return out;
}

PointCloud reflect_pointcloud(const PointCloud& pc, const RigidTransform& t_cam) {
    PointCloud out;
    out.points.reserve(pc.points.size());
    for (const auto& p : pc.points) out.points.push_back(reflect_point(p, t_cam));
    std::sort(out.points.begin(), out.points.end(), lex_less);
    return out;
}

Observation transform_observation(const SymmetryOp& s, const Observation& o) {
    Observation out;
    out.frames.reserve(o.frames.size());
    for (const auto& f : o.frames) {
        Frame g;
        if (s.obs_modality == ObsModality::image) {
            if (!f.image) throw Error("observation frame lacks the bound image modality");
            g.image = flip_image(*f.image);
        } else {
            if (!f.cloud) throw Error("observation frame lacks the bound point-cloud modality");
            g.cloud = reflect_pointcloud(*f.cloud, s.t_cam);
        }
        if (s.action_mode == ActionMode::joint) {
            std::vector<double> q = cat_joints(f.proprio.left, f.proprio.right);
            std::vector<double> m = apply_joint_symmetry(s.joint_map, q);
            int J = s.joints_per_arm;
            if (static_cast<int>(q.size()) != 2 * J) throw Error("proprio joint blocks sized wrongly");
            g.proprio.left.joints.assign(m.begin(), m.begin() + J);
            g.proprio.right.joints.assign(m.begin() + J, m.end());
        } else {
            g.proprio.left.ee = reflect_pose(f.proprio.right.ee, s.t_cam);
            g.proprio.right.ee = reflect_pose(f.proprio.left.ee, s.t_cam);
        }
        g.proprio.left.gripper = f.proprio.right.gripper;
        g.proprio.right.gripper = f.proprio.left.gripper;
        out.frames.push_back(std::move(g));
    }
    return out;
}

ActionChunk transform_action_chunk(const SymmetryOp& s, const ActionChunk& a) {
    if (a.mode != s.action_mode) throw Error("chunk mode does not match the symmetry operator");
    ActionChunk out;
    out.mode = a.mode;
    out.steps.reserve(a.steps.size());
    for (const auto& step : a.steps) {
        ActionStep t;
        if (a.mode == ActionMode::joint) {
            std::vector<double> q = cat_joints(step.left, step.right);
            std::vector<double> m = apply_joint_symmetry(s.joint_map, q);
            int J = s.joints_per_arm;
            t.left.joints.assign(m.begin(), m.begin() + J);
            t.right.joints.assign(m.begin() + J, m.end());
        } else {
            t.left.ee = reflect_pose(step.right.ee, s.t_cam);
            t.right.ee = reflect_pose(step.left.ee, s.t_cam);
        }
        t.left.gripper = step.right.gripper;
        t.right.gripper = step.left.gripper;
        out.steps.push_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------------------

void StepLinearMap::apply_linear(const double* in, double* out) const {
    for (int i = 0; i < dim; ++i) out[i] = src[i] >= 0 ? sign[i] * in[src[i]] : 0.0;
    for (const auto& b : blocks)
        for (int r = 0; r < b.size; ++r) {
            double s = 0;
            for (int c = 0; c < b.size; ++c) s += b.mat[r * b.size + c] * in[b.src + c];
            out[b.dst + r] = s;
        }
}

void StepLinearMap::apply_transpose(const double* in, double* out) const {
    std::fill(out, out + dim, 0.0);
    for (int i = 0; i < dim; ++i)
        if (src[i] >= 0) out[src[i]] += sign[i] * in[i];
    for (const auto& b : blocks)
        for (int r = 0; r < b.size; ++r)
            for (int c = 0; c < b.size; ++c) out[b.src + c] += b.mat[r * b.size + c] * in[b.dst + r];
}

std::vector<double> StepLinearMap::apply(const std::vector<double>& in) const {
    if (static_cast<int>(in.size()) != dim) throw Error("StepLinearMap: wrong input size");
    std::vector<double> out(dim);
    apply_linear(in.data(), out.data());
    for (int i = 0; i < dim; ++i) out[i] += offset[i];
    for (int qd : quat_dst) {
        double w = out[qd], x = out[qd + 1], y = out[qd + 2], z = out[qd + 3];
        bool flip = w < 0.0 ||
                    (w == 0.0 && (x < 0.0 || (x == 0.0 && (y < 0.0 || (y == 0.0 && z < 0.0)))));
        if (flip)
            for (int k = 0; k < 4; ++k) out[qd + k] = -out[qd + k];
    }
    return out;
}

namespace {

// Matrix of p -> a o p (left Hamilton multiplication), rows act on (w,x,y,z).
void left_mult_matrix(const UnitQuat& a, double* m) {
    const double w = a.w, x = a.x, y = a.y, z = a.z;
    const double rows[16] = {w, -x, -y, -z, x, w, -z, y, y, z, w, -x, z, -y, x, w};
    std::memcpy(m, rows, sizeof(rows));
}

void mat4_mul(const double* a, const double* b, double* c) {
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double s = 0;
            for (int k = 0; k < 4; ++k) s += a[4 * i + k] * b[4 * k + j];
            c[4 * i + j] = s;
        }
}

}  // namespace

StepLinearMap build_action_step_symmetry(const SymmetryOp& s, const ActionLayout& layout) {
    StepLinearMap m;
    m.dim = layout.step_dim();
    m.src.assign(m.dim, -1);
    m.sign.assign(m.dim, 1.0);
    m.offset.assign(m.dim, 0.0);

    const int ad = layout.arm_dim();
    if (layout.mode == ActionMode::joint) {
        const int J = layout.joints_per_arm;
        if (static_cast<int>(s.joint_map.size()) != 2 * J)
            throw Error("joint map size does not match the action layout");
        auto enc = [&](int g) { return g < J ? g : (J + 1) + (g - J); };
        for (int g = 0; g < 2 * J; ++g) {
            m.src[enc(s.joint_map.perm[g])] = enc(g);
            m.sign[enc(s.joint_map.perm[g])] = s.joint_map.sign[g];
        }
        m.src[J] = 2 * J + 1;      // left gripper <- right gripper
        m.src[2 * J + 1] = J;
    } else {
        // Position: p' = A p + b with A = R^T M R, b = R^T (M t - t).
        Mat3 R = quat_to_matrix(s.t_cam.rotation);
        Mat3 A = R.transposed() * reflection_matrix_y() * R;
        Vec3 t = s.t_cam.translation;
        Vec3 b = R.transposed() * Vec3{0.0, -2.0 * t.y, 0.0};
        // Orientation: q' = L(r_conj) C L(r) q.
        double Lr[16], Lrc[16], Q[16], tmp[16];
        left_mult_matrix(s.t_cam.rotation, Lr);
        left_mult_matrix(s.t_cam.rotation.conjugate(), Lrc);
        double C[16] = {1, 0, 0, 0, 0, -1, 0, 0, 0, 0, 1, 0, 0, 0, 0, -1};
        mat4_mul(C, Lr, tmp);
        mat4_mul(Lrc, tmp, Q);

        for (int dst_arm = 0; dst_arm < 2; ++dst_arm) {
            int src_arm = 1 - dst_arm;  // arms swap
            int d0 = dst_arm * ad, s0 = src_arm * ad;
            StepLinearMap::Block pos{d0, s0, 3, {}};
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) pos.mat[r * 3 + c] = A.at(r, c);
            m.blocks.push_back(pos);
            for (int k = 0; k < 3; ++k)
                m.offset[d0 + k] = k == 0 ? b.x : (k == 1 ? b.y : b.z);

            StepLinearMap::Block quat{d0 + 3, s0 + 3, 4, {}};
            std::memcpy(quat.mat, Q, sizeof(Q));
            m.blocks.push_back(quat);
            m.quat_dst.push_back(d0 + 3);

            m.src[d0 + 7] = s0 + 7;  // gripper swaps, never sign-flips
        }
    }
    return m;
}

// ---------------------------------------------------------------------------

std::vector<float> frame_features(const Frame& f, const FeaturizeConfig& cfg) {
    std::vector<float> out;
    out.reserve(cfg.frame_dim());
    if (cfg.modality == ObsModality::image) {
        if (!f.image || f.image->width != cfg.image_w || f.image->height != cfg.image_h ||
            f.image->channels != cfg.image_c || !f.image->valid())
            throw Error("frame image does not match the featurization config");
        out.insert(out.end(), f.image->data.begin(), f.image->data.end());
    } else {
        if (!f.cloud || static_cast<int>(f.cloud->points.size()) != cfg.cloud_points)
            throw Error("frame cloud does not match the featurization config");
        for (const auto& p : f.cloud->points) {
            out.push_back(static_cast<float>(p.x));
            out.push_back(static_cast<float>(p.y));
            out.push_back(static_cast<float>(p.z));
        }
    }
    auto push_arm = [&](const ArmBlock& a) {
        if (cfg.action_mode == ActionMode::joint) {
            if (static_cast<int>(a.joints.size()) != cfg.joints_per_arm)
                throw Error("proprio joint block does not match the featurization config");
            for (double v : a.joints) out.push_back(static_cast<float>(v));
            out.push_back(static_cast<float>(a.gripper));
        } else {
            UnitQuat q = a.ee.orientation.canonical();
            const double vals[8] = {a.ee.position.x, a.ee.position.y, a.ee.position.z,
                                    q.w,             q.x,             q.y,
                                    q.z,             a.gripper};
            for (double v : vals) out.push_back(static_cast<float>(v));
        }
    };
    push_arm(f.proprio.left);
    push_arm(f.proprio.right);
    return out;
}

Eigen::VectorXd featurize(const std::vector<std::vector<float>>& frames,
                          const FeaturizeConfig& cfg) {
    if (static_cast<int>(frames.size()) != cfg.history)
        throw Error("featurize: expected " + std::to_string(cfg.history) + " frames, got " +
                    std::to_string(frames.size()));
    Eigen::VectorXd out(cfg.input_dim());
    int k = 0;
    for (const auto& f : frames) {
        if (static_cast<int>(f.size()) != cfg.frame_dim())
            throw Error("featurize: frame feature length mismatch");
        for (float v : f) out[k++] = static_cast<double>(v);
    }
    return out;
}

FeatureSymmetry::FeatureSymmetry(const SymmetryOp& s, const FeaturizeConfig& cfg)
    : cfg_(cfg), op_(s) {
    if (s.action_mode != cfg.action_mode || s.obs_modality != cfg.modality ||
        s.joints_per_arm != cfg.joints_per_arm)
        throw Error("symmetry operator and featurization config disagree");

    const int fd = cfg.frame_dim(), vd = cfg.visual_dim();
    src_.resize(fd);
    sign_.assign(fd, 1.0);
    for (int i = 0; i < fd; ++i) src_[i] = i;

    if (cfg.modality == ObsModality::image) {
        const int W = cfg.image_w, C = cfg.image_c;
        for (int r = 0; r < cfg.image_h; ++r)
            for (int c = 0; c < W; ++c)
                for (int ch = 0; ch < C; ++ch)
                    src_[(r * W + c) * C + ch] = (r * W + (W - 1 - c)) * C + ch;
    } else {
        Mat3 R = quat_to_matrix(s.t_cam.rotation);
        cloud_a_ = R.transposed() * reflection_matrix_y() * R;
        cloud_b_ = R.transposed() * Vec3{0.0, -2.0 * s.t_cam.translation.y, 0.0};
    }

    if (cfg.action_mode == ActionMode::joint) {
        const int J = cfg.joints_per_arm;
        auto enc = [&](int g) { return vd + (g < J ? g : (J + 1) + (g - J)); };
        for (int g = 0; g < 2 * J; ++g) {
            src_[enc(s.joint_map.perm[g])] = enc(g);
            sign_[enc(s.joint_map.perm[g])] = s.joint_map.sign[g];
        }
        src_[vd + J] = vd + 2 * J + 1;
        src_[vd + 2 * J + 1] = vd + J;
    } else {
        dense_proprio_ = true;
        proprio_map_ = build_action_step_symmetry(s, ActionLayout{ActionMode::ee, 0, 1});
    }
}

std::vector<float> FeatureSymmetry::apply_frame(const std::vector<float>& frame) const {
    const int fd = cfg_.frame_dim(), vd = cfg_.visual_dim();
    if (static_cast<int>(frame.size()) != fd) throw Error("FeatureSymmetry: frame size mismatch");
    std::vector<float> out(fd);
    for (int i = 0; i < fd; ++i)
        out[i] = sign_[i] == 1.0 ? frame[src_[i]] : static_cast<float>(-frame[src_[i]]);

    if (cfg_.modality == ObsModality::pointcloud) {
        std::vector<Vec3> pts(cfg_.cloud_points);
        for (int i = 0; i < cfg_.cloud_points; ++i) {
            Vec3 p{frame[3 * i], frame[3 * i + 1], frame[3 * i + 2]};
            pts[i] = cloud_a_ * p + cloud_b_;
        }
        std::sort(pts.begin(), pts.end(), lex_less);
        for (int i = 0; i < cfg_.cloud_points; ++i) {
            out[3 * i] = static_cast<float>(pts[i].x);
            out[3 * i + 1] = static_cast<float>(pts[i].y);
            out[3 * i + 2] = static_cast<float>(pts[i].z);
        }
    }
    if (dense_proprio_) {
        std::vector<double> in(16);
        for (int i = 0; i < 16; ++i) in[i] = static_cast<double>(frame[vd + i]);
        std::vector<double> mapped = proprio_map_.apply(in);
        for (int i = 0; i < 16; ++i) out[vd + i] = static_cast<float>(mapped[i]);
    }
    return out;
}

Eigen::VectorXd FeatureSymmetry::apply(const Eigen::VectorXd& features) const {
    const int fd = cfg_.frame_dim();
    if (features.size() != cfg_.input_dim()) throw Error("FeatureSymmetry: history size mismatch");
    Eigen::VectorXd out(features.size());
    std::vector<float> frame(fd), mapped;
    for (int f = 0; f < cfg_.history; ++f) {
        for (int i = 0; i < fd; ++i) frame[i] = static_cast<float>(features[f * fd + i]);
        mapped = apply_frame(frame);
        for (int i = 0; i < fd; ++i) out[f * fd + i] = static_cast<double>(mapped[i]);
    }
    return out;
}

}  // namespace equibim
