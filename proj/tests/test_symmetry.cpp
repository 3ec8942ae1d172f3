#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "equibim/rng.hpp"
#include "equibim/symmetry.hpp"

using namespace equibim;

namespace {

SymmetryOp fixture_op(ActionMode am, ObsModality om,
                      RigidTransform t_cam = RigidTransform::identity()) {
    RobotModel m = parse_robot_file(std::string(EQUIBIM_ASSET_DIR) + "/planar_pair.urdf");
    SymmetryOp s;
    s.t_cam = t_cam;
    s.joint_map = discover_joint_symmetry(m, "left_ee", "right_ee", t_cam);
    s.action_mode = am;
    s.obs_modality = om;
    s.joints_per_arm = 2;
    return s;
}

UnitQuat random_quat(Rng& rng) {
    return UnitQuat{rng.normal(), rng.normal(), rng.normal(), rng.normal()}.normalized().canonical();
}

ActionChunk random_chunk(const ActionLayout& layout, Rng& rng) {
    ActionChunk a;
    a.mode = layout.mode;
    a.steps.resize(layout.horizon);
    for (auto& s : a.steps)
        for (ArmBlock* arm : {&s.left, &s.right}) {
            if (layout.mode == ActionMode::joint) {
                arm->joints.resize(layout.joints_per_arm);
                for (auto& v : arm->joints) v = rng.uniform(-2, 2);
            } else {
                arm->ee.position = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
                arm->ee.orientation = random_quat(rng);
            }
            arm->gripper = rng.uniform(0, 1);
        }
    return a;
}

ImageGrid random_image(int w, int h, Rng& rng) {
    ImageGrid img{w, h, 1, {}};
    img.data.resize(static_cast<size_t>(w) * h);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    return img;
}

double chunk_residual(const ActionChunk& a, const ActionChunk& b) { return chunk_distance(a, b); }

}  // namespace

TEST_CASE("flip_image basics and involution") {
    ImageGrid one{1, 1, 1, {0.25f}};
    CHECK(flip_image(one).data == one.data);

    ImageGrid two{2, 1, 1, {0.1f, 0.9f}};
    ImageGrid f = flip_image(two);
    CHECK(f.data[0] == 0.9f);
    CHECK(f.data[1] == 0.1f);

    Rng rng(3);
    ImageGrid img = random_image(17, 9, rng);
    CHECK(flip_image(flip_image(img)).data == img.data);  // bit-identical
}

TEST_CASE("reflect_pointcloud: plane-fixed, single point, involution") {
    PointCloud plane{{{0.3, 0.0, 0.1}, {0.5, 0.0, 0.0}}};
    PointCloud r = reflect_pointcloud(plane, RigidTransform::identity());
    for (size_t i = 0; i < plane.points.size(); ++i)
        CHECK((r.points[i] - plane.points[i]).norm() == 0.0);

    PointCloud single{{{1, 2, 3}}};
    PointCloud rs = reflect_pointcloud(single, RigidTransform::identity());
    CHECK(rs.points[0].y == -2.0);

    Rng rng(8);
    PointCloud cloud;
    for (int i = 0; i < 64; ++i)
        cloud.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    std::sort(cloud.points.begin(), cloud.points.end(), [](const Vec3& a, const Vec3& b) {
        return std::tie(a.x, a.y, a.z) < std::tie(b.x, b.y, b.z);
    });
    RigidTransform t{UnitQuat::from_axis_angle({0, 1, 0}, 1.1), {0.2, 0.0, -0.4}};
    PointCloud twice = reflect_pointcloud(reflect_pointcloud(cloud, t), t);
    REQUIRE(twice.points.size() == cloud.points.size());
    for (size_t i = 0; i < cloud.points.size(); ++i)
        CHECK((twice.points[i] - cloud.points[i]).norm() < 1e-12);
}

TEST_CASE("chunk_distance: identity, single scalar, symmetry") {
    Rng rng(11);
    ActionLayout layout{ActionMode::joint, 2, 3};
    ActionChunk a = random_chunk(layout, rng);
    CHECK(chunk_distance(a, a) == 0.0);

    ActionLayout single{ActionMode::joint, 2, 1};
    ActionChunk u = random_chunk(single, rng), v = u;
    v.steps[0].left.joints[0] += 0.3;
    CHECK(chunk_distance(u, v) == doctest::Approx(0.3).epsilon(1e-12));

    for (int i = 0; i < 50; ++i) {
        ActionChunk p = random_chunk(layout, rng), q = random_chunk(layout, rng);
        CHECK(chunk_distance(p, q) == doctest::Approx(chunk_distance(q, p)).epsilon(1e-12));
        CHECK(chunk_distance(p, q) >= 0.0);
    }
}

TEST_CASE("transform_action_chunk joint mode: zeros, fixture values, involution") {
    SymmetryOp s = fixture_op(ActionMode::joint, ObsModality::image);
    ActionLayout layout{ActionMode::joint, 2, 4};
    Rng rng(21);

    ActionChunk zero = random_chunk(layout, rng);
    for (auto& st : zero.steps)
        for (ArmBlock* arm : {&st.left, &st.right}) {
            std::fill(arm->joints.begin(), arm->joints.end(), 0.0);
            arm->gripper = 0.0;
        }
    ActionChunk tz = transform_action_chunk(s, zero);
    CHECK(chunk_residual(tz, zero) == 0.0);

    // left q=(0.3,-0.1) -> right gets (-0.3, 0.1) under the all-minus planar map
    ActionChunk c = zero;
    c.steps[0].left.joints = {0.3, -0.1};
    ActionChunk tc = transform_action_chunk(s, c);
    CHECK(tc.steps[0].right.joints[0] == doctest::Approx(-0.3));
    CHECK(tc.steps[0].right.joints[1] == doctest::Approx(0.1));
    CHECK(tc.steps[0].left.joints[0] == 0.0);

    for (int i = 0; i < 100; ++i) {
        ActionChunk r = random_chunk(layout, rng);
        CHECK(chunk_residual(transform_action_chunk(s, transform_action_chunk(s, r)), r) < 1e-12);
    }
}

TEST_CASE("transform_action_chunk EE mode: mirror-symmetric chunk is a fixed point") {
    SymmetryOp s = fixture_op(ActionMode::ee, ObsModality::image);
    ActionLayout layout{ActionMode::ee, 2, 1};
    ActionChunk c;
    c.mode = ActionMode::ee;
    c.steps.resize(1);
    c.steps[0].left.ee = {{0.2, 0.3, 0.1}, UnitQuat{}};
    c.steps[0].right.ee = {{0.2, -0.3, 0.1}, UnitQuat{}};
    c.steps[0].left.gripper = c.steps[0].right.gripper = 0.7;
    ActionChunk t = transform_action_chunk(s, c);
    CHECK(chunk_residual(t, c) < 1e-15);

    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        ActionChunk r = random_chunk(layout, rng);
        CHECK(chunk_residual(transform_action_chunk(s, transform_action_chunk(s, r)), r) < 1e-12);
    }
}

TEST_CASE("S is an isometry of chunk_distance") {
    Rng rng(1312);
    for (ActionMode mode : {ActionMode::joint, ActionMode::ee}) {
        RigidTransform cam{UnitQuat::from_axis_angle({0, 1, 0}, std::acos(-1.0)), {0.35, 0, 0.7}};
        SymmetryOp s = fixture_op(mode, ObsModality::image, cam);
        ActionLayout layout{mode, 2, 4};
        for (int i = 0; i < 100; ++i) {
            ActionChunk a = random_chunk(layout, rng), b = random_chunk(layout, rng);
            double d0 = chunk_distance(a, b);
            double d1 = chunk_distance(transform_action_chunk(s, a), transform_action_chunk(s, b));
            CHECK(std::abs(d0 - d1) < 1e-9);
        }
    }
}

TEST_CASE("transform_observation: symmetric frame is a fixed point, involution holds") {
    SymmetryOp s = fixture_op(ActionMode::joint, ObsModality::image);
    FeaturizeConfig cfg;
    cfg.image_w = cfg.image_h = 8;
    cfg.joints_per_arm = 2;
    cfg.history = 1;

    Frame f;
    ImageGrid img{8, 8, 1, {}};
    img.data.resize(64);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) img.at(r, c) = static_cast<float>(r) / 8.0f;  // column-symmetric
    f.image = img;
    f.proprio.left.joints = {0.4, -0.2};
    f.proprio.right.joints = {-0.4, 0.2};  // the mirrored configuration
    f.proprio.left.gripper = f.proprio.right.gripper = 0.5;

    Observation o{{f}};
    Observation t = transform_observation(s, o);
    CHECK(t.frames[0].image->data == img.data);
    CHECK(t.frames[0].proprio.left.joints[0] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(t.frames[0].proprio.left.joints[1] == doctest::Approx(-0.2).epsilon(1e-12));

    Rng rng(9);
    Frame g;
    g.image = random_image(8, 8, rng);
    g.proprio.left.joints = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    g.proprio.right.joints = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    g.proprio.left.gripper = 0.3;
    g.proprio.right.gripper = 0.9;
    Observation ro{{g}};
    Observation back = transform_observation(s, transform_observation(s, ro));
    CHECK(back.frames[0].image->data == g.image->data);
    for (int j = 0; j < 2; ++j) {
        CHECK(back.frames[0].proprio.left.joints[j] == doctest::Approx(g.proprio.left.joints[j]));
        CHECK(back.frames[0].proprio.right.joints[j] == doctest::Approx(g.proprio.right.joints[j]));
    }
    CHECK(back.frames[0].proprio.left.gripper == 0.3);
}

TEST_CASE("step linear map agrees with transform_action_chunk in both modes") {
    Rng rng(77);
    RigidTransform cam{UnitQuat::from_axis_angle({0, 1, 0}, std::acos(-1.0)), {0.35, 0, 0.7}};
    for (ActionMode mode : {ActionMode::joint, ActionMode::ee}) {
        SymmetryOp s = fixture_op(mode, ObsModality::image, cam);
        ActionLayout layout{mode, 2, 3};
        StepLinearMap map = build_action_step_symmetry(s, layout);
        for (int i = 0; i < 100; ++i) {
            ActionChunk a = random_chunk(layout, rng);
            std::vector<double> enc = encode_chunk(a, layout);
            std::vector<double> want = encode_chunk(transform_action_chunk(s, a), layout);
            int sd = layout.step_dim();
            for (int st = 0; st < layout.horizon; ++st) {
                std::vector<double> in(enc.begin() + st * sd, enc.begin() + (st + 1) * sd);
                std::vector<double> got = map.apply(in);
                for (int k = 0; k < sd; ++k) CHECK(std::abs(got[k] - want[st * sd + k]) < 1e-12);
            }
        }
    }
}

TEST_CASE("featurize dims and the zero observation") {
    FeaturizeConfig cfg;  // 64x64 image, J=4, m=2 -> 2*(4096+10)
    CHECK(cfg.input_dim() == 8212);

    FeaturizeConfig pc;
    pc.modality = ObsModality::pointcloud;
    CHECK(pc.input_dim() == 2 * (768 + 10));

    FeaturizeConfig tiny;
    tiny.image_w = tiny.image_h = 4;
    tiny.joints_per_arm = 2;
    tiny.history = 2;
    Frame z;
    z.image = ImageGrid{4, 4, 1, std::vector<float>(16, 0.0f)};
    z.proprio.left.joints = {0, 0};
    z.proprio.right.joints = {0, 0};
    z.proprio.left.gripper = z.proprio.right.gripper = 0.0;
    auto ff = frame_features(z, tiny);
    Eigen::VectorXd v = featurize({ff, ff}, tiny);
    CHECK(v.size() == 2 * (16 + 6));
    CHECK(v.norm() == 0.0);
}

TEST_CASE("feature symmetry matches transform_observation and exposes the proprio pattern") {
    Rng rng(4242);
    RigidTransform cam{UnitQuat::from_axis_angle({0, 1, 0}, std::acos(-1.0)), {0.35, 0, 0.7}};
    for (ActionMode am : {ActionMode::joint, ActionMode::ee}) {
        for (ObsModality om : {ObsModality::image, ObsModality::pointcloud}) {
            SymmetryOp s = fixture_op(am, om, cam);
            FeaturizeConfig cfg;
            cfg.modality = om;
            cfg.action_mode = am;
            cfg.image_w = cfg.image_h = 6;
            cfg.cloud_points = 16;
            cfg.joints_per_arm = 2;
            cfg.history = 2;
            FeatureSymmetry fs(s, cfg);

            for (int trial = 0; trial < 20; ++trial) {
                Observation o;
                for (int fidx = 0; fidx < cfg.history; ++fidx) {
                    Frame f;
                    if (om == ObsModality::image) {
                        f.image = random_image(6, 6, rng);
                    } else {
                        PointCloud pc;
                        for (int i = 0; i < 16; ++i)
                            pc.points.push_back(
                                {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
                        f.cloud = pc;
                    }
                    if (am == ActionMode::joint) {
                        f.proprio.left.joints = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
                        f.proprio.right.joints = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
                    } else {
                        f.proprio.left.ee = {{rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0},
                                             random_quat(rng)};
                        f.proprio.right.ee = {{rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0},
                                              random_quat(rng)};
                    }
                    f.proprio.left.gripper = rng.uniform(0, 1);
                    f.proprio.right.gripper = rng.uniform(0, 1);
                    o.frames.push_back(std::move(f));
                }
                std::vector<std::vector<float>> raw, mapped_frames;
                for (const auto& f : o.frames) raw.push_back(frame_features(f, cfg));
                Observation to = transform_observation(s, o);
                for (const auto& f : to.frames) mapped_frames.push_back(frame_features(f, cfg));

                for (int fi = 0; fi < cfg.history; ++fi) {
                    std::vector<float> got = fs.apply_frame(raw[fi]);
                    REQUIRE(got.size() == mapped_frames[fi].size());
                    for (size_t k = 0; k < got.size(); ++k)
                        CHECK(std::abs(got[k] - mapped_frames[fi][k]) < 1e-6f);
                }
                Eigen::VectorXd hist = featurize(raw, cfg);
                Eigen::VectorXd mapped = fs.apply(hist);
                Eigen::VectorXd want = featurize(mapped_frames, cfg);
                CHECK((mapped - want).norm() < 1e-6);
            }
        }
    }

    // Joint-mode proprio: S on features is exactly the documented signed permutation.
    SymmetryOp s = fixture_op(ActionMode::joint, ObsModality::image);
    FeaturizeConfig cfg;
    cfg.image_w = cfg.image_h = 6;
    cfg.joints_per_arm = 2;
    FeatureSymmetry fs(s, cfg);
    const auto& src = fs.scalar_src();
    const auto& sign = fs.scalar_sign();
    int vd = cfg.visual_dim();
    CHECK(src[vd + 3] == vd + 0);   // right q0 <- left q0
    CHECK(sign[vd + 3] == -1.0);
    CHECK(src[vd + 2] == vd + 5);   // left gripper <- right gripper
    CHECK(sign[vd + 2] == 1.0);

    std::vector<float> frame(cfg.frame_dim(), 0.0f);
    for (int i = 0; i < cfg.frame_dim(); ++i) frame[i] = static_cast<float>(i % 13) * 0.05f;
    std::vector<float> out = fs.apply_frame(frame);
    for (int i = 0; i < cfg.frame_dim(); ++i)
        CHECK(out[i] == static_cast<float>(sign[i]) * frame[src[i]]);
}

TEST_CASE("mode mismatches are rejected") {
    SymmetryOp s = fixture_op(ActionMode::joint, ObsModality::image);
    ActionChunk ee;
    ee.mode = ActionMode::ee;
    ee.steps.resize(1);
    CHECK_THROWS_AS(transform_action_chunk(s, ee), Error);

    Observation o;
    o.frames.resize(1);  // no image
    o.frames[0].proprio.left.joints = {0, 0};
    o.frames[0].proprio.right.joints = {0, 0};
    CHECK_THROWS_AS(transform_observation(s, o), Error);
}
