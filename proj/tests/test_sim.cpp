#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "equibim/rng.hpp"
#include "equibim/sim.hpp"

using namespace equibim;

namespace {

const Simulator& sim() {
    static Simulator s;
    return s;
}

bool states_equal(const WorldState& a, const WorldState& b) {
    if (a.q != b.q || a.grip[0] != b.grip[0] || a.grip[1] != b.grip[1]) return false;
    return (a.object.position - b.object.position).norm() == 0.0 && a.attached == b.attached;
}

double state_residual(const WorldState& a, const WorldState& b) {
    double r = 0;
    for (size_t i = 0; i < a.q.size(); ++i) r = std::max(r, std::abs(a.q[i] - b.q[i]));
    r = std::max(r, std::abs(a.grip[0] - b.grip[0]));
    r = std::max(r, std::abs(a.grip[1] - b.grip[1]));
    r = std::max(r, (a.object.position - b.object.position).norm());
    if (a.attached != b.attached) r = 1.0;
    return r;
}

// Random reachable world state; with some probability the object is attached.
WorldState random_state(Rng& rng, bool allow_attached = true) {
    WorldState s;
    s.q.resize(8);
    for (auto& v : s.q) v = rng.uniform(-2.0, 2.0);
    s.grip[0] = rng.uniform(0, 1);
    s.grip[1] = rng.uniform(0, 1);
    s.object = {{rng.uniform(0.1, 0.5), rng.uniform(-0.35, 0.35), 0.0}, UnitQuat{}};
    s.goal = {{0.45, rng.coin() ? 0.18 : -0.18, 0.0}, UnitQuat{}};
    if (allow_attached && rng.uniform() < 0.3) {
        int arm = rng.coin() ? 0 : 1;
        s.attached = arm == 0 ? Attach::left : Attach::right;
        Pose ee = sim().ee_pose(s, arm);
        s.attach_offset = {{rng.uniform(-0.008, 0.008), rng.uniform(-0.008, 0.008), 0.0},
                           UnitQuat{}};
        RigidTransform obj =
            compose(RigidTransform::from_pose(ee), RigidTransform::from_pose(s.attach_offset));
        s.object = {obj.translation, obj.rotation.canonical()};
        s.grip[arm] = rng.uniform(0.0, 0.4);
    }
    return s;
}

ActionStep home_command(const Simulator& s) {
    ActionStep a;
    a.left.joints = {s.home_q().begin(), s.home_q().begin() + 4};
    a.right.joints = {s.home_q().begin() + 4, s.home_q().end()};
    a.left.gripper = a.right.gripper = 1.0;
    return a;
}

bool expert_rollout(const Simulator& s, const TaskSpec& task, uint64_t seed,
                    ActionMode mode = ActionMode::joint) {
    WorldState w = s.reset(task, seed);
    for (int t = 0; t < task.episode_cap; ++t) {
        ActionChunk c = s.scripted_expert(w, task, mode, s.config().horizon);
        w = s.step(w, c.steps[0], mode);
        if (s.success(w, task)) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("reset is deterministic and respects side filters") {
    TaskSpec task = make_task(TaskId::pick_place, SideFilter::left_only);
    WorldState a = sim().reset(task, 7), b = sim().reset(task, 7);
    CHECK(states_equal(a, b));

    for (uint64_t seed = 0; seed < 100; ++seed) {
        CHECK(sim().reset(task, seed).object.position.y > 0.0);
        TaskSpec right = make_task(TaskId::pick_place, SideFilter::right_only);
        CHECK(sim().reset(right, seed).object.position.y < 0.0);
    }
}

TEST_CASE("both-sides spawn fractions are balanced over 10000 seeds") {
    TaskSpec task = make_task(TaskId::pick_place, SideFilter::both);
    int lefts = 0;
    for (uint64_t seed = 0; seed < 10000; ++seed)
        if (sim().reset(task, seed).object.position.y > 0) ++lefts;
    double frac = lefts / 10000.0;
    CHECK(frac > 0.48);
    CHECK(frac < 0.52);
}

TEST_CASE("step: hold command, exact rate limit, no attach at 5cm") {
    TaskSpec task = make_task(TaskId::pick_place, SideFilter::left_only);
    WorldState s = sim().reset(task, 3);
    ActionStep hold;
    hold.left.joints = sim().arm_joints(s, 0);
    hold.right.joints = sim().arm_joints(s, 1);
    hold.left.gripper = hold.right.gripper = 1.0;
    WorldState n = sim().step(s, hold, ActionMode::joint);
    CHECK(n.q == s.q);
    CHECK(n.grip[0] == s.grip[0]);
    CHECK(n.step_index == s.step_index + 1);

    ActionStep far = hold;
    far.left.joints[0] = s.q[0] + 1.0;
    n = sim().step(s, far, ActionMode::joint);
    CHECK(n.q[0] == doctest::Approx(s.q[0] + 0.15).epsilon(1e-15));

    // closing at distance leaves the object unattached
    WorldState away = s;
    away.object.position = sim().ee_pose(s, 0).position + Vec3{0.05, 0.0, 0.0};
    ActionStep close = hold;
    close.left.gripper = 0.0;
    WorldState m = away;
    for (int i = 0; i < 6; ++i) m = sim().step(m, close, ActionMode::joint);
    CHECK(m.attached == Attach::none);
    CHECK(m.grip[0] == 0.0);

    ActionStep bad = hold;
    bad.left.joints[2] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(sim().step(s, bad, ActionMode::joint), Error);
}

TEST_CASE("grasp within tolerance attaches; opening detaches and object rests") {
    TaskSpec task = make_task(TaskId::pick_place, SideFilter::left_only);
    WorldState s = sim().reset(task, 11);
    s.object.position = sim().ee_pose(s, 0).position;  // under the left EE
    ActionStep close = home_command(sim());
    close.left.joints = sim().arm_joints(s, 0);
    close.left.gripper = 0.0;
    WorldState m = s;
    for (int i = 0; i < 4 && m.attached == Attach::none; ++i)
        m = sim().step(m, close, ActionMode::joint);
    CHECK(m.attached == Attach::left);

    ActionStep open = close;
    open.left.gripper = 1.0;
    Vec3 before = m.object.position;
    for (int i = 0; i < 4 && m.attached != Attach::none; ++i)
        m = sim().step(m, open, ActionMode::joint);
    CHECK(m.attached == Attach::none);
    CHECK((m.object.position - before).norm() < 1e-12);
}

TEST_CASE("success predicate") {
    TaskSpec task = make_task(TaskId::pick_place, SideFilter::both);
    WorldState s = sim().reset(task, 1);
    s.object.position = s.goal.position;
    s.attached = Attach::none;
    CHECK(sim().success(s, task));
    s.attached = Attach::left;
    CHECK(!sim().success(s, task));  // must be released
    s.attached = Attach::none;
    s.object.position = s.goal.position + Vec3{0.019, 0, 0};
    CHECK(sim().success(s, task));
    s.object.position = s.goal.position + Vec3{0.021, 0, 0};
    CHECK(!sim().success(s, task));

    // mirrored terminal state of a success is a success for the mirrored instance
    s.object.position = s.goal.position + Vec3{0.01, 0.005, 0};
    CHECK(sim().success(s, task));
    CHECK(sim().success(sim().mirror_state(s), task));
}

TEST_CASE("mirror_state is an involution") {
    Rng rng(2211);
    for (int i = 0; i < 50; ++i) {
        WorldState s = random_state(rng);
        WorldState back = sim().mirror_state(sim().mirror_state(s));
        CHECK(state_residual(back, s) < 1e-12);
    }
}

TEST_CASE("empty scene renders all background") {
    ImageGrid img = render_primitives({}, sim().t_cam(), 32, 32);
    for (float v : img.data) CHECK(v == 0.0f);
}

TEST_CASE("mirror-symmetric state: the image equals its own horizontal flip") {
    TaskSpec task = make_task(TaskId::pick_place, SideFilter::both);
    WorldState s = sim().reset(task, 5);
    s.object.position = {0.36, 0.0, 0.0};  // on the sagittal plane; arms at home
    ImageGrid img = sim().render_image(s);
    ImageGrid flipped = flip_image(img);
    int diff = 0;
    for (size_t i = 0; i < img.data.size(); ++i)
        if (img.data[i] != flipped.data[i]) ++diff;
    CHECK(diff == 0);
}

TEST_CASE("rendering commutes with the world mirror (image, 100 random states)") {
    Rng rng(909);
    double worst = 0;
    for (int i = 0; i < 100; ++i) {
        WorldState s = random_state(rng);
        ImageGrid a = sim().render_image(sim().mirror_state(s));
        ImageGrid b = flip_image(sim().render_image(s));
        double mae = 0;
        for (size_t k = 0; k < a.data.size(); ++k)
            mae += std::abs(static_cast<double>(a.data[k]) - b.data[k]);
        mae /= static_cast<double>(a.data.size());
        worst = std::max(worst, mae);
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("point clouds: determinism, structure, commutation (100 random states)") {
    Rng rng(4141);
    WorldState s0 = random_state(rng);
    PointCloud c1 = sim().render_pointcloud(s0, 256, 99);
    PointCloud c2 = sim().render_pointcloud(s0, 256, 99);
    REQUIRE(c1.points.size() == 256);
    for (size_t i = 0; i < c1.points.size(); ++i)
        CHECK((c1.points[i] - c2.points[i]).norm() == 0.0);

    // every point lies on an arm link or on the object boundary
    for (const auto& p : c1.points) {
        double best = (p - s0.object.position).norm() - sim().config().object_radius;
        best = std::abs(best);
        for (int arm = 0; arm < 2; ++arm) {
            std::vector<Vec3> pts = chain_joint_positions(sim().robot(), s0.q,
                                                          arm == 0 ? "left_ee" : "right_ee");
            for (size_t i = 0; i + 1 < pts.size(); ++i) {
                Vec3 d = pts[i + 1] - pts[i];
                double t = std::clamp((p - pts[i]).dot(d) / d.squared_norm(), 0.0, 1.0);
                best = std::min(best, (p - (pts[i] + t * d)).norm());
            }
        }
        CHECK(best < 1e-9);
    }

    double worst = 0;
    for (int i = 0; i < 100; ++i) {
        WorldState s = random_state(rng);
        PointCloud a = sim().render_pointcloud(sim().mirror_state(s), 256, 1234);
        PointCloud b = reflect_pointcloud(sim().render_pointcloud(s, 256, 1234), sim().t_cam());
        REQUIRE(a.points.size() == b.points.size());
        for (size_t k = 0; k < a.points.size(); ++k)
            worst = std::max(worst, (a.points[k] - b.points[k]).norm());
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("expert acts with the nearer arm only") {
    TaskSpec task = make_task(TaskId::pick_place, SideFilter::left_only);
    WorldState s = sim().reset(task, 21);
    ActionChunk c = sim().scripted_expert(s, task);
    std::vector<double> home_right(sim().home_q().begin() + 4, sim().home_q().end());
    CHECK(c.steps[0].right.joints == home_right);
    CHECK(c.steps[0].right.gripper == 1.0);
    bool left_moves = c.steps[0].left.joints != sim().arm_joints(s, 0);
    CHECK(left_moves);
}

TEST_CASE("expert equivariance over 200 random non-tie states") {
    Rng rng(31818);
    for (TaskId id : {TaskId::reach_touch, TaskId::pick_place, TaskId::handover}) {
        TaskSpec task = make_task(id, SideFilter::both);
        double worst = 0;
        int tested = 0;
        for (int i = 0; tested < 200 && i < 400; ++i) {
            WorldState s = random_state(rng);
            double dl = std::abs(s.object.position.y - sim().ee_pose(s, 0).position.y);
            double dr = std::abs(s.object.position.y - sim().ee_pose(s, 1).position.y);
            if (dl == dr) continue;  // exact ties are excluded by design
            ++tested;
            ActionChunk a = sim().scripted_expert(sim().mirror_state(s), task, ActionMode::joint, 4);
            ActionChunk b = transform_action_chunk(sim().symmetry_op(ActionMode::joint, ObsModality::image),
                                                   sim().scripted_expert(s, task, ActionMode::joint, 4));
            worst = std::max(worst, chunk_distance(a, b));
        }
        REQUIRE(tested == 200);
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("expert succeeds on all tasks (smoke scale)") {
    for (TaskId id : {TaskId::reach_touch, TaskId::pick_place, TaskId::handover}) {
        TaskSpec task = make_task(id, SideFilter::both);
        int ok = 0;
        for (uint64_t seed = 0; seed < 30; ++seed)
            if (expert_rollout(sim(), task, seed)) ++ok;
        CHECK(ok >= 29);
    }
}

TEST_CASE("expert succeeds in EE mode too") {
    TaskSpec task = make_task(TaskId::pick_place, SideFilter::both);
    int ok = 0;
    for (uint64_t seed = 100; seed < 120; ++seed)
        if (expert_rollout(sim(), task, seed, ActionMode::ee)) ++ok;
    CHECK(ok >= 19);
}

TEST_CASE("full-system equivariance: mirrored replay tracks the mirrored trajectory") {
    TaskSpec task = make_task(TaskId::pick_place, SideFilter::both);
    SymmetryOp op = sim().symmetry_op(ActionMode::joint, ObsModality::image);
    for (uint64_t seed : {0ull, 1ull, 2ull, 3ull, 4ull}) {
        WorldState s = sim().reset(task, seed);
        WorldState m = sim().mirror_state(s);
        for (int t = 0; t < 60; ++t) {
            ActionChunk c = sim().scripted_expert(s, task);
            ActionChunk cm = transform_action_chunk(op, c);
            s = sim().step(s, c.steps[0], ActionMode::joint);
            m = sim().step(m, cm.steps[0], ActionMode::joint);
            CHECK(state_residual(m, sim().mirror_state(s)) < 1e-6);
        }
    }
}

TEST_CASE("EE-mode IK tracks reachable poses") {
    TaskSpec task = make_task(TaskId::pick_place, SideFilter::left_only);
    WorldState s = sim().reset(task, 2);
    Vec3 target = s.object.position;
    std::vector<double> qt = sim().ik_position(s, 0, target);
    WorldState probe = s;
    for (int k = 0; k < 4; ++k) probe.q[k] = qt[k];
    CHECK((sim().ee_pose(probe, 0).position - target).norm() < 1e-6);
}
