#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "equibim/eval.hpp"
#include "equibim/rng.hpp"

using namespace equibim;
namespace fs = std::filesystem;

namespace {

const Simulator& sim() {
    static Simulator s;
    return s;
}

std::string tmp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("equibim_eval_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

// S o pi o S: the mirrored policy used by the equivariance property tests.
class MirroredPolicyController : public Controller {
  public:
    MirroredPolicyController(Policy p, const SymmetryOp& op)
        : policy_(std::move(p)),
          fs_(op, policy_.cfg.features),
          map_(build_action_step_symmetry(op, policy_.cfg.features.action_layout())) {}

    ActionStep decide(const WorldState&, const std::vector<std::vector<float>>& history) override {
        std::vector<std::vector<float>> mirrored;
        for (const auto& f : history) mirrored.push_back(fs_.apply_frame(f));
        Eigen::VectorXd x = featurize(mirrored, policy_.cfg.features);
        Eigen::MatrixXd out = policy_.forward(x);
        ActionLayout layout = policy_.cfg.features.action_layout();
        std::vector<double> first(out.col(0).data(), out.col(0).data() + layout.step_dim());
        std::vector<double> mapped = map_.apply(first);
        std::vector<double> flat;
        for (int s = 0; s < layout.horizon; ++s)
            flat.insert(flat.end(), mapped.begin(), mapped.end());
        return decode_chunk(flat, layout).steps[0];
    }

  private:
    Policy policy_;
    FeatureSymmetry fs_;
    StepLinearMap map_;
};

}  // namespace

TEST_CASE("expert controller clears the quality bar on pick_place") {
    TaskSpec task = make_task(TaskId::pick_place, SideFilter::both);
    ExpertController ctl(&sim(), task, ActionMode::joint);
    FeaturizeConfig fc = sim().featurize_config(ObsModality::image, ActionMode::joint);
    RolloutResult r = rollout_eval(sim(), ctl, task, 100, 31337, fc);
    CHECK(r.rate() >= 0.95);
}

TEST_CASE("random controller stays at the sanity floor") {
    TaskSpec task = make_task(TaskId::pick_place, SideFilter::both);
    FeaturizeConfig fc = sim().featurize_config(ObsModality::pointcloud, ActionMode::joint);
    RandomController ctl(fc.action_layout(), 5);
    RolloutResult r = rollout_eval(sim(), ctl, task, 40, 909, fc);
    CHECK(r.rate() <= 0.05);
}

TEST_CASE("rollout_eval is deterministic in (controller, seed)") {
    TaskSpec task = make_task(TaskId::pick_place, SideFilter::both);
    FeaturizeConfig fc = sim().featurize_config(ObsModality::pointcloud, ActionMode::joint);
    PolicyConfig pc;
    pc.features = fc;
    pc.hidden = {16};
    Policy p = Policy::init(pc, 4);
    PolicyController a(p), b(p);
    RolloutResult ra = rollout_eval(sim(), a, task, 5, 11, fc);
    RolloutResult rb = rollout_eval(sim(), b, task, 5, 11, fc);
    CHECK(ra.successes == rb.successes);
}

TEST_CASE("equivariance_error: zero policy, set-order invariance, empty set") {
    FeaturizeConfig fc = sim().featurize_config(ObsModality::pointcloud, ActionMode::joint);
    SymmetryOp op = sim().symmetry_op(ActionMode::joint, ObsModality::pointcloud);
    FeatureSymmetry fsym(op, fc);
    StepLinearMap map = build_action_step_symmetry(op, fc.action_layout());

    PolicyConfig pc;
    pc.features = fc;
    pc.hidden = {16};
    Policy zero = Policy::init(pc, 1);
    for (auto& w : zero.weights) w.setZero();

    TaskSpec task = make_task(TaskId::pick_place, SideFilter::both);
    std::vector<Eigen::VectorXd> obs;
    for (uint64_t s = 0; s < 8; ++s) {
        WorldState w = sim().reset(task, s);
        std::vector<float> f =
            frame_features(sim().observe(w, fc.modality, fc.action_mode), fc);
        obs.push_back(featurize({f, f}, fc));
    }
    CHECK(equivariance_error(zero, obs, fsym, map) < 1e-12);

    Policy p = Policy::init(pc, 9);
    double e1 = equivariance_error(p, obs, fsym, map);
    std::vector<Eigen::VectorXd> reversed(obs.rbegin(), obs.rend());
    double e2 = equivariance_error(p, reversed, fsym, map);
    CHECK(std::abs(e1 - e2) < 1e-9);
    CHECK(e1 > 0.0);

    // replacing each O by S(O) leaves the metric unchanged
    std::vector<Eigen::VectorXd> mirrored;
    for (const auto& o : obs) mirrored.push_back(fsym.apply(o));
    double e3 = equivariance_error(p, mirrored, fsym, map);
    CHECK(std::abs(e1 - e3) < 1e-9);

    CHECK_THROWS_AS(equivariance_error(p, {}, fsym, map), Error);
}

TEST_CASE("mirrored policy on mirrored spawns reproduces the mirrored trajectory") {
    FeaturizeConfig fc = sim().featurize_config(ObsModality::pointcloud, ActionMode::joint);
    SymmetryOp op = sim().symmetry_op(ActionMode::joint, ObsModality::pointcloud);
    PolicyConfig pc;
    pc.features = fc;
    pc.hidden = {16};
    Policy p = Policy::init(pc, 77);

    TaskSpec left = make_task(TaskId::pick_place, SideFilter::left_only);
    TaskSpec right = make_task(TaskId::pick_place, SideFilter::right_only);
    for (uint64_t seed : {3ull, 9ull}) {
        WorldState a = sim().reset(left, seed);
        WorldState b = sim().reset(right, seed);
        CHECK((b.object.position - sim().mirror_state(a).object.position).norm() < 1e-12);

        PolicyController ctl_a(p);
        MirroredPolicyController ctl_b(p, op);
        std::vector<float> fa = frame_features(sim().observe(a, fc.modality, fc.action_mode), fc);
        std::vector<float> fb = frame_features(sim().observe(b, fc.modality, fc.action_mode), fc);
        std::vector<std::vector<float>> ha(fc.history, fa), hb(fc.history, fb);
        for (int t = 0; t < 40; ++t) {
            a = sim().step(a, ctl_a.decide(a, ha), ActionMode::joint);
            b = sim().step(b, ctl_b.decide(b, hb), ActionMode::joint);
            WorldState want = sim().mirror_state(a);
            CHECK((b.object.position - want.object.position).norm() < 1e-6);
            double dq = 0;
            for (int i = 0; i < 8; ++i) dq = std::max(dq, std::abs(b.q[i] - want.q[i]));
            CHECK(dq < 1e-6);
            ha.erase(ha.begin());
            ha.push_back(frame_features(sim().observe(a, fc.modality, fc.action_mode), fc));
            hb.erase(hb.begin());
            hb.push_back(frame_features(sim().observe(b, fc.modality, fc.action_mode), fc));
        }
    }
}

TEST_CASE("run_experiment: tiny plan, deterministic CSV modulo wall clock") {
    ExperimentPlan plan;
    plan.task = "pick_place";
    plan.demo_count = 2;
    plan.demo_seed = 501;
    plan.train_side = "left";
    plan.eval_episodes = 2;
    plan.eval_seed = 7001;
    plan.configs = {{"pointcloud", "joint"}};
    plan.modes = {"baseline", "equibim"};
    plan.seeds = {1};
    plan.epochs = 2;
    plan.batch_size = 16;
    plan.hidden = {8};
    plan.holdout_episodes = 2;
    plan.holdout_seed = 881;
    plan.equiv_samples = 16;

    std::string out1 = tmp_dir("exp1");
    EvalReport rep = run_experiment(sim(), plan, out1);
    REQUIRE(rep.rows.size() == 4);  // 2 modes x (both + mirrored right eval)
    for (const auto& r : rep.rows) {
        CHECK(r.error.empty());
        CHECK(r.success_rate >= 0.0);
        CHECK(r.success_rate <= 1.0);
        CHECK(r.train_side == "left");
    }
    CHECK(fs::exists(out1 + "/report.csv"));
    CHECK(fs::exists(out1 + "/plots/success_by_config.svg"));
    CHECK(fs::exists(out1 + "/plots/equivariance_by_mode.svg"));
    CHECK(fs::exists(out1 + "/ckpt/pick_place_pointcloud_joint_baseline_s1.ckpt"));
    CHECK(fs::exists(out1 + "/metrics/pick_place_pointcloud_joint_equibim_s1.csv"));

    std::string out2 = tmp_dir("exp2");
    run_experiment(sim(), plan, out2);
    auto strip_wall = [](const std::string& path) {
        std::ifstream in(path);
        std::string all, line;
        while (std::getline(in, line)) {
            size_t last = line.rfind(',');
            all += line.substr(0, last) + "\n";
        }
        return all;
    };
    CHECK(strip_wall(out1 + "/report.csv") == strip_wall(out2 + "/report.csv"));

    // datasets are reused byte-identically across runs
    std::string key = "pick_place_pointcloud_joint_left_2_501";
    std::ifstream a(out1 + "/datasets/" + key + "/ep_0.bin", std::ios::binary);
    std::ifstream b(out2 + "/datasets/" + key + "/ep_0.bin", std::ios::binary);
    std::string ba((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string bb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(ba == bb);
}

TEST_CASE("plan validation rejects seed overlap and empty axes") {
    ExperimentPlan plan;
    plan.seeds = {plan.demo_seed};
    CHECK_THROWS_AS(plan.validate(), Error);
    ExperimentPlan p2;
    p2.modes.clear();
    CHECK_THROWS_AS(p2.validate(), Error);
}
