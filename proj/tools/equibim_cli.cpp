#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "equibim/dataset.hpp"
#include "equibim/eval.hpp"

using namespace equibim;

namespace {

// "x y z qw qx qy qz" or "identity".
RigidTransform parse_plane(const std::string& text) {
    if (text.empty() || text == "identity") return RigidTransform::identity();
    std::istringstream ss(text);
    double v[7];
    for (int i = 0; i < 7; ++i)
        if (!(ss >> v[i])) throw Error("--plane expects 'identity' or 7 numbers: x y z qw qx qy qz");
    std::string extra;
    if (ss >> extra) throw Error("--plane has trailing tokens");
    UnitQuat q{v[3], v[4], v[5], v[6]};
    if (!q.unit_within(1e-6)) throw Error("--plane quaternion is not unit length");
    return {q.normalized(), {v[0], v[1], v[2]}};
}

// Leaf links of the kinematic tree, for tip auto-detection.
std::vector<std::string> leaf_links(const RobotModel& m) {
    std::vector<std::string> leaves;
    for (const auto& l : m.links) {
        bool has_child = false;
        for (const auto& j : m.joints)
            if (j.parent_link == l) has_child = true;
        if (!has_child) leaves.push_back(l);
    }
    return leaves;
}

int cmd_gen(const std::string& task, int count, const std::string& side, uint64_t seed,
            const std::string& out, const std::string& modality, const std::string& action_mode) {
    Simulator sim;
    TaskSpec spec = make_task(task_from_string(task), side_from_string(side));
    DatasetManifest m = generate_demos(sim, spec, count, seed, obs_modality_from_string(modality),
                                       action_mode_from_string(action_mode), out);
    std::printf("wrote %d episodes to %s (obs_dim=%d act_dim=%d)\n", m.count, out.c_str(),
                m.obs_dim, m.act_dim);
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& mode, double lambda, int epochs,
              uint64_t seed, int batch, double lr_decay, const std::string& out) {
    Dataset data = load_dataset(data_dir);
    Simulator sim;
    TrainConfig cfg;
    cfg.mode = train_mode_from_string(mode);
    cfg.lambda_sym = lambda;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.batch_size = batch;
    cfg.lr_decay = lr_decay;
    cfg.validate();

    SymmetryOp op = sim.symmetry_op(action_mode_from_string(data.manifest.action_mode),
                                    obs_modality_from_string(data.manifest.modality));
    TrainResult r = train(data, op, cfg);
    save_policy(out, r.policy);
    write_metrics_csv(out + ".metrics.csv", r.metrics);
    std::printf("%s: %zu params, %d epochs, final bc=%.6g sym=%.6g%s\n", out.c_str(),
                r.policy.param_count(), static_cast<int>(r.metrics.size()),
                r.metrics.empty() ? 0.0 : r.metrics.back().bc_loss,
                r.metrics.empty() ? 0.0 : r.metrics.back().sym_loss,
                r.diverged ? " (diverged, kept last finite checkpoint)" : "");
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& task, int episodes,
             const std::string& side, uint64_t seed) {
    Policy p = load_policy(ckpt);
    Simulator sim;
    TaskSpec spec = make_task(task_from_string(task), side_from_string(side));
    PolicyController ctl(p);
    RolloutResult r = rollout_eval(sim, ctl, spec, episodes, seed, p.cfg.features);
    std::printf("success_rate %.4f (%d/%d)\n", r.rate(), r.successes, r.episodes);
    return 0;
}

int cmd_report(const std::string& plan_path, const std::string& out) {
    ExperimentPlan plan = plan_from_json_file(plan_path);
    Simulator sim;
    EvalReport report = run_experiment(sim, plan, out);
    int failed = 0;
    for (const auto& r : report.rows)
        if (!r.error.empty()) ++failed;
    std::printf("report: %zu rows -> %s/report.csv (%d failed cells)\n", report.rows.size(),
                out.c_str(), failed);
    return 0;
}

int cmd_check_symmetry(const std::string& urdf, const std::string& plane_text,
                       std::string left_tip, std::string right_tip, int samples) {
    RobotModel model = parse_robot_file(urdf);
    RigidTransform plane = parse_plane(plane_text);
    if (left_tip.empty() || right_tip.empty()) {
        std::vector<std::string> leaves = leaf_links(model);
        if (leaves.size() != 2)
            throw Error("expected exactly two leaf links for tip auto-detection, found " +
                        std::to_string(leaves.size()) + "; pass --left-tip/--right-tip");
        std::vector<double> zero(model.actuated_joints().size(), 0.0);
        double y0 = forward_kinematics(model, zero, leaves[0]).position.y;
        double y1 = forward_kinematics(model, zero, leaves[1]).position.y;
        left_tip = y0 >= y1 ? leaves[0] : leaves[1];
        right_tip = y0 >= y1 ? leaves[1] : leaves[0];
    }

    DiscoveryConfig cfg;
    cfg.samples = std::max(16, samples);
    JointSymmetryMap map = discover_joint_symmetry(model, left_tip, right_tip, plane, cfg);
    double residual = symmetry_certificate(model, map, left_tip, right_tip, plane, 256, 20260);

    std::printf("robot: %s   chains: %s <-> %s\n", model.name.c_str(), left_tip.c_str(),
                right_tip.c_str());
    auto act = model.actuated_joints();
    std::printf("%-16s %-16s sign\n", "joint", "partner");
    for (size_t i = 0; i < act.size(); ++i) {
        const Joint& j = model.joints[act[i]];
        const Joint& partner = model.joints[act[map.perm[i]]];
        std::printf("%-16s %-16s %+g\n", j.name.c_str(), partner.name.c_str(), map.sign[i]);
    }
    std::printf("certificate residual over 256 held-out configurations: %.3e\n", residual);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"equibim: symmetry-equivariant bimanual imitation learning kit"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "generate expert demonstration datasets");
    std::string g_task = "pick_place", g_side = "both", g_out, g_mod = "image", g_act = "joint";
    int g_count = 50;
    uint64_t g_seed = 0;
    gen->add_option("--task", g_task, "reach_touch|pick_place|handover");
    gen->add_option("--count", g_count, "number of successful episodes")->required();
    gen->add_option("--side", g_side, "left|right|both");
    gen->add_option("--seed", g_seed, "generator seed")->required();
    gen->add_option("--out", g_out, "output dataset directory")->required();
    gen->add_option("--modality", g_mod, "image|pointcloud");
    gen->add_option("--action-mode", g_act, "joint|ee");

    auto* tr = app.add_subcommand("train", "train a behavior-cloning policy");
    std::string t_data, t_mode = "equibim", t_out;
    double t_lambda = -1.0;
    int t_epochs = 200;
    uint64_t t_seed = 1;
    tr->add_option("--data", t_data, "dataset directory")->required();
    tr->add_option("--mode", t_mode, "baseline|equibim|augment");
    tr->add_option("--lambda-sym", t_lambda, "symmetry loss weight (default: 1 for equibim, 0 otherwise)");
    tr->add_option("--epochs", t_epochs, "training epochs");
    tr->add_option("--seed", t_seed, "training seed");
    int t_batch = 64;
    tr->add_option("--batch", t_batch, "mini-batch size");
    double t_decay = 1.0;
    tr->add_option("--lr-decay", t_decay, "lr multiplier over the last quarter of training");
    tr->add_option("--out", t_out, "checkpoint output path")->required();

    auto* ev = app.add_subcommand("eval", "closed-loop rollout evaluation");
    std::string e_ckpt, e_task = "pick_place", e_side = "both";
    int e_episodes = 50;
    uint64_t e_seed = 100;
    ev->add_option("--ckpt", e_ckpt, "checkpoint path")->required();
    ev->add_option("--task", e_task, "reach_touch|pick_place|handover");
    ev->add_option("--episodes", e_episodes, "number of rollout episodes");
    ev->add_option("--side", e_side, "left|right|both spawn filter");
    ev->add_option("--seed", e_seed, "evaluation seed");

    auto* rp = app.add_subcommand("report", "run an experiment plan and emit CSV + SVG");
    std::string r_plan, r_out;
    rp->add_option("--plan", r_plan, "experiment plan JSON")->required();
    rp->add_option("--out", r_out, "output directory")->required();

    auto* cs = app.add_subcommand("check-symmetry",
                                  "discover the joint symmetry map of a robot description");
    std::string c_urdf, c_plane = "identity", c_left, c_right;
    int c_samples = 64;
    cs->add_option("--urdf", c_urdf, "robot description path")->required();
    cs->add_option("--plane", c_plane, "'identity' or 'x y z qw qx qy qz' extrinsics");
    cs->add_option("--left-tip", c_left, "left chain tip link (auto-detected by default)");
    cs->add_option("--right-tip", c_right, "right chain tip link");
    cs->add_option("--samples", c_samples, "global validation samples");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*gen) {
            if (g_count < 1) {
                std::fprintf(stderr, "usage error: --count must be at least 1\n");
                return 1;
            }
            return cmd_gen(g_task, g_count, g_side, g_seed, g_out, g_mod, g_act);
        }
        if (*tr) {
            TrainMode mode = train_mode_from_string(t_mode);
            if (mode == TrainMode::baseline && t_lambda > 0) {
                std::fprintf(stderr, "usage error: baseline mode requires --lambda-sym 0\n");
                return 1;
            }
            double lambda = t_lambda >= 0 ? t_lambda : (mode == TrainMode::equibim ? 1.0 : 0.0);
            return cmd_train(t_data, t_mode, lambda, t_epochs, t_seed, t_batch, t_decay, t_out);
        }
        if (*ev) {
            if (e_episodes < 1) {
                std::fprintf(stderr, "usage error: --episodes must be at least 1\n");
                return 1;
            }
            return cmd_eval(e_ckpt, e_task, e_episodes, e_side, e_seed);
        }
        if (*rp) return cmd_report(r_plan, r_out);
        if (*cs) return cmd_check_symmetry(c_urdf, c_plane, c_left, c_right, c_samples);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
