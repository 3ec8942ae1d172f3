#include "equibim/eval.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

#include <json.hpp>

#include "equibim/rng.hpp"

namespace equibim {

namespace fs_std = std::filesystem;

ActionStep PolicyController::decide(const WorldState&,
                                    const std::vector<std::vector<float>>& history) {
    Eigen::VectorXd x = featurize(history, policy_.cfg.features);
    return policy_.act(x).steps[0];
}

ActionStep ExpertController::decide(const WorldState& s, const std::vector<std::vector<float>>&) {
    return sim_->scripted_expert(s, task_, mode_, sim_->config().horizon).steps[0];
}

ActionStep RandomController::decide(const WorldState&, const std::vector<std::vector<float>>&) {
    Rng rng(mix_seed(seed_, static_cast<uint64_t>(episode_) * 100000 + draw_++));
    ActionStep step;
    for (ArmBlock* arm : {&step.left, &step.right}) {
        if (layout_.mode == ActionMode::joint) {
            arm->joints.resize(layout_.joints_per_arm);
            for (auto& v : arm->joints) v = rng.uniform(-2.0, 2.0);
        } else {
            arm->ee.position = {rng.uniform(0.0, 0.6), rng.uniform(-0.5, 0.5), 0.0};
            arm->ee.orientation =
                UnitQuat{rng.normal(), rng.normal(), rng.normal(), rng.normal()}.normalized();
        }
        arm->gripper = rng.uniform(0, 1);
    }
    return step;
}

RolloutResult rollout_eval(const Simulator& sim, Controller& ctl, const TaskSpec& task,
                           int n_episodes, uint64_t seed, const FeaturizeConfig& fc) {
    if (n_episodes < 1) throw Error("rollout_eval needs at least one episode");
    RolloutResult result;
    result.episodes = n_episodes;
    const bool observe = ctl.needs_observation();
    for (int ep = 0; ep < n_episodes; ++ep) {
        uint64_t ep_seed = mix_seed(seed, ep);
        WorldState s = sim.reset(task, ep_seed);
        ctl.reset_episode();
        std::vector<std::vector<float>> history;
        if (observe) {
            std::vector<float> f0 = frame_features(sim.observe(s, fc.modality, fc.action_mode), fc);
            history.assign(fc.history, f0);
        }
        for (int t = 0; t < task.episode_cap; ++t) {
            ActionStep a = ctl.decide(s, history);
            s = sim.step(s, a, fc.action_mode);
            if (sim.success(s, task)) {
                ++result.successes;
                break;
            }
            if (observe) {
                history.erase(history.begin());
                history.push_back(
                    frame_features(sim.observe(s, fc.modality, fc.action_mode), fc));
            }
        }
    }
    return result;
}

double equivariance_error(const Policy& policy, const std::vector<Eigen::VectorXd>& observations,
                          const FeatureSymmetry& fs, const StepLinearMap& step_map) {
    if (observations.empty()) throw Error("equivariance_error: empty observation set");
    double total = 0;
    for (const auto& o : observations) total += sym_loss(policy, o, fs, step_map);
    return total / static_cast<double>(observations.size());
}

std::vector<Eigen::VectorXd> dataset_observations(const Dataset& data, int cap) {
    FeaturizeConfig fc = data.manifest.featurize_config();
    std::vector<std::pair<int, int>> index;
    for (size_t e = 0; e < data.episodes.size(); ++e)
        for (size_t t = 0; t < data.episodes[e].obs.size(); ++t)
            index.push_back({static_cast<int>(e), static_cast<int>(t)});
    std::vector<Eigen::VectorXd> out;
    if (index.empty()) return out;
    size_t n = std::min<size_t>(cap, index.size());
    for (size_t k = 0; k < n; ++k) {
        auto [e, t] = index[k * index.size() / n];
        out.push_back(sample_features(data.episodes[e], t, fc));
    }
    return out;
}

void ExperimentPlan::validate() const {
    if (configs.empty() || modes.empty() || seeds.empty()) throw Error("plan has an empty axis");
    if (demo_count < 1 || eval_episodes < 1 || epochs < 1) throw Error("plan counts must be positive");
    for (uint64_t s : seeds)
        if (s == demo_seed) throw Error("training seeds must be disjoint from the demo seed");
    task_from_string(task);
    side_from_string(train_side);
    for (const auto& m : modes) train_mode_from_string(m);
    for (const auto& c : configs) {
        obs_modality_from_string(c.first);
        action_mode_from_string(c.second);
    }
}

ExperimentPlan plan_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open plan file: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    ExperimentPlan p;
    if (j.contains("task")) p.task = j["task"].get<std::string>();
    if (j.contains("demo_count")) p.demo_count = j["demo_count"].get<int>();
    if (j.contains("demo_seed")) p.demo_seed = j["demo_seed"].get<uint64_t>();
    if (j.contains("train_side")) p.train_side = j["train_side"].get<std::string>();
    if (j.contains("eval_episodes")) p.eval_episodes = j["eval_episodes"].get<int>();
    if (j.contains("eval_seed")) p.eval_seed = j["eval_seed"].get<uint64_t>();
    if (j.contains("configs")) {
        p.configs.clear();
        for (const auto& c : j["configs"])
            p.configs.push_back({c.at("modality").get<std::string>(),
                                 c.at("action_mode").get<std::string>()});
    }
    if (j.contains("modes")) p.modes = j["modes"].get<std::vector<std::string>>();
    if (j.contains("lambda_sym")) p.lambda_sym = j["lambda_sym"].get<double>();
    if (j.contains("seeds")) p.seeds = j["seeds"].get<std::vector<uint64_t>>();
    if (j.contains("epochs")) p.epochs = j["epochs"].get<int>();
    if (j.contains("lr_decay")) p.lr_decay = j["lr_decay"].get<double>();
    if (j.contains("batch_size")) p.batch_size = j["batch_size"].get<int>();
    if (j.contains("hidden")) p.hidden = j["hidden"].get<std::vector<int>>();
    if (j.contains("holdout_seed")) p.holdout_seed = j["holdout_seed"].get<uint64_t>();
    if (j.contains("holdout_episodes")) p.holdout_episodes = j["holdout_episodes"].get<int>();
    if (j.contains("equiv_samples")) p.equiv_samples = j["equiv_samples"].get<int>();
    p.validate();
    return p;
}

namespace {

std::string mirror_side(const std::string& side) {
    if (side == "left") return "right";
    if (side == "right") return "left";
    return "right";  // both-sides training still gets a mirrored-only probe
}

int worker_count(size_t cells) {
    if (const char* env = std::getenv("EQUIBIM_WORKERS")) {
        int n = std::atoi(env);
        if (n >= 1) return static_cast<int>(std::min<size_t>(n, cells));
    }
    unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::min<size_t>(hw ? hw : 1, cells));
}

std::string dataset_key(const std::string& task, const std::string& modality,
                        const std::string& action, const std::string& side, int count,
                        uint64_t seed) {
    return task + "_" + modality + "_" + action + "_" + side + "_" + std::to_string(count) + "_" +
           std::to_string(seed);
}

// Generate-if-missing, keyed by content-determining parameters.
Dataset ensure_dataset(const Simulator& sim, const std::string& dir, const TaskSpec& task,
                       int count, uint64_t seed, ObsModality om, ActionMode am) {
    if (!fs_std::exists(dir + "/manifest.json"))
        generate_demos(sim, task, count, seed, om, am, dir);
    return load_dataset(dir);
}

}  // namespace

EvalReport run_experiment(const Simulator& sim, const ExperimentPlan& plan,
                          const std::string& out_dir) {
    plan.validate();
    fs_std::create_directories(out_dir + "/datasets");
    fs_std::create_directories(out_dir + "/ckpt");
    fs_std::create_directories(out_dir + "/metrics");
    fs_std::create_directories(out_dir + "/plots");

    TaskId task_id = task_from_string(plan.task);
    SideFilter train_side = side_from_string(plan.train_side);

    // Demo + holdout corpora per config, shared across modes and seeds.
    struct ConfigData {
        ObsModality om;
        ActionMode am;
        Dataset train;
        std::vector<Eigen::VectorXd> holdout;
    };
    std::vector<ConfigData> data(plan.configs.size());
    for (size_t c = 0; c < plan.configs.size(); ++c) {
        ConfigData& cd = data[c];
        cd.om = obs_modality_from_string(plan.configs[c].first);
        cd.am = action_mode_from_string(plan.configs[c].second);
        TaskSpec task = make_task(task_id, train_side);
        std::string dir = out_dir + "/datasets/" +
                          dataset_key(plan.task, plan.configs[c].first, plan.configs[c].second,
                                      plan.train_side, plan.demo_count, plan.demo_seed);
        cd.train = ensure_dataset(sim, dir, task, plan.demo_count, plan.demo_seed, cd.om, cd.am);

        TaskSpec holdout_task = make_task(task_id, SideFilter::both);
        std::string hdir = out_dir + "/datasets/" +
                           dataset_key(plan.task, plan.configs[c].first, plan.configs[c].second,
                                       "both", plan.holdout_episodes, plan.holdout_seed);
        Dataset holdout = ensure_dataset(sim, hdir, holdout_task, plan.holdout_episodes,
                                         plan.holdout_seed, cd.om, cd.am);
        cd.holdout = dataset_observations(holdout, plan.equiv_samples);
    }

    struct Cell {
        size_t config;
        std::string mode;
        uint64_t seed;
    };
    std::vector<Cell> cells;
    for (size_t c = 0; c < plan.configs.size(); ++c)
        for (const auto& m : plan.modes)
            for (uint64_t s : plan.seeds) cells.push_back({c, m, s});

    std::vector<std::vector<CellResult>> slots(cells.size());
    std::atomic<size_t> next{0};

    auto work = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const Cell& cell = cells[i];
            const ConfigData& cd = data[cell.config];
            std::string config_name =
                plan.configs[cell.config].first + "+" + plan.configs[cell.config].second;
            std::string cell_name = plan.task + "_" + plan.configs[cell.config].first + "_" +
                                    plan.configs[cell.config].second + "_" + cell.mode + "_s" +
                                    std::to_string(cell.seed);
            auto t0 = std::chrono::steady_clock::now();
            std::vector<CellResult> rows;
            try {
                TrainMode mode = train_mode_from_string(cell.mode);
                TrainConfig tc;
                tc.mode = mode;
                tc.lambda_sym = mode == TrainMode::equibim ? plan.lambda_sym : 0.0;
                tc.epochs = plan.epochs;
                tc.batch_size = plan.batch_size;
                tc.lr_decay = plan.lr_decay;
                tc.hidden = plan.hidden;
                tc.seed = cell.seed;

                SymmetryOp op = sim.symmetry_op(cd.am, cd.om);
                TrainResult tr = train(cd.train, op, tc);
                save_policy(out_dir + "/ckpt/" + cell_name + ".ckpt", tr.policy);
                write_metrics_csv(out_dir + "/metrics/" + cell_name + ".csv", tr.metrics);

                FeaturizeConfig fc = cd.train.manifest.featurize_config();
                FeatureSymmetry fsym(op, fc);
                StepLinearMap smap = build_action_step_symmetry(op, fc.action_layout());
                double equiv = equivariance_error(tr.policy, cd.holdout, fsym, smap);

                for (const std::string& eval_side : {std::string("both"), mirror_side(plan.train_side)}) {
                    PolicyController ctl(tr.policy);
                    TaskSpec eval_task = make_task(task_id, side_from_string(eval_side));
                    RolloutResult rr =
                        rollout_eval(sim, ctl, eval_task, plan.eval_episodes, plan.eval_seed, fc);
                    CellResult row;
                    row.config = config_name;
                    row.mode = cell.mode;
                    row.lambda_sym = tc.lambda_sym;
                    row.seed = cell.seed;
                    row.train_side = plan.train_side;
                    row.eval_side = eval_side;
                    row.n_episodes = plan.eval_episodes;
                    row.success_rate = rr.rate();
                    row.equiv_error = equiv;
                    rows.push_back(row);
                }
            } catch (const std::exception& e) {
                CellResult row;
                row.config = config_name;
                row.mode = cell.mode;
                row.seed = cell.seed;
                row.train_side = plan.train_side;
                row.eval_side = "both";
                row.success_rate = std::nan("");
                row.equiv_error = std::nan("");
                row.error = e.what();
                rows.push_back(row);
            }
            double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            for (auto& r : rows) r.wall_clock_s = wall;
            slots[i] = std::move(rows);
        }
    };

    int n_workers = worker_count(cells.size());
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers - 1; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    EvalReport report;
    for (auto& rows : slots)
        for (auto& r : rows) report.rows.push_back(std::move(r));
    std::sort(report.rows.begin(), report.rows.end(), [](const CellResult& a, const CellResult& b) {
        return std::tie(a.config, a.mode, a.seed, a.eval_side) <
               std::tie(b.config, b.mode, b.seed, b.eval_side);
    });

    write_report_csv(out_dir + "/report.csv", report);
    write_report_plots(out_dir + "/plots", report);

    std::ofstream errs(out_dir + "/errors.txt", std::ios::trunc);
    for (const auto& r : report.rows)
        if (!r.error.empty())
            errs << r.config << " " << r.mode << " seed=" << r.seed << ": " << r.error << "\n";
    return report;
}

void write_report_csv(const std::string& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write report: " + path);
    out << "config,mode,lambda_sym,seed,train_side,eval_side,n_episodes,success_rate,equiv_error,"
           "wall_clock_s\n";
    char buf[256];
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%.3g,%llu,%s,%s,%d,%.4f,%.6e,%.3f\n",
                      r.config.c_str(), r.mode.c_str(), r.lambda_sym,
                      static_cast<unsigned long long>(r.seed), r.train_side.c_str(),
                      r.eval_side.c_str(), r.n_episodes, r.success_rate, r.equiv_error,
                      r.wall_clock_s);
        out << buf;
    }
}

namespace {

struct Bar {
    std::string label;
    double value;
    std::string color;
};

void write_bar_svg(const std::string& path, const std::string& title, const std::vector<Bar>& bars,
                   double y_max) {
    const int W = 640, H = 400, ml = 60, mb = 80, mt = 40, mr = 20;
    const int plot_w = W - ml - mr, plot_h = H - mt - mb;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write plot: " + path);
    char buf[512];
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\">\n";
    out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
        << "</text>\n";
    // axes
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", ml,
                  mt + plot_h, ml + plot_w, mt + plot_h);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", ml, mt, ml,
                  mt + plot_h);
    out << buf;
    for (int tick = 0; tick <= 4; ++tick) {
        double v = y_max * tick / 4.0;
        int y = mt + plot_h - static_cast<int>(plot_h * tick / 4.0);
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%d\" text-anchor=\"end\" font-size=\"11\">%.3g</text>\n",
                      ml - 6, y + 4, v);
        out << buf;
    }
    if (!bars.empty()) {
        double bw = static_cast<double>(plot_w) / bars.size();
        for (size_t i = 0; i < bars.size(); ++i) {
            double frac = y_max > 0 ? std::min(1.0, std::max(0.0, bars[i].value / y_max)) : 0.0;
            int h = static_cast<int>(plot_h * frac);
            int x = ml + static_cast<int>(i * bw) + 6;
            int w = std::max(4, static_cast<int>(bw) - 12);
            std::snprintf(buf, sizeof(buf),
                          "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"%s\"/>\n", x,
                          mt + plot_h - h, w, h, bars[i].color.c_str());
            out << buf;
            std::snprintf(
                buf, sizeof(buf),
                "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\" font-size=\"10\">%.3g</text>\n",
                x + w / 2, mt + plot_h - h - 4, bars[i].value);
            out << buf;
            std::snprintf(buf, sizeof(buf),
                          "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\" font-size=\"10\" "
                          "transform=\"rotate(35 %d %d)\">%s</text>\n",
                          x + w / 2, mt + plot_h + 16, x + w / 2, mt + plot_h + 16,
                          bars[i].label.c_str());
            out << buf;
        }
    }
    out << "</svg>\n";
}

std::string mode_color(const std::string& mode) {
    if (mode == "baseline") return "#888888";
    if (mode == "equibim") return "#2c7fb8";
    return "#7fbc41";
}

}  // namespace

void write_report_plots(const std::string& dir, const EvalReport& report) {
    // success by config x mode, both-sides eval, mean over seeds
    std::map<std::pair<std::string, std::string>, std::pair<double, int>> success;
    std::map<std::string, std::pair<double, int>> equiv;
    for (const auto& r : report.rows) {
        if (!r.error.empty()) continue;
        if (r.eval_side == "both") {
            auto& s = success[{r.config, r.mode}];
            s.first += r.success_rate;
            s.second += 1;
        }
        auto& e = equiv[r.mode];
        e.first += r.equiv_error;
        e.second += 1;
    }
    std::vector<Bar> sbars;
    for (const auto& [key, agg] : success)
        sbars.push_back({key.first + " " + key.second, agg.first / agg.second,
                         mode_color(key.second)});
    write_bar_svg(dir + "/success_by_config.svg", "Success rate by configuration and mode", sbars,
                  1.0);

    std::vector<Bar> ebars;
    double emax = 0;
    for (const auto& [mode, agg] : equiv) emax = std::max(emax, agg.first / agg.second);
    for (const auto& [mode, agg] : equiv)
        ebars.push_back({mode, agg.first / agg.second, mode_color(mode)});
    write_bar_svg(dir + "/equivariance_by_mode.svg", "Held-out equivariance error by mode", ebars,
                  emax > 0 ? emax * 1.15 : 1.0);
}

}  // namespace equibim
