#pragma once

#include <memory>
#include <string>
#include <vector>

#include "equibim/train.hpp"

namespace equibim {

// Closed-loop actor: sees the m-frame feature history (oldest first) or, for
// privileged controllers, the raw world state.
class Controller {
  public:
    virtual ~Controller() = default;
    virtual bool needs_observation() const { return true; }
    virtual void reset_episode() {}
    virtual ActionStep decide(const WorldState& state,
                              const std::vector<std::vector<float>>& history) = 0;
};

class PolicyController : public Controller {
  public:
    explicit PolicyController(Policy p) : policy_(std::move(p)) {}
    const Policy& policy() const { return policy_; }
    ActionStep decide(const WorldState&, const std::vector<std::vector<float>>& history) override;

  private:
    Policy policy_;
};

// The scripted expert wrapped behind the controller interface.
class ExpertController : public Controller {
  public:
    ExpertController(const Simulator* sim, TaskSpec task, ActionMode mode)
        : sim_(sim), task_(task), mode_(mode) {}
    bool needs_observation() const override { return false; }
    ActionStep decide(const WorldState& s, const std::vector<std::vector<float>>&) override;

  private:
    const Simulator* sim_;
    TaskSpec task_;
    ActionMode mode_;
};

// Seeded noise in the action space; the sanity floor.
class RandomController : public Controller {
  public:
    RandomController(ActionLayout layout, uint64_t seed) : layout_(layout), seed_(seed) {}
    bool needs_observation() const override { return false; }
    void reset_episode() override { ++episode_; draw_ = 0; }
    ActionStep decide(const WorldState&, const std::vector<std::vector<float>>&) override;

  private:
    ActionLayout layout_;
    uint64_t seed_;
    int episode_ = -1;
    int draw_ = 0;
};

struct RolloutResult {
    int successes = 0;
    int episodes = 0;
    double rate() const { return episodes ? static_cast<double>(successes) / episodes : 0.0; }
};

// Receding-horizon execution: one action of each predicted chunk per control
// step, until success or the episode cap.
RolloutResult rollout_eval(const Simulator& sim, Controller& ctl, const TaskSpec& task,
                           int n_episodes, uint64_t seed, const FeaturizeConfig& fc);

// Mean over the observation set of chunk_distance(pi(S(O)), S(pi(O))).
double equivariance_error(const Policy& policy, const std::vector<Eigen::VectorXd>& observations,
                          const FeatureSymmetry& fs, const StepLinearMap& step_map);

// Featurized samples of a dataset (every step of every episode, capped).
std::vector<Eigen::VectorXd> dataset_observations(const Dataset& data, int cap);

struct ExperimentPlan {
    std::string task = "pick_place";
    int demo_count = 50;
    uint64_t demo_seed = 9000;
    std::string train_side = "both";
    int eval_episodes = 50;
    uint64_t eval_seed = 77000;  // disjoint from demo seeds
    std::vector<std::pair<std::string, std::string>> configs = {{"image", "joint"}};
    std::vector<std::string> modes = {"baseline", "equibim"};
    double lambda_sym = 1.0;
    std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
    int epochs = 60;
    int batch_size = 64;
    double lr_decay = 1.0;
    std::vector<int> hidden = {256, 256};
    uint64_t holdout_seed = 555;  // held-out demos for the equivariance metric
    int holdout_episodes = 6;
    int equiv_samples = 128;

    void validate() const;
};

ExperimentPlan plan_from_json_file(const std::string& path);

struct CellResult {
    std::string config;  // "image+joint"
    std::string mode;
    double lambda_sym = 0;
    uint64_t seed = 0;
    std::string train_side, eval_side;
    int n_episodes = 0;
    double success_rate = 0;
    double equiv_error = 0;
    double wall_clock_s = 0;
    std::string error;  // nonempty when the cell failed
};

struct EvalReport {
    std::vector<CellResult> rows;
};

// Trains and evaluates every (config, mode, seed) cell; demos are generated
// once per config and shared across seeds. Cells run on EQUIBIM_WORKERS
// threads (default: hardware concurrency); results are written once, sorted.
EvalReport run_experiment(const Simulator& sim, const ExperimentPlan& plan,
                          const std::string& out_dir);

void write_report_csv(const std::string& path, const EvalReport& report);
void write_report_plots(const std::string& dir, const EvalReport& report);

}  // namespace equibim
