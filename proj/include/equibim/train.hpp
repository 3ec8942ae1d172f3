#pragma once

#include <string>
#include <vector>

#include "equibim/dataset.hpp"
#include "equibim/policy.hpp"

namespace equibim {

enum class TrainMode { baseline, equibim, augment };

const char* to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
    double lr = 1e-3;
    double lr_decay = 1.0;  // lr multiplier over the last quarter of training
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int batch_size = 64;
    int epochs = 200;
    double lambda_sym = 1.0;  // must be 0 in baseline mode
    TrainMode mode = TrainMode::equibim;
    uint64_t seed = 1;
    std::vector<int> hidden{256, 256};

    void validate() const;
};

struct EpochMetrics {
    int epoch = 0;
    double bc_loss = 0, sym_loss = 0, grad_norm = 0;
};

struct TrainResult {
    Policy policy;
    std::vector<EpochMetrics> metrics;
    bool diverged = false;
};

// History features of sample (episode, t): frames [t-m+1, t], left-padded by
// repeating the first frame.
Eigen::VectorXd sample_features(const EpisodeRecord& ep, int t, const FeaturizeConfig& fc);

// Plain (tape-free) behavior-cloning loss, the oracle side of grad_check.
double bc_loss(const ActionChunk& pred, const ActionChunk& label);

// chunk_distance(pi(S(o)), S(pi(o))) for a single featurized observation.
double sym_loss(const Policy& p, const Eigen::VectorXd& features, const FeatureSymmetry& fs,
                const StepLinearMap& step_map);

// Adam on L_bc + lambda * L_sym (+ mirrored BC in augment mode) over shuffled
// mini-batches. Deterministic given the config seed.
TrainResult train(const Dataset& data, const SymmetryOp& op, const TrainConfig& cfg);

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& metrics);

// Max relative error between tape gradients of L_bc + lambda*L_sym and central
// finite differences (step h) on `samples` randomly chosen parameters.
double grad_check(const Policy& p, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                  const FeatureSymmetry& fs, const StepLinearMap& step_map, double lambda_sym,
                  int samples = 200, double h = 1e-5, uint64_t seed = 7);

}  // namespace equibim
