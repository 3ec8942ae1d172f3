#pragma once

#include <string>
#include <vector>

#include "equibim/autodiff.hpp"
#include "equibim/symmetry.hpp"

namespace equibim {

struct PolicyConfig {
    FeaturizeConfig features;
    std::vector<int> hidden{256, 256};  // tanh hidden layers; linear output
};

uint64_t policy_config_hash(const PolicyConfig& cfg);

// MLP from featurized observation history to a flattened action chunk.
struct Policy {
    PolicyConfig cfg;
    std::vector<Eigen::MatrixXd> weights;  // layer i: out x in
    std::vector<Eigen::VectorXd> biases;

    static Policy init(const PolicyConfig& cfg, uint64_t seed);

    int input_dim() const { return cfg.features.input_dim(); }
    int output_dim() const { return cfg.features.action_layout().flat_dim(); }
    size_t param_count() const;

    // Batched forward; columns are samples. EE-mode quaternion blocks are
    // renormalized to unit length.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& X) const;

    // Single observation to an executable chunk.
    ActionChunk act(const Eigen::VectorXd& features) const;

    // Quaternion block offsets within one action step (EE mode); empty in joint mode.
    std::vector<int> quat_offsets() const;
};

void save_policy(const std::string& path, const Policy& p);
Policy load_policy(const std::string& path);

// Registers the policy parameters on the tape (weights/biases interleaved).
std::vector<int> tape_params(Tape& tape, const Policy& p);

// Builds the taped forward pass on existing parameter nodes; both branches of
// the symmetry loss share them so gradients accumulate in one place.
int policy_forward_tape(Tape& tape, const Policy& p, int x_node,
                        const std::vector<int>& param_nodes);

}  // namespace equibim
