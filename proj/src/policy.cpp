#include "equibim/policy.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "equibim/rng.hpp"

namespace equibim {

namespace {

std::vector<int> layer_sizes(const PolicyConfig& cfg) {
    std::vector<int> sizes;
    sizes.push_back(cfg.features.input_dim());
    for (int h : cfg.hidden) sizes.push_back(h);
    sizes.push_back(cfg.features.action_layout().flat_dim());
    return sizes;
}

nlohmann::json config_json(const PolicyConfig& cfg) {
    const FeaturizeConfig& f = cfg.features;
    nlohmann::json j;
    j["modality"] = to_string(f.modality);
    j["action_mode"] = to_string(f.action_mode);
    j["image_w"] = f.image_w;
    j["image_h"] = f.image_h;
    j["image_c"] = f.image_c;
    j["cloud_points"] = f.cloud_points;
    j["joints_per_arm"] = f.joints_per_arm;
    j["history"] = f.history;
    j["horizon"] = f.horizon;
    j["hidden"] = cfg.hidden;
    return j;
}

PolicyConfig config_from_json(const nlohmann::json& j) {
    PolicyConfig cfg;
    FeaturizeConfig& f = cfg.features;
    f.modality = obs_modality_from_string(j.at("modality").get<std::string>());
    f.action_mode = action_mode_from_string(j.at("action_mode").get<std::string>());
    f.image_w = j.at("image_w").get<int>();
    f.image_h = j.at("image_h").get<int>();
    f.image_c = j.at("image_c").get<int>();
    f.cloud_points = j.at("cloud_points").get<int>();
    f.joints_per_arm = j.at("joints_per_arm").get<int>();
    f.history = j.at("history").get<int>();
    f.horizon = j.at("horizon").get<int>();
    cfg.hidden = j.at("hidden").get<std::vector<int>>();
    return cfg;
}

}  // namespace

uint64_t policy_config_hash(const PolicyConfig& cfg) {
    return fnv1a(config_json(cfg).dump());
}

Policy Policy::init(const PolicyConfig& cfg, uint64_t seed) {
    Policy p;
    p.cfg = cfg;
    Rng rng(mix_seed(seed, policy_config_hash(cfg)));
    std::vector<int> sizes = layer_sizes(cfg);
    for (size_t l = 0; l + 1 < sizes.size(); ++l) {
        int in = sizes[l], out = sizes[l + 1];
        double bound = std::sqrt(6.0 / (in + out));
        Eigen::MatrixXd W(out, in);
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c) W(r, c) = rng.uniform(-bound, bound);
        p.weights.push_back(std::move(W));
        p.biases.push_back(Eigen::VectorXd::Zero(out));
    }
    return p;
}

size_t Policy::param_count() const {
    size_t n = 0;
    for (size_t l = 0; l < weights.size(); ++l)
        n += static_cast<size_t>(weights[l].size()) + biases[l].size();
    return n;
}

std::vector<int> Policy::quat_offsets() const {
    if (cfg.features.action_mode != ActionMode::ee) return {};
    return {3, 11};  // [pos(3) quat(4) grip][pos quat grip]
}

Eigen::MatrixXd Policy::forward(const Eigen::MatrixXd& X) const {
    if (X.rows() != input_dim()) throw Error("policy forward: feature length mismatch");
    Eigen::MatrixXd h = X;
    for (size_t l = 0; l < weights.size(); ++l) {
        h = (weights[l] * h).colwise() + biases[l];
        if (l + 1 < weights.size()) h = h.array().tanh();
    }
    ActionLayout layout = cfg.features.action_layout();
    for (int off : quat_offsets())
        for (Eigen::Index c = 0; c < h.cols(); ++c)
            for (int s = 0; s < layout.horizon; ++s) {
                int at = s * layout.step_dim() + off;
                double ss = 1e-12;
                for (int k = 0; k < 4; ++k) ss += h(at + k, c) * h(at + k, c);
                double inv = 1.0 / std::sqrt(ss);
                for (int k = 0; k < 4; ++k) h(at + k, c) *= inv;
            }
    return h;
}

ActionChunk Policy::act(const Eigen::VectorXd& features) const {
    Eigen::MatrixXd out = forward(features);
    std::vector<double> flat(out.data(), out.data() + out.size());
    return decode_chunk(flat, cfg.features.action_layout());
}

std::vector<int> tape_params(Tape& tape, const Policy& p) {
    std::vector<int> nodes;
    for (size_t l = 0; l < p.weights.size(); ++l) {
        nodes.push_back(tape.param(p.weights[l]));
        nodes.push_back(tape.param(p.biases[l]));
    }
    return nodes;
}

int policy_forward_tape(Tape& tape, const Policy& p, int x_node,
                        const std::vector<int>& param_nodes) {
    if (param_nodes.size() != 2 * p.weights.size())
        throw Error("policy_forward_tape: parameter node list mismatch");
    int h = x_node;
    for (size_t l = 0; l < p.weights.size(); ++l) {
        h = tape.add_col(tape.matmul(param_nodes[2 * l], h), param_nodes[2 * l + 1]);
        if (l + 1 < p.weights.size()) h = tape.tanh_of(h);
    }
    std::vector<int> offs = p.quat_offsets();
    if (!offs.empty()) {
        ActionLayout layout = p.cfg.features.action_layout();
        h = tape.quat_renorm(h, offs, layout.step_dim(), layout.horizon);
    }
    return h;
}

void save_policy(const std::string& path, const Policy& p) {
    nlohmann::json j = config_json(p.cfg);
    j["config_hash"] = policy_config_hash(p.cfg);
    std::string header = j.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint: " + path);
    out.write("EQBC", 4);
    uint32_t hl = static_cast<uint32_t>(header.size());
    char hb[4] = {static_cast<char>(hl & 0xff), static_cast<char>((hl >> 8) & 0xff),
                  static_cast<char>((hl >> 16) & 0xff), static_cast<char>((hl >> 24) & 0xff)};
    out.write(hb, 4);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    auto put = [&](double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
        out.write(b, 8);
    };
    for (size_t l = 0; l < p.weights.size(); ++l) {
        const Eigen::MatrixXd& W = p.weights[l];
        for (Eigen::Index c = 0; c < W.cols(); ++c)
            for (Eigen::Index r = 0; r < W.rows(); ++r) put(W(r, c));
        for (Eigen::Index r = 0; r < p.biases[l].size(); ++r) put(p.biases[l](r));
    }
    if (!out) throw Error("short write: " + path);
}

Policy load_policy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (all.size() < 8 || all.compare(0, 4, "EQBC") != 0)
        throw Error("not a checkpoint file: " + path);
    uint32_t hl = 0;
    for (int i = 0; i < 4; ++i)
        hl |= static_cast<uint32_t>(static_cast<unsigned char>(all[4 + i])) << (8 * i);
    if (all.size() < 8 + hl) throw Error("checkpoint header truncated");
    nlohmann::json j = nlohmann::json::parse(all.substr(8, hl));

    Policy p;
    p.cfg = config_from_json(j);
    if (j.at("config_hash").get<uint64_t>() != policy_config_hash(p.cfg))
        throw Error("checkpoint config hash mismatch");

    size_t at = 8 + hl;
    auto get = [&]() {
        if (at + 8 > all.size()) throw Error("checkpoint payload truncated");
        uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
            bits |= static_cast<uint64_t>(static_cast<unsigned char>(all[at + i])) << (8 * i);
        at += 8;
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    };
    std::vector<int> sizes = layer_sizes(p.cfg);
    for (size_t l = 0; l + 1 < sizes.size(); ++l) {
        Eigen::MatrixXd W(sizes[l + 1], sizes[l]);
        for (Eigen::Index c = 0; c < W.cols(); ++c)
            for (Eigen::Index r = 0; r < W.rows(); ++r) W(r, c) = get();
        Eigen::VectorXd b(sizes[l + 1]);
        for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = get();
        p.weights.push_back(std::move(W));
        p.biases.push_back(std::move(b));
    }
    if (at != all.size()) throw Error("trailing bytes in checkpoint: " + path);
    return p;
}

}  // namespace equibim
