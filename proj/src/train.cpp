#include "equibim/train.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "equibim/rng.hpp"

namespace equibim {

const char* to_string(TrainMode m) {
    switch (m) {
        case TrainMode::baseline: return "baseline";
        case TrainMode::equibim: return "equibim";
        default: return "augment";
    }
}

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "baseline") return TrainMode::baseline;
    if (s == "equibim") return TrainMode::equibim;
    if (s == "augment") return TrainMode::augment;
    throw Error("unknown training mode '" + s + "' (expected baseline|equibim|augment)");
}

void TrainConfig::validate() const {
    if (mode == TrainMode::baseline && lambda_sym != 0.0)
        throw Error("baseline mode requires lambda_sym = 0");
    if (lambda_sym < 0) throw Error("lambda_sym must be >= 0");
    if (batch_size < 1 || epochs < 1) throw Error("batch size and epochs must be positive");
    if (lr <= 0) throw Error("learning rate must be positive");
}

Eigen::VectorXd sample_features(const EpisodeRecord& ep, int t, const FeaturizeConfig& fc) {
    std::vector<std::vector<float>> frames;
    frames.reserve(fc.history);
    for (int k = fc.history - 1; k >= 0; --k) frames.push_back(ep.obs[std::max(0, t - k)]);
    return featurize(frames, fc);
}

double bc_loss(const ActionChunk& pred, const ActionChunk& label) {
    if (pred.mode != label.mode || pred.steps.size() != label.steps.size())
        throw Error("bc_loss: shape mismatch");
    ActionLayout layout{pred.mode,
                        pred.mode == ActionMode::joint
                            ? static_cast<int>(pred.steps[0].left.joints.size())
                            : 0,
                        static_cast<int>(pred.steps.size())};
    std::vector<double> a = encode_chunk(pred, layout), b = encode_chunk(label, layout);
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

double sym_loss(const Policy& p, const Eigen::VectorXd& features, const FeatureSymmetry& fs,
                const StepLinearMap& step_map) {
    ActionLayout layout = p.cfg.features.action_layout();
    Eigen::MatrixXd out = p.forward(features);
    Eigen::MatrixXd out_mirror = p.forward(fs.apply(features));
    const int sd = layout.step_dim();
    double total = 0;
    std::vector<double> in(sd);
    for (int s = 0; s < layout.horizon; ++s) {
        for (int i = 0; i < sd; ++i) in[i] = out(s * sd + i, 0);
        std::vector<double> mapped = step_map.apply(in);
        double ss = 0;
        for (int i = 0; i < sd; ++i) {
            double d = out_mirror(s * sd + i, 0) - mapped[i];
            ss += d * d;
        }
        total += std::sqrt(ss);
    }
    return total / layout.horizon;
}

namespace {

struct BatchLoss {
    int loss = -1, bc = -1, sym = -1;
};

// Shared between train() and grad_check(): the full taped objective.
BatchLoss build_loss(Tape& tape, const Policy& policy, const std::vector<int>& params,
                     const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                     const Eigen::MatrixXd* Xs, const Eigen::MatrixXd* Ys,
                     const StepLinearMap* step_map, double lambda, bool augment) {
    ActionLayout layout = policy.cfg.features.action_layout();
    BatchLoss r;
    int x = tape.input(X);
    int out = policy_forward_tape(tape, policy, x, params);
    r.bc = tape.mse_to(out, Y);
    r.loss = r.bc;
    if (Xs) {
        int x2 = tape.input(*Xs);
        int out2 = policy_forward_tape(tape, policy, x2, params);
        if (lambda > 0) {
            int mapped = tape.affine_steps(out, step_map, layout.horizon);
            if (!step_map->quat_dst.empty())
                mapped = tape.canon_quat(mapped, step_map, layout.horizon);
            int diff = tape.sub(out2, mapped);
            r.sym = tape.step_l2_mean(diff, layout.step_dim());
            r.loss = tape.axpy(1.0, r.loss, lambda, r.sym);
        }
        if (augment) {
            int aug = tape.mse_to(out2, *Ys);
            r.loss = tape.axpy(1.0, r.loss, 1.0, aug);
        }
    }
    return r;
}

struct AdamState {
    std::vector<Eigen::MatrixXd> mw, vw;
    std::vector<Eigen::VectorXd> mb, vb;
    long t = 0;

    explicit AdamState(const Policy& p) {
        for (size_t l = 0; l < p.weights.size(); ++l) {
            mw.push_back(Eigen::MatrixXd::Zero(p.weights[l].rows(), p.weights[l].cols()));
            vw.push_back(Eigen::MatrixXd::Zero(p.weights[l].rows(), p.weights[l].cols()));
            mb.push_back(Eigen::VectorXd::Zero(p.biases[l].size()));
            vb.push_back(Eigen::VectorXd::Zero(p.biases[l].size()));
        }
    }

    template <typename M, typename G>
    void update_one(M& w, M& m, M& v, const G& g, const TrainConfig& cfg, double bc1, double bc2) {
        m = cfg.beta1 * m + (1 - cfg.beta1) * g;
        v = cfg.beta2 * v.array().matrix() + (1 - cfg.beta2) * g.array().square().matrix();
        w.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
    }

    void step(Policy& p, Tape& tape, const std::vector<int>& params, const TrainConfig& cfg,
              double lr_scale) {
        ++t;
        double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        TrainConfig scaled = cfg;
        scaled.lr = cfg.lr * lr_scale;
        for (size_t l = 0; l < p.weights.size(); ++l) {
            const Eigen::MatrixXd& gw = tape.grad(params[2 * l]);
            update_one(p.weights[l], mw[l], vw[l], gw, scaled, bc1, bc2);
            Eigen::VectorXd gb = tape.grad(params[2 * l + 1]).col(0);
            update_one(p.biases[l], mb[l], vb[l], gb, scaled, bc1, bc2);
        }
    }
};

double grad_norm(Tape& tape, const std::vector<int>& params) {
    double s = 0;
    for (int n : params) s += tape.grad(n).squaredNorm();
    return std::sqrt(s);
}

}  // namespace

TrainResult train(const Dataset& data, const SymmetryOp& op, const TrainConfig& cfg) {
    cfg.validate();
    if (data.episodes.empty()) throw Error("empty dataset");

    FeaturizeConfig fc = data.manifest.featurize_config();
    if (fc.action_mode != op.action_mode || fc.modality != op.obs_modality)
        throw Error("dataset manifest does not match the symmetry operator");
    ActionLayout layout = fc.action_layout();

    PolicyConfig pc;
    pc.features = fc;
    pc.hidden = cfg.hidden;
    Policy policy = Policy::init(pc, cfg.seed);

    // Start the output layer at the label mean; the net learns residuals.
    {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(layout.flat_dim());
        long count = 0;
        for (const auto& ep : data.episodes)
            for (const auto& row : ep.actions) {
                for (int i = 0; i < layout.flat_dim(); ++i) mean[i] += static_cast<double>(row[i]);
                ++count;
            }
        if (count > 0) policy.biases.back() = mean / static_cast<double>(count);
    }

    FeatureSymmetry fs(op, fc);
    StepLinearMap step_map = build_action_step_symmetry(op, layout);
    const bool branch = cfg.mode != TrainMode::baseline &&
                        (cfg.lambda_sym > 0 || cfg.mode == TrainMode::augment);

    std::vector<std::pair<int, int>> index;
    for (size_t e = 0; e < data.episodes.size(); ++e)
        for (size_t t = 0; t < data.episodes[e].obs.size(); ++t)
            index.push_back({static_cast<int>(e), static_cast<int>(t)});

    AdamState adam(policy);
    TrainResult result;
    Policy snapshot = policy;

    const int D = fc.input_dim(), O = layout.flat_dim();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(cfg.seed, 7700 + epoch));
        for (size_t i = index.size(); i > 1; --i)
            std::swap(index[i - 1], index[shuffle_rng.uniform_int(0, static_cast<int>(i) - 1)]);

        double ep_bc = 0, ep_sym = 0, ep_gn = 0;
        long n_samples = 0;
        int n_batches = 0;
        bool finite = true;

        for (size_t at = 0; at < index.size() && finite; at += cfg.batch_size) {
            int b = static_cast<int>(std::min(index.size() - at, static_cast<size_t>(cfg.batch_size)));
            Eigen::MatrixXd X(D, b), Y(O, b);
            for (int k = 0; k < b; ++k) {
                auto [e, t] = index[at + k];
                X.col(k) = sample_features(data.episodes[e], t, fc);
                const std::vector<float>& row = data.episodes[e].actions[t];
                for (int i = 0; i < O; ++i) Y(i, k) = static_cast<double>(row[i]);
            }
            Eigen::MatrixXd Xs, Ys;
            if (branch) {
                Xs.resize(D, b);
                for (int k = 0; k < b; ++k) Xs.col(k) = fs.apply(X.col(k));
                if (cfg.mode == TrainMode::augment) {
                    Ys.resize(O, b);
                    std::vector<double> in(layout.step_dim());
                    for (int k = 0; k < b; ++k)
                        for (int s = 0; s < layout.horizon; ++s) {
                            for (int i = 0; i < layout.step_dim(); ++i)
                                in[i] = Y(s * layout.step_dim() + i, k);
                            std::vector<double> mapped = step_map.apply(in);
                            for (int i = 0; i < layout.step_dim(); ++i)
                                Ys(s * layout.step_dim() + i, k) = mapped[i];
                        }
                }
            }

            Tape tape;
            std::vector<int> params = tape_params(tape, policy);
            BatchLoss l = build_loss(tape, policy, params, X, Y, branch ? &Xs : nullptr,
                                     cfg.mode == TrainMode::augment ? &Ys : nullptr, &step_map,
                                     cfg.mode == TrainMode::baseline ? 0.0 : cfg.lambda_sym,
                                     cfg.mode == TrainMode::augment);
            double lv = tape.value(l.loss);
            if (!std::isfinite(lv)) {
                finite = false;
                break;
            }
            tape.backward(l.loss);
            double lr_scale = epoch >= (3 * cfg.epochs) / 4 ? cfg.lr_decay : 1.0;
            adam.step(policy, tape, params, cfg, lr_scale);

            ep_bc += tape.value(l.bc) * b;
            ep_sym += (l.sym >= 0 ? tape.value(l.sym) : 0.0) * b;
            ep_gn += grad_norm(tape, params);
            n_samples += b;
            ++n_batches;
        }

        if (!finite) {
            result.diverged = true;
            policy = snapshot;  // last finite checkpoint
            break;
        }
        EpochMetrics m;
        m.epoch = epoch;
        m.bc_loss = ep_bc / static_cast<double>(n_samples);
        m.sym_loss = ep_sym / static_cast<double>(n_samples);
        m.grad_norm = ep_gn / std::max(1, n_batches);
        result.metrics.push_back(m);
        snapshot = policy;
    }

    result.policy = std::move(policy);
    return result;
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& metrics) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write metrics csv: " + path);
    out << "epoch,bc_loss,sym_loss,grad_norm\n";
    char buf[128];
    for (const auto& m : metrics) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", m.epoch, m.bc_loss, m.sym_loss,
                      m.grad_norm);
        out << buf;
    }
}

double grad_check(const Policy& p, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                  const FeatureSymmetry& fs, const StepLinearMap& step_map, double lambda_sym,
                  int samples, double h, uint64_t seed) {
    Eigen::MatrixXd Xs(X.rows(), X.cols());
    for (Eigen::Index k = 0; k < X.cols(); ++k) Xs.col(k) = fs.apply(X.col(k));

    auto loss_value = [&](const Policy& q) {
        Tape tape;
        std::vector<int> params = tape_params(tape, q);
        BatchLoss l = build_loss(tape, q, params, X, Y, lambda_sym > 0 ? &Xs : nullptr, nullptr,
                                 &step_map, lambda_sym, false);
        return tape.value(l.loss);
    };

    Tape tape;
    std::vector<int> params = tape_params(tape, p);
    BatchLoss l = build_loss(tape, p, params, X, Y, lambda_sym > 0 ? &Xs : nullptr, nullptr,
                             &step_map, lambda_sym, false);
    tape.backward(l.loss);

    struct Slot {
        int layer;
        bool bias;
        Eigen::Index r, c;
    };
    std::vector<Slot> slots;
    for (size_t layer = 0; layer < p.weights.size(); ++layer) {
        for (Eigen::Index c = 0; c < p.weights[layer].cols(); ++c)
            for (Eigen::Index r = 0; r < p.weights[layer].rows(); ++r)
                slots.push_back({static_cast<int>(layer), false, r, c});
        for (Eigen::Index r = 0; r < p.biases[layer].size(); ++r)
            slots.push_back({static_cast<int>(layer), true, r, 0});
    }

    Rng rng(seed);
    double worst = 0;
    for (int s = 0; s < samples; ++s) {
        const Slot& slot = slots[rng.uniform_int(0, static_cast<int>(slots.size()) - 1)];
        double analytic =
            slot.bias ? tape.grad(params[2 * slot.layer + 1])(slot.r, 0)
                      : tape.grad(params[2 * slot.layer])(slot.r, slot.c);
        Policy plus = p, minus = p;
        if (slot.bias) {
            plus.biases[slot.layer](slot.r) += h;
            minus.biases[slot.layer](slot.r) -= h;
        } else {
            plus.weights[slot.layer](slot.r, slot.c) += h;
            minus.weights[slot.layer](slot.r, slot.c) -= h;
        }
        double fd = (loss_value(plus) - loss_value(minus)) / (2 * h);
        double rel = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-3});
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace equibim
