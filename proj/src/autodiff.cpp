#include "equibim/autodiff.hpp"

namespace equibim {

using Mat = Tape::Mat;

int Tape::input(Mat value) {
    Node n;
    n.op = Op::input;
    n.val = std::move(value);
    return push(std::move(n));
}

int Tape::param(const Mat& value) {
    Node n;
    n.op = Op::param;
    n.ext = &value;  // caller keeps the storage alive for the tape's lifetime
    return push(std::move(n));
}

int Tape::param(Mat&& value) {
    Node n;
    n.op = Op::param;
    n.val = std::move(value);
    return push(std::move(n));
}

int Tape::matmul(int a, int b) {
    Node n;
    n.op = Op::matmul;
    n.a = a;
    n.b = b;
    n.val.noalias() = v(a) * v(b);
    return push(std::move(n));
}

int Tape::add_col(int a, int bias) {
    Node n;
    n.op = Op::add_col;
    n.a = a;
    n.b = bias;
    n.val = v(a).colwise() + Eigen::VectorXd(v(bias).col(0));
    return push(std::move(n));
}

int Tape::tanh_of(int a) {
    Node n;
    n.op = Op::tanh_op;
    n.a = a;
    n.val = v(a).array().tanh();
    return push(std::move(n));
}

int Tape::sub(int a, int b) {
    Node n;
    n.op = Op::sub;
    n.a = a;
    n.b = b;
    n.val = v(a) - v(b);
    return push(std::move(n));
}

int Tape::affine_steps(int a, const StepLinearMap* map, int steps) {
    const Mat& x = v(a);
    if (x.rows() != static_cast<Eigen::Index>(map->dim) * steps)
        throw Error("affine_steps: row count does not match step layout");
    Node n;
    n.op = Op::affine;
    n.a = a;
    n.map = map;
    n.steps = steps;
    n.val.resize(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c)
        for (int s = 0; s < steps; ++s) {
            const double* in = x.col(c).data() + static_cast<size_t>(s) * map->dim;
            double* out = n.val.col(c).data() + static_cast<size_t>(s) * map->dim;
            map->apply_linear(in, out);
            for (int i = 0; i < map->dim; ++i) out[i] += map->offset[i];
        }
    return push(std::move(n));
}

int Tape::canon_quat(int a, const StepLinearMap* map, int steps) {
    const Mat& x = v(a);
    Node n;
    n.op = Op::canon;
    n.a = a;
    n.map = map;
    n.steps = steps;
    n.val = x;
    size_t nblocks = map->quat_dst.size();
    n.aux = Mat::Ones(static_cast<Eigen::Index>(nblocks) * steps, x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c)
        for (int s = 0; s < steps; ++s)
            for (size_t b = 0; b < nblocks; ++b) {
                int at = s * map->dim + map->quat_dst[b];
                double w = x(at, c), qx = x(at + 1, c), qy = x(at + 2, c), qz = x(at + 3, c);
                bool flip =
                    w < 0.0 ||
                    (w == 0.0 && (qx < 0.0 || (qx == 0.0 && (qy < 0.0 || (qy == 0.0 && qz < 0.0)))));
                if (flip) {
                    n.aux(static_cast<Eigen::Index>(s * nblocks + b), c) = -1.0;
                    for (int k = 0; k < 4; ++k) n.val(at + k, c) = -x(at + k, c);
                }
            }
    return push(std::move(n));
}

int Tape::quat_renorm(int a, std::vector<int> offsets, int step_dim, int steps) {
    const Mat& x = v(a);
    Node n;
    n.op = Op::renorm;
    n.a = a;
    n.offsets = std::move(offsets);
    n.step_dim = step_dim;
    n.steps = steps;
    n.val = x;
    for (Eigen::Index c = 0; c < x.cols(); ++c)
        for (int s = 0; s < steps; ++s)
            for (int off : n.offsets) {
                int at = s * step_dim + off;
                double ss = 1e-12;
                for (int k = 0; k < 4; ++k) ss += x(at + k, c) * x(at + k, c);
                double inv = 1.0 / std::sqrt(ss);
                for (int k = 0; k < 4; ++k) n.val(at + k, c) = x(at + k, c) * inv;
            }
    return push(std::move(n));
}

int Tape::mse_to(int a, Mat target) {
    const Mat& x = v(a);
    if (x.rows() != target.rows() || x.cols() != target.cols())
        throw Error("mse_to: shape mismatch");
    Node n;
    n.op = Op::mse;
    n.a = a;
    n.aux = std::move(target);
    double numel = static_cast<double>(x.size());
    n.val = Mat::Constant(1, 1, (x - n.aux).squaredNorm() / numel);
    return push(std::move(n));
}

int Tape::step_l2_mean(int a, int step_dim) {
    const Mat& x = v(a);
    if (x.rows() % step_dim != 0) throw Error("step_l2_mean: rows not a multiple of step_dim");
    int steps = static_cast<int>(x.rows()) / step_dim;
    Node n;
    n.op = Op::stepl2;
    n.a = a;
    n.step_dim = step_dim;
    n.steps = steps;
    double total = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c)
        for (int s = 0; s < steps; ++s)
            total += x.col(c).segment(static_cast<Eigen::Index>(s) * step_dim, step_dim).norm();
    n.val = Mat::Constant(1, 1, total / (static_cast<double>(steps) * x.cols()));
    return push(std::move(n));
}

int Tape::axpy(double ca, int a, double cb, int b) {
    Node n;
    n.op = Op::axpy;
    n.a = a;
    n.b = b;
    n.ca = ca;
    n.cb = cb;
    n.val = Mat::Constant(1, 1, ca * value(a) + (b >= 0 ? cb * value(b) : 0.0));
    return push(std::move(n));
}

const Mat& Tape::v(int i) const {
    const Node& n = nodes_[i];
    return n.ext ? *n.ext : n.val;
}

Mat& Tape::g(int i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) n.grad = Mat::Zero(v(i).rows(), v(i).cols());
    return n.grad;
}

void Tape::backward(int node) {
    g(node) = Mat::Constant(1, 1, 1.0);
    for (int i = node; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.grad.size() == 0) continue;
        const Mat& gr = n.grad;
        switch (n.op) {
            case Op::input:
            case Op::param:
                break;
            case Op::matmul:
                g(n.a).noalias() += gr * v(n.b).transpose();
                g(n.b).noalias() += v(n.a).transpose() * gr;
                break;
            case Op::add_col:
                g(n.a) += gr;
                g(n.b).col(0) += gr.rowwise().sum();
                break;
            case Op::tanh_op:
                g(n.a).array() += gr.array() * (1.0 - n.val.array().square());
                break;
            case Op::sub:
                g(n.a) += gr;
                g(n.b) -= gr;
                break;
            case Op::affine: {
                Mat& ga = g(n.a);
                std::vector<double> tmp(n.map->dim);
                for (Eigen::Index c = 0; c < gr.cols(); ++c)
                    for (int s = 0; s < n.steps; ++s) {
                        const double* gin = gr.col(c).data() + static_cast<size_t>(s) * n.map->dim;
                        n.map->apply_transpose(gin, tmp.data());
                        double* out = ga.col(c).data() + static_cast<size_t>(s) * n.map->dim;
                        for (int k = 0; k < n.map->dim; ++k) out[k] += tmp[k];
                    }
                break;
            }
            case Op::canon: {
                Mat& ga = g(n.a);
                ga += gr;  // identity away from flipped blocks
                size_t nblocks = n.map->quat_dst.size();
                for (Eigen::Index c = 0; c < gr.cols(); ++c)
                    for (int s = 0; s < n.steps; ++s)
                        for (size_t b = 0; b < nblocks; ++b)
                            if (n.aux(static_cast<Eigen::Index>(s * nblocks + b), c) < 0) {
                                int at = s * n.map->dim + n.map->quat_dst[b];
                                for (int k = 0; k < 4; ++k) ga(at + k, c) -= 2.0 * gr(at + k, c);
                            }
                break;
            }
            case Op::renorm: {
                Mat& ga = g(n.a);
                const Mat& x = v(n.a);
                ga += gr;
                for (Eigen::Index c = 0; c < gr.cols(); ++c)
                    for (int s = 0; s < n.steps; ++s)
                        for (int off : n.offsets) {
                            int at = s * n.step_dim + off;
                            double ss = 1e-12;
                            for (int k = 0; k < 4; ++k) ss += x(at + k, c) * x(at + k, c);
                            double inv = 1.0 / std::sqrt(ss);
                            double dot = 0;
                            for (int k = 0; k < 4; ++k) dot += x(at + k, c) * gr(at + k, c);
                            for (int k = 0; k < 4; ++k)
                                ga(at + k, c) += (gr(at + k, c) * inv - gr(at + k, c)) -
                                                 x(at + k, c) * dot * inv * inv * inv;
                        }
                break;
            }
            case Op::mse: {
                double numel = static_cast<double>(v(n.a).size());
                g(n.a) += gr(0, 0) * 2.0 / numel * (v(n.a) - n.aux);
                break;
            }
            case Op::stepl2: {
                const Mat& x = v(n.a);
                Mat& ga = g(n.a);
                double scale = gr(0, 0) / (static_cast<double>(n.steps) * x.cols());
                for (Eigen::Index c = 0; c < x.cols(); ++c)
                    for (int s = 0; s < n.steps; ++s) {
                        auto blk = x.col(c).segment(static_cast<Eigen::Index>(s) * n.step_dim,
                                                    n.step_dim);
                        double r = blk.norm();
                        if (r < 1e-12) continue;
                        ga.col(c).segment(static_cast<Eigen::Index>(s) * n.step_dim, n.step_dim) +=
                            (scale / r) * blk;
                    }
                break;
            }
            case Op::axpy:
                g(n.a)(0, 0) += n.ca * gr(0, 0);
                if (n.b >= 0) g(n.b)(0, 0) += n.cb * gr(0, 0);
                break;
        }
    }
}

}  // namespace equibim
