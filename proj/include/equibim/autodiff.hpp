#pragma once

#include <vector>

#include <Eigen/Core>

#include "equibim/symmetry.hpp"

namespace equibim {

// Reverse-mode autodiff over a recorded graph of matrix operations. One Tape
// per forward/backward pass; batches are matrix columns.
class Tape {
  public:
    using Mat = Eigen::MatrixXd;

    int input(Mat value);                 // leaf, no gradient
    // Gradient-tracked leaf. The lvalue overload references the caller's
    // storage, which must outlive the tape; rvalues are stored on the tape.
    int param(const Mat& value);
    int param(Mat&& value);

    int matmul(int a, int b);             // A * B
    int add_col(int a, int bias);         // broadcast a column vector over columns
    int tanh_of(int a);
    int sub(int a, int b);

    // Per column, per step block of `map.dim` rows: linear part + offset.
    int affine_steps(int a, const StepLinearMap* map, int steps);
    // Multiplies each quaternion block by its canonical sign (detached).
    int canon_quat(int a, const StepLinearMap* map, int steps);
    // Normalizes 4-row quaternion blocks at `offsets` within each step block;
    // smooth at zero via q / sqrt(|q|^2 + 1e-12).
    int quat_renorm(int a, std::vector<int> offsets, int step_dim, int steps);

    int mse_to(int a, Mat target);        // scalar: mean squared error
    int step_l2_mean(int a, int step_dim);// scalar: mean per-step L2 over cols
    int axpy(double ca, int a, double cb, int b);  // scalar combine

    double value(int node) const { return val(node)(0, 0); }
    const Mat& val(int node) const { return v(node); }

    void backward(int node);
    const Mat& grad(int node) const { return nodes_[node].grad; }

  private:
    enum class Op {
        input, param, matmul, add_col, tanh_op, sub, affine, canon, renorm, mse, stepl2, axpy
    };
    struct Node {
        Op op;
        int a = -1, b = -1;
        const Mat* ext = nullptr;  // external value storage for parameter leaves
        Mat val;
        Mat grad;
        // op-specific payloads
        const StepLinearMap* map = nullptr;
        int steps = 0, step_dim = 0;
        std::vector<int> offsets;
        Mat aux;        // mse target / canonical signs
        double ca = 0, cb = 0;
    };
    std::vector<Node> nodes_;

    int push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }
    const Mat& v(int i) const;
    Mat& g(int i);
};

}  // namespace equibim
