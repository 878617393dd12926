#pragma once

#include <cstdint>
#include <vector>

#include "psi/flowexpert/mat.hpp"

namespace psi::flowexpert {

/// Reverse-mode autodiff over a per-sample tape. Nodes are created in forward
/// order and hold their values; backward() walks the tape in reverse and
/// accumulates gradients, writing parameter gradients into caller-owned
/// matrices. Graphs are cheap and rebuilt for every sample.
class Graph {
public:
    /// Leaf holding a constant; never receives a gradient.
    int input(Mat value);

    /// Leaf backed by caller-owned storage; backward() adds into *grad.
    int param(const Mat* value, Mat* grad);

    int matmul(int a, int b);
    int add(int a, int b);
    int sub(int a, int b);
    int hadamard(int a, int b);
    int scale(int a, double s);

    /// row is 1 x C; applied to every row of a (R x C).
    int add_row(int a, int row);
    int mul_row(int a, int row);

    int tanh_op(int a);
    int silu(int a);

    /// Per-row standardization (x - mean) / sqrt(var + 1e-5), no affine part.
    int layernorm_rows(int a);

    int softmax_rows(int a);
    /// Softmax with entries j > i forced to zero probability.
    int softmax_rows_causal(int a);

    int transpose(int a);
    int concat_rows(int a, int b);
    int slice_rows(int a, int r0, int r1);
    int slice_cols(int a, int c0, int c1);
    int concat_cols(const std::vector<int>& parts);
    int gather_rows(int a, std::vector<int> indices);
    int reshape(int a, int rows, int cols);

    /// Mean squared error over the entries of unmasked rows; row_mask[r] true
    /// means row r is excluded. Requires at least one unmasked row
    /// ("empty loss support" otherwise).
    int mean_sq_error_masked(int pred, int target, std::vector<uint8_t> row_mask);

    /// Mean over rows of -log softmax(logits_row)[target_row].
    int cross_entropy_rows(int logits, std::vector<int> targets);

    const Mat& value(int id) const;
    /// Gradient of the last backward() pass at this node; empty matrix if the
    /// node was not reached.
    const Mat& grad(int id) const;

    /// Seeds d(loss)/d(loss) = 1 at a scalar node and propagates to all leaves.
    void backward(int loss_id);

private:
    enum class Op : uint8_t {
        input, param, matmul, add, sub, hadamard, scale, add_row, mul_row,
        tanh_, silu, layernorm, softmax, softmax_causal, transpose,
        concat_rows, slice_rows, slice_cols, concat_cols, gather_rows,
        reshape, mse_masked, cross_entropy,
    };

    struct Node {
        Op op;
        std::vector<int> in;
        Mat val;
        Mat grad;
        Mat* param_grad = nullptr;
        double scalar = 0.0;
        int i0 = 0;
        int i1 = 0;
        std::vector<int> indices;
        std::vector<uint8_t> mask;
        Mat aux;  // op-specific saved forward state
    };

    int push(Node n);
    Mat& grad_of(int id);
    void backprop_node(int id);

    std::vector<Node> nodes_;
};

}  // namespace psi::flowexpert
