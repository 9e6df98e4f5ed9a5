#pragma once

#include "lwp/matrix.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace lwp::ad {

/// Shared state of one vertex in the computation graph.
///
/// The graph is built dynamically while ops run and is freed when the last
/// Node handle referencing it goes away. Only nodes that transitively depend
/// on a parameter keep parents and a backward rule; everything else is a
/// constant, which makes a forward pass over constants an inference pass.
struct NodeData {
    Matrix value;
    Matrix grad;
    std::vector<std::shared_ptr<NodeData>> parents;
    /// Pushes this node's grad into parents' grads.
    std::function<void(NodeData&)> backward_rule;
    std::string op;
    bool requires_grad = false;
    /// Set on the root after backward(); cleared by reset_gradients().
    bool backward_done = false;
};

/// Handle to a graph vertex. Cheap to copy; copies alias the same vertex.
class Node {
public:
    Node() = default;
    explicit Node(std::shared_ptr<NodeData> d) : d_(std::move(d)) {}

    const Matrix& value() const { return d_->value; }
    const Matrix& grad() const { return d_->grad; }
    std::size_t rows() const { return d_->value.rows(); }
    std::size_t cols() const { return d_->value.cols(); }
    bool requires_grad() const { return d_->requires_grad; }
    const std::string& op() const { return d_->op; }
    NodeData& data() const { return *d_; }
    const std::shared_ptr<NodeData>& handle() const { return d_; }
    explicit operator bool() const { return static_cast<bool>(d_); }

private:
    std::shared_ptr<NodeData> d_;
};

/// Leaf that receives gradients.
Node parameter(Matrix value);
/// Leaf that never receives gradients.
Node constant(Matrix value);

Node matmul(const Node& a, const Node& b);
Node transpose(const Node& a);
Node add(const Node& a, const Node& b);
Node sub(const Node& a, const Node& b);
/// a (N x C) plus row vector b (1 x C) broadcast over rows.
Node add_row(const Node& a, const Node& b);
Node hadamard(const Node& a, const Node& b);
Node scale(const Node& a, double s);
/// a divided by the scalar node s (1 x 1).
Node divide(const Node& a, const Node& s);
Node tanh(const Node& a);
Node relu(const Node& a);
Node exp(const Node& a);
/// Elementwise sqrt(a + eps). a + eps must be positive.
Node sqrt(const Node& a, double eps);
/// Sum of all entries, 1 x 1.
Node sum(const Node& a);

/// N x N matrix of squared Euclidean distances between rows of z.
/// Uses ||z_i||^2 + ||z_j||^2 - 2<z_i, z_j>, clamped at 0, with an exact
/// zero diagonal.
Node pairwise_sq_dist(const Node& z);

/// Each row divided by max(||row||, eps).
Node row_normalize(const Node& a, double eps);

/// Sum of squared entries, 1 x 1.
Node frobenius_sq(const Node& a);

/// Mean over rows of -sum_c t_c log softmax(logits)_c. Targets are
/// probability rows (sum to 1 within 1e-6); C must be at least 2.
Node softmax_cross_entropy(const Node& logits, const Matrix& targets);

/// Populates grad of every node reachable from the scalar `loss`.
/// Throws StateError if called again on the same root before
/// reset_gradients(), ShapeError for a non-scalar root.
void backward(const Node& loss);

/// Zeros every grad reachable from `root` and re-arms backward().
void reset_gradients(const Node& root);

/// Row-wise softmax of a plain matrix.
Matrix softmax_rows(const Matrix& logits);

}  // namespace lwp::ad
