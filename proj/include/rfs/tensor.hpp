#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "rfs/errors.hpp"

namespace rfs {

namespace detail {

struct Node {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated on demand, same length as data
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;  // reads this->grad, accumulates into parents

    std::size_t size() const { return data.size(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

}  // namespace detail

// Dense real tensor with reverse-mode gradient tracking. Value-semantic
// handle to a shared node; ops build a graph, backward() walks it once in
// reverse topological order. Data is row-major; shapes are 1-D or 2-D.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<double> data,
                       bool requires_grad = false);
    static Tensor scalar(double v);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int rows() const;
    int cols() const;
    std::size_t size() const { return node_->data.size(); }

    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }
    const std::vector<double>& grad() const;
    bool requires_grad() const { return node_->requires_grad; }

    // Scalar extraction; throws unless the tensor holds exactly one value.
    double value() const;

    void zero_grad();

    // Reverse-mode pass from a scalar output. Gradients accumulate into the
    // grad buffers of every reachable tensor with requires_grad set.
    void backward() const;

    // Constant deep copy of the current values; detaches from the graph.
    Tensor detach_copy() const;

    std::shared_ptr<detail::Node> node_;

private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
};

// ---- op set -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
// a: [r x c], v: [c]; adds v to every row of a.
Tensor add_rowvec(const Tensor& a, const Tensor& v);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sum_all(const Tensor& a);  // scalar sum of every element

// Row gather / column slice with scatter-add backward.
Tensor gather_rows(const Tensor& a, std::vector<int> row_indices);
Tensor slice_cols(const Tensor& a, int col_begin, int col_end);

// aug_logits: [4B x 4C] grouped so rows 4i..4i+3 are the four rotations of
// sample i. Output [B x C]: out[i][c] = 1/4 * sum_j aug[4i+j][4c+j].
Tensor aggregate_rotations(const Tensor& aug_logits, int class_count);

// Mean over batch of -log softmax(logits)[label]. Fused and stable.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
// Target rows are probability vectors; reduces to the hard version when the
// target is one-hot. Targets carry no gradient.
Tensor cross_entropy_soft(const Tensor& logits, const Tensor& targets);

// Mean over batch of KL(softmax(p/T) || softmax(q/T)). Gradients flow into
// both argument graphs.
Tensor kl_divergence(const Tensor& p_logits, const Tensor& q_logits,
                     double temperature = 1.0);

// Mean over rows of the Euclidean norm of each row.
Tensor l2_row_norm_mean(const Tensor& a);

// Weighted sum of scalar tensors; the assembly point for composite losses.
Tensor weighted_sum(const std::vector<Tensor>& terms,
                    const std::vector<double>& weights);

// ---- non-autodiff utilities ----------------------------------------------

// Row-wise softmax of a [B x C] tensor's values; no graph involvement.
std::vector<double> softmax_rows(const Tensor& logits);
// Per-row argmax with ties broken toward the lowest index.
std::vector<int> argmax_rows(const Tensor& t);

}  // namespace rfs
