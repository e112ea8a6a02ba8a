#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "gfus/rng.hpp"
#include "gfus/tensor.hpp"

namespace gfus {

enum class OpKind : std::uint8_t {
    leaf,
    matmul,
    add,
    add_rowvec,
    mul,
    mul_colvec,
    affine,
    sigmoid,
    gelu,
    softmax,
    masked_softmax,
    layer_norm,
    embed,
    transpose,
    slice_cols,
    concat_cols,
    dropout,
    sum,
    cross_entropy,
};

/// One recorded forward value. grad always mirrors value's shape and starts
/// at zero; backward() adds into it.
struct Node {
    Tensor value;
    Tensor grad;
    OpKind op = OpKind::leaf;
    std::vector<Node*> parents;
    std::function<void(Node&)> back; // accumulates into parents' grads
    std::size_t index = 0;           // creation order; parents always precede children
};

/// Tape-style reverse-mode graph. Forward calls record nodes in creation
/// order; backward walks the tape once in reverse. A Graph owns its nodes
/// and is built fresh for each loss evaluation.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Node* leaf(Tensor value);

    Node* matmul(Node* a, Node* b);
    Node* add(Node* a, Node* b);
    /// [r x c] plus a length-c vector broadcast over rows.
    Node* add_rowvec(Node* x, Node* b);
    Node* mul(Node* a, Node* b);
    /// [r x c] scaled per row by a [r x 1] column.
    Node* mul_colvec(Node* x, Node* a);
    /// scale * x + shift, elementwise.
    Node* affine(Node* x, double scale, double shift);
    Node* sigmoid(Node* x);
    Node* gelu(Node* x);
    /// Rows are taken over the last axis; each output row sums to 1.
    Node* softmax(Node* x);
    /// Softmax over the allowed entries of each row; disallowed entries are
    /// exactly zero and receive zero gradient. Every row must allow at least
    /// one entry.
    Node* masked_softmax(Node* x, std::vector<std::uint8_t> allowed);
    Node* layer_norm(Node* x, Node* gain, Node* bias, double eps);
    /// Row gather: out[t] = table[ids[t]]. Backward scatter-adds.
    Node* embed(Node* table, std::vector<int> ids);
    Node* transpose(Node* x);
    Node* slice_cols(Node* x, int start, int width);
    Node* concat_cols(const std::vector<Node*>& parts);
    /// Inverted dropout; keep mask drawn from rng at record time.
    Node* dropout(Node* x, double rate, Rng& rng);
    Node* sum(Node* x);
    /// Mean negative log-likelihood of targets under row-softmax of logits,
    /// ignoring positions whose target equals ignore_id.
    Node* cross_entropy_mean(Node* logits, std::vector<int> targets, int ignore_id);

    /// Seeds loss->grad with 1 and propagates through every ancestor.
    void backward(Node* loss);

    std::size_t size() const { return nodes_.size(); }

private:
    Node* make(Tensor value, OpKind op, std::vector<Node*> parents);

    std::deque<Node> nodes_;
};

/// Central-difference comparison of an analytic gradient against f around
/// theta. Returns max over coordinates of |a - n| / max(1, |a|, |n|).
double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& theta,
                         const Tensor& analytic_grad, double step);

} // namespace gfus
