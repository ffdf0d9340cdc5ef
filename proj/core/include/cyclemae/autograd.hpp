#pragma once

#include "cyclemae/common.hpp"
#include "cyclemae/params.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

/// Minimal reverse-mode differentiation over dense matrices.
///
/// A Tape records every operation applied to Vars. Nodes are appended in
/// topological order, so backward() is a single reverse sweep. Parameter
/// leaves reference the ParamSet directly (no copy); their gradients are
/// collected with accumulate().
namespace cyclemae::ad {

struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
public:
    using Backward = std::function<void(Tape&, const Mat& out_grad)>;

    explicit Tape(const ParamSet* params = nullptr);

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Mat value);
    /// Leaf bound to parameter `index`; repeated calls return the same node.
    Var param(std::size_t index);

    const Mat& value(Var v) const;
    /// Gradient buffer of a node; empty until something flows into it.
    const Mat& grad(Var v) const;
    bool requires_grad(Var v) const;
    std::size_t node_count() const { return nodes_.size(); }

    /// Seeds d(loss)/d(loss) = 1 and sweeps backward. `loss` must be 1x1.
    void backward(Var loss);
    /// Adds parameter-leaf gradients into `out` (aligned with the ParamSet).
    void accumulate(Gradients& out) const;

    /// Records a new node. `backward` may be empty when no input needs a gradient.
    Var push(Mat value, bool requires_grad, Backward backward);
    /// Zero-initialised gradient accumulator for `v`.
    Mat& grad_ref(Var v);

private:
    struct Node {
        Mat value;
        const Mat* ref = nullptr;
        Mat grad;
        Backward backward;
        std::int64_t param = -1;
        bool requires_grad = false;
    };

    const Node& node(Var v) const;

    std::deque<Node> nodes_;
    const ParamSet* params_ = nullptr;
    std::vector<std::int32_t> param_nodes_;
};

// Linear algebra.
Var matmul(Tape& t, Var a, Var b);
/// a * b^T
Var matmul_bt(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
/// a + broadcast(row) where row is 1 x cols(a).
Var add_row(Tape& t, Var a, Var row);
/// x * w + broadcast(b)
Var affine(Tape& t, Var x, Var w, Var b);
Var scale(Tape& t, Var a, double s);
Var sum(Tape& t, std::span<const Var> terms);
Var detach(Tape& t, Var a);

// Nonlinearities and normalisation.
Var gelu(Tape& t, Var a);
Var relu(Tape& t, Var a);
Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-6);
/// Multi-head scaled dot-product self-attention on a packed [Q | K | V]
/// input of shape L x 3D. Returns the concatenated head outputs (L x D).
Var attention(Tape& t, Var qkv, int heads);
Var l2_normalize_rows(Tape& t, Var a);

// Row manipulation.
Var gather_rows(Tape& t, Var a, std::span<const int> rows);
Var concat_rows(Tape& t, std::span<const Var> parts);
/// total x cols matrix whose row positions[k] is visible.row(k) and every
/// other row is a copy of fill (1 x cols).
Var assemble_rows(Tape& t, Var visible, Var fill, std::span<const int> positions, int total);
Var mean_rows(Tape& t, Var a);

// Reductions to 1x1.
/// Euclidean distance between rows i and j of a. Subgradient 0 at distance 0.
Var row_distance(Tape& t, Var a, int i, int j);
/// Mean of squared differences against a constant target of equal shape.
Var mse(Tape& t, Var pred, const Mat& target);
/// Mean softmax cross-entropy. Row r of `logits` holds `groups` blocks laid
/// out class-major: column k * groups + q is the logit of class k for item q.
/// labels is rows x groups (row-major) with values in [0, classes).
Var grouped_cross_entropy(Tape& t, Var logits, std::span<const int> labels, int classes,
                          int groups);

}  // namespace cyclemae::ad
