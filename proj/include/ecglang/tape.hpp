#pragma once

#include <Eigen/Dense>

#include <functional>
#include <random>
#include <vector>

#include "ecglang/error.hpp"

namespace ecglang::nn {

using Mat = Eigen::MatrixXd;

class Tape;

// Handle to a tape node. Values are 2-D (positions x channels); a batch is
// a set of nodes on the same tape, so batch items can never mix.
struct Var {
    Tape* tape = nullptr;
    int idx = -1;
    const Mat& value() const;
    bool valid() const { return tape != nullptr && idx >= 0; }
};

// Dynamic reverse-mode tape. Nodes are recorded in evaluation order;
// backward() walks them in reverse, pushing gradients to parents.
class Tape {
  public:
    using BackFn = std::function<void(Tape&, const Mat& grad_out)>;

    Var leaf(Mat value);
    Var emit(Mat value, BackFn fn);

    const Mat& value(int idx) const { return nodes_[static_cast<std::size_t>(idx)].value; }

    // Gradient of the last backward() root w.r.t. this node (zero matrix if
    // the node does not influence the root).
    Mat grad(Var v) const;

    void accumulate(int idx, const Mat& g);

    // Seeds the root (must be 1x1 unless seed given) and runs the sweep.
    void backward(Var root);
    void backward(Var root, const Mat& seed);

    int size() const { return static_cast<int>(nodes_.size()); }

  private:
    struct Node {
        Mat value;
        Mat grad; // empty until touched
        BackFn back;
    };
    std::vector<Node> nodes_;
};

inline const Mat& Var::value() const { return tape->value(idx); }

// --- primitive ops ---------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var cmul(Var a, Var b);            // elementwise
Var scale(Var a, double s);
Var add_const(Var a, const Mat& c);
Var matmul(Var a, Var b);          // a (n x k) * b (k x m)
Var matmul_nt(Var a, Var b);       // a (n x k) * b^T (m x k) -> n x m
Var add_rowvec(Var x, Var bias);   // bias is 1 x d, broadcast over rows
Var relu(Var x);
Var softmax_rows(Var x);           // max-subtracted, rows sum to 1
Var mean_all(Var x);               // 1 x 1
Var sum_all(Var x);                // 1 x 1
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var x, int start, int count);

// y = (x - mean_row) / sqrt(var_row + 1e-12) * gain + bias, per row.
Var layer_norm(Var x, Var gain, Var bias);

// Inverted dropout: at train time keeps each entry with probability 1-p and
// rescales by 1/(1-p); identity in eval mode. The mask comes from `rng` so
// runs are reproducible.
Var dropout(Var x, double p, std::mt19937_64& rng, bool train_mode);

// Mean negative log softmax probability of `targets` over rows where
// targets[r] != pad_id. Throws DataError when every position is padding.
Var cross_entropy_with_logits(Var logits, const std::vector<int>& targets, int pad_id);

} // namespace ecglang::nn
