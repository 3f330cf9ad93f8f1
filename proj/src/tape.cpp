#include "ecglang/tape.hpp"

#include <cmath>

namespace ecglang::nn {

Var Tape::leaf(Mat value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::emit(Mat value, BackFn fn) {
    nodes_.push_back(Node{std::move(value), {}, std::move(fn)});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Mat Tape::grad(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.idx)];
    if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

void Tape::accumulate(int idx, const Mat& g) {
    Node& n = nodes_[static_cast<std::size_t>(idx)];
    if (n.grad.size() == 0)
        n.grad = g;
    else
        n.grad += g;
}

void Tape::backward(Var root) {
    const Mat& v = value(root.idx);
    if (v.rows() != 1 || v.cols() != 1)
        throw Error("backward without seed requires a scalar root");
    backward(root, Mat::Ones(1, 1));
}

void Tape::backward(Var root, const Mat& seed) {
    if (root.tape != this) throw Error("backward: root from a different tape");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    accumulate(root.idx, seed);
    for (int i = root.idx; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.grad.size() == 0 || !n.back) continue;
        n.back(*this, n.grad);
    }
}

namespace {

void check_same_tape(Var a, Var b) {
    if (a.tape != b.tape) throw Error("op on vars from different tapes");
}

} // namespace

Var add(Var a, Var b) {
    check_same_tape(a, b);
    Tape& t = *a.tape;
    const int ai = a.idx, bi = b.idx;
    return t.emit(a.value() + b.value(), [ai, bi](Tape& tp, const Mat& g) {
        tp.accumulate(ai, g);
        tp.accumulate(bi, g);
    });
}

Var sub(Var a, Var b) {
    check_same_tape(a, b);
    Tape& t = *a.tape;
    const int ai = a.idx, bi = b.idx;
    return t.emit(a.value() - b.value(), [ai, bi](Tape& tp, const Mat& g) {
        tp.accumulate(ai, g);
        tp.accumulate(bi, -g);
    });
}

Var cmul(Var a, Var b) {
    check_same_tape(a, b);
    Tape& t = *a.tape;
    const int ai = a.idx, bi = b.idx;
    return t.emit(a.value().cwiseProduct(b.value()), [ai, bi](Tape& tp, const Mat& g) {
        tp.accumulate(ai, g.cwiseProduct(tp.value(bi)));
        tp.accumulate(bi, g.cwiseProduct(tp.value(ai)));
    });
}

Var scale(Var a, double s) {
    Tape& t = *a.tape;
    const int ai = a.idx;
    return t.emit(a.value() * s, [ai, s](Tape& tp, const Mat& g) { tp.accumulate(ai, g * s); });
}

Var add_const(Var a, const Mat& c) {
    Tape& t = *a.tape;
    const int ai = a.idx;
    return t.emit(a.value() + c, [ai](Tape& tp, const Mat& g) { tp.accumulate(ai, g); });
}

Var matmul(Var a, Var b) {
    check_same_tape(a, b);
    if (a.value().cols() != b.value().rows()) throw Error("matmul shape mismatch");
    Tape& t = *a.tape;
    const int ai = a.idx, bi = b.idx;
    return t.emit(a.value() * b.value(), [ai, bi](Tape& tp, const Mat& g) {
        tp.accumulate(ai, g * tp.value(bi).transpose());
        tp.accumulate(bi, tp.value(ai).transpose() * g);
    });
}

Var matmul_nt(Var a, Var b) {
    check_same_tape(a, b);
    if (a.value().cols() != b.value().cols()) throw Error("matmul_nt shape mismatch");
    Tape& t = *a.tape;
    const int ai = a.idx, bi = b.idx;
    return t.emit(a.value() * b.value().transpose(), [ai, bi](Tape& tp, const Mat& g) {
        tp.accumulate(ai, g * tp.value(bi));
        tp.accumulate(bi, g.transpose() * tp.value(ai));
    });
}

Var add_rowvec(Var x, Var bias) {
    check_same_tape(x, bias);
    if (bias.value().rows() != 1 || bias.value().cols() != x.value().cols())
        throw Error("add_rowvec: bias must be 1 x cols(x)");
    Tape& t = *x.tape;
    const int xi = x.idx, bi = bias.idx;
    Mat y = x.value();
    y.rowwise() += bias.value().row(0);
    return t.emit(std::move(y), [xi, bi](Tape& tp, const Mat& g) {
        tp.accumulate(xi, g);
        tp.accumulate(bi, g.colwise().sum());
    });
}

Var relu(Var x) {
    Tape& t = *x.tape;
    const int xi = x.idx;
    return t.emit(x.value().cwiseMax(0.0), [xi](Tape& tp, const Mat& g) {
        const Mat mask = (tp.value(xi).array() > 0.0).cast<double>();
        tp.accumulate(xi, g.cwiseProduct(mask));
    });
}

Var softmax_rows(Var x) {
    Tape& t = *x.tape;
    const int xi = x.idx;
    Mat y = x.value();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const double mx = y.row(r).maxCoeff();
        y.row(r) = (y.row(r).array() - mx).exp();
        y.row(r) /= y.row(r).sum();
    }
    const int yi_holder = t.size(); // the emitted node's own index
    return t.emit(std::move(y), [xi, yi_holder](Tape& tp, const Mat& g) {
        const Mat& y = tp.value(yi_holder);
        Mat gx(y.rows(), y.cols());
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            const double dot = g.row(r).dot(y.row(r));
            gx.row(r) = y.row(r).array() * (g.row(r).array() - dot);
        }
        tp.accumulate(xi, gx);
    });
}

Var mean_all(Var x) {
    Tape& t = *x.tape;
    const int xi = x.idx;
    const double inv = 1.0 / static_cast<double>(x.value().size());
    Mat y(1, 1);
    y(0, 0) = x.value().mean();
    return t.emit(std::move(y), [xi, inv](Tape& tp, const Mat& g) {
        tp.accumulate(xi, Mat::Constant(tp.value(xi).rows(), tp.value(xi).cols(), g(0, 0) * inv));
    });
}

Var sum_all(Var x) {
    Tape& t = *x.tape;
    const int xi = x.idx;
    Mat y(1, 1);
    y(0, 0) = x.value().sum();
    return t.emit(std::move(y), [xi](Tape& tp, const Mat& g) {
        tp.accumulate(xi, Mat::Constant(tp.value(xi).rows(), tp.value(xi).cols(), g(0, 0)));
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw Error("concat_cols: empty");
    Tape& t = *parts.front().tape;
    Eigen::Index rows = parts.front().value().rows(), cols = 0;
    std::vector<int> idxs;
    std::vector<Eigen::Index> widths;
    for (Var p : parts) {
        check_same_tape(parts.front(), p);
        if (p.value().rows() != rows) throw Error("concat_cols: row mismatch");
        idxs.push_back(p.idx);
        widths.push_back(p.value().cols());
        cols += p.value().cols();
    }
    Mat y(rows, cols);
    Eigen::Index off = 0;
    for (Var p : parts) {
        y.middleCols(off, p.value().cols()) = p.value();
        off += p.value().cols();
    }
    return t.emit(std::move(y), [idxs, widths](Tape& tp, const Mat& g) {
        Eigen::Index off = 0;
        for (std::size_t i = 0; i < idxs.size(); ++i) {
            tp.accumulate(idxs[i], g.middleCols(off, widths[i]));
            off += widths[i];
        }
    });
}

Var slice_rows(Var x, int start, int count) {
    Tape& t = *x.tape;
    const int xi = x.idx;
    if (start < 0 || start + count > x.value().rows()) throw Error("slice_rows out of range");
    return t.emit(x.value().middleRows(start, count), [xi, start, count](Tape& tp, const Mat& g) {
        Mat gx = Mat::Zero(tp.value(xi).rows(), tp.value(xi).cols());
        gx.middleRows(start, count) = g;
        tp.accumulate(xi, gx);
    });
}

Var layer_norm(Var x, Var gain, Var bias) {
    check_same_tape(x, gain);
    check_same_tape(x, bias);
    Tape& t = *x.tape;
    const int xi = x.idx, gi = gain.idx, bi = bias.idx;
    const Eigen::Index rows = x.value().rows(), cols = x.value().cols();
    if (gain.value().cols() != cols || bias.value().cols() != cols)
        throw Error("layer_norm: gain/bias width mismatch");

    constexpr double kEps = 1e-12;
    Mat xhat(rows, cols);
    Eigen::VectorXd inv_std(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double mean = x.value().row(r).mean();
        const double var = (x.value().row(r).array() - mean).square().mean();
        inv_std[r] = 1.0 / std::sqrt(var + kEps);
        xhat.row(r) = (x.value().row(r).array() - mean) * inv_std[r];
    }
    Mat y = xhat.array().rowwise() * gain.value().row(0).array();
    y.rowwise() += bias.value().row(0);

    const int xhat_holder = t.size(); // store xhat as a helper leaf for backward
    t.leaf(xhat);
    return t.emit(std::move(y), [xi, gi, bi, xhat_holder, inv_std](Tape& tp, const Mat& g) {
        const Mat& xhat = tp.value(xhat_holder);
        const Eigen::Index rows = xhat.rows(), cols = xhat.cols();
        const auto gainrow = tp.value(gi).row(0);

        Mat gx(rows, cols);
        Mat ggain = Mat::Zero(1, cols);
        Mat gbias = Mat::Zero(1, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const Eigen::RowVectorXd gy = g.row(r);
            ggain += gy.cwiseProduct(xhat.row(r));
            gbias += gy;
            // d/dx of (x - mean)/std with per-row statistics:
            const Eigen::RowVectorXd gh = gy.cwiseProduct(gainrow);
            const double mean_gh = gh.mean();
            const double mean_gh_xhat = gh.cwiseProduct(xhat.row(r)).mean();
            gx.row(r) =
                (gh.array() - mean_gh - xhat.row(r).array() * mean_gh_xhat) * inv_std[r];
        }
        tp.accumulate(xi, gx);
        tp.accumulate(gi, ggain);
        tp.accumulate(bi, gbias);
    });
}

Var dropout(Var x, double p, std::mt19937_64& rng, bool train_mode) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0, 1)");
    if (!train_mode || p == 0.0) return x;
    Tape& t = *x.tape;
    const int xi = x.idx;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double keep = 1.0 - p;
    Mat mask(x.value().rows(), x.value().cols());
    for (Eigen::Index r = 0; r < mask.rows(); ++r)
        for (Eigen::Index c = 0; c < mask.cols(); ++c)
            mask(r, c) = unif(rng) < p ? 0.0 : 1.0 / keep;
    return t.emit(x.value().cwiseProduct(mask), [xi, mask](Tape& tp, const Mat& g) {
        tp.accumulate(xi, g.cwiseProduct(mask));
    });
}

Var cross_entropy_with_logits(Var logits, const std::vector<int>& targets, int pad_id) {
    Tape& t = *logits.tape;
    const int li = logits.idx;
    const Mat& z = logits.value();
    if (static_cast<Eigen::Index>(targets.size()) != z.rows())
        throw Error("cross_entropy: target length must equal logit rows");

    int n_valid = 0;
    for (int tok : targets)
        if (tok != pad_id) ++n_valid;
    if (n_valid == 0) throw DataError("cross_entropy: all positions are padding");

    // Row-stable log-softmax; also cache probabilities for backward.
    Mat probs(z.rows(), z.cols());
    double loss = 0.0;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double mx = z.row(r).maxCoeff();
        const Eigen::RowVectorXd e = (z.row(r).array() - mx).exp();
        const double sum = e.sum();
        probs.row(r) = e / sum;
        if (targets[static_cast<std::size_t>(r)] != pad_id) {
            const int tok = targets[static_cast<std::size_t>(r)];
            if (tok < 0 || tok >= z.cols()) throw Error("cross_entropy: target id out of range");
            loss -= z(r, tok) - mx - std::log(sum);
        }
    }
    loss /= n_valid;

    Mat y(1, 1);
    y(0, 0) = loss;
    const double inv = 1.0 / n_valid;
    return t.emit(std::move(y), [li, targets, pad_id, probs, inv](Tape& tp, const Mat& g) {
        Mat gz = Mat::Zero(probs.rows(), probs.cols());
        for (Eigen::Index r = 0; r < probs.rows(); ++r) {
            const int tok = targets[static_cast<std::size_t>(r)];
            if (tok == pad_id) continue;
            gz.row(r) = probs.row(r) * inv;
            gz(r, tok) -= inv;
        }
        tp.accumulate(li, gz * g(0, 0));
    });
}

} // namespace ecglang::nn
