#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "ecglang/tape.hpp"

using namespace ecglang;
using nn::Mat;
using nn::Tape;
using nn::Var;

namespace {

Mat randn(int r, int c, std::mt19937_64& rng, double sigma = 1.0) {
    std::normal_distribution<double> normal(0.0, sigma);
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = normal(rng);
    return m;
}

// Central finite differences of a scalar function of several matrices
// against the tape gradients. `build` must consume leaves in order.
void check_gradients(std::vector<Mat> inputs,
                     const std::function<Var(Tape&, std::vector<Var>&)>& build,
                     double tol = 1e-4, double eps = 1e-5) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& m : inputs) leaves.push_back(tape.leaf(m));
    Var out = build(tape, leaves);
    REQUIRE(out.value().size() == 1);
    tape.backward(out);

    for (std::size_t which = 0; which < inputs.size(); ++which) {
        const Mat analytic = tape.grad(leaves[which]);
        for (Eigen::Index r = 0; r < inputs[which].rows(); ++r) {
            for (Eigen::Index c = 0; c < inputs[which].cols(); ++c) {
                auto eval_at = [&](double delta) {
                    std::vector<Mat> shifted = inputs;
                    shifted[which](r, c) += delta;
                    Tape t2;
                    std::vector<Var> l2;
                    for (const auto& m : shifted) l2.push_back(t2.leaf(m));
                    return build(t2, l2).value()(0, 0);
                };
                const double fd = (eval_at(eps) - eval_at(-eps)) / (2 * eps);
                const double a = analytic(r, c);
                const double scale = std::max({std::abs(fd), std::abs(a), 1e-6});
                CHECK(std::abs(fd - a) / scale <= tol);
            }
        }
    }
}

} // namespace

TEST_CASE("gradient of sum is all ones") {
    Tape tape;
    Var x = tape.leaf(Mat::Constant(3, 4, 2.0));
    Var s = nn::sum_all(x);
    tape.backward(s);
    CHECK((tape.grad(x) - Mat::Ones(3, 4)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("matmul forward and gradient") {
    std::mt19937_64 rng(31);
    Mat a = randn(3, 4, rng), b = randn(4, 2, rng);
    {
        Tape tape;
        Var va = tape.leaf(a), vb = tape.leaf(b);
        CHECK((nn::matmul(va, vb).value() - a * b).cwiseAbs().maxCoeff() < 1e-14);
    }
    check_gradients({a, b}, [](Tape&, std::vector<Var>& l) {
        return nn::sum_all(nn::matmul(l[0], l[1]));
    });
}

TEST_CASE("matmul_nt equals matmul with transpose") {
    std::mt19937_64 rng(32);
    Mat a = randn(3, 5, rng), b = randn(4, 5, rng);
    Tape tape;
    Var va = tape.leaf(a), vb = tape.leaf(b);
    CHECK((nn::matmul_nt(va, vb).value() - a * b.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    check_gradients({a, b}, [](Tape&, std::vector<Var>& l) {
        return nn::mean_all(nn::matmul_nt(l[0], l[1]));
    });
}

TEST_CASE("elementwise ops gradients") {
    std::mt19937_64 rng(33);
    Mat a = randn(4, 3, rng), b = randn(4, 3, rng);
    check_gradients({a, b}, [](Tape&, std::vector<Var>& l) {
        return nn::sum_all(nn::cmul(nn::add(l[0], l[1]), nn::sub(l[0], l[1])));
    });
    check_gradients({a}, [](Tape&, std::vector<Var>& l) {
        return nn::sum_all(nn::scale(l[0], -2.5));
    });
}

TEST_CASE("relu gradient away from the kink") {
    std::mt19937_64 rng(34);
    Mat a = randn(5, 5, rng);
    // keep entries away from 0 so finite differences are clean
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (std::abs(a(i)) < 0.05) a(i) = 0.1;
    check_gradients({a}, [](Tape&, std::vector<Var>& l) {
        return nn::sum_all(nn::relu(l[0]));
    });
}

TEST_CASE("softmax rows sum to one and gradient checks") {
    std::mt19937_64 rng(35);
    Mat a = randn(4, 6, rng, 2.0);
    Tape tape;
    Var v = tape.leaf(a);
    const Mat y = nn::softmax_rows(v).value();
    for (Eigen::Index r = 0; r < y.rows(); ++r)
        CHECK(y.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y.minCoeff() > 0);

    Mat w = randn(4, 6, rng); // random linear functional to make a scalar
    check_gradients({a}, [w](Tape& t, std::vector<Var>& l) {
        return nn::sum_all(nn::cmul(nn::softmax_rows(l[0]), t.leaf(w)));
    });
}

TEST_CASE("softmax is max-shift stable") {
    Tape tape;
    Mat big(1, 3);
    big << 1000.0, 1001.0, 999.0;
    const Mat y = nn::softmax_rows(tape.leaf(big)).value();
    CHECK(std::isfinite(y.sum()));
    CHECK(y.sum() == doctest::Approx(1.0));
}

TEST_CASE("add_rowvec broadcasts and accumulates bias gradient") {
    std::mt19937_64 rng(36);
    Mat x = randn(5, 3, rng);
    Mat bias = randn(1, 3, rng);
    check_gradients({x, bias}, [](Tape&, std::vector<Var>& l) {
        return nn::sum_all(nn::relu(nn::add_rowvec(l[0], l[1])));
    });
}

TEST_CASE("layer_norm normalizes rows and gradient checks") {
    std::mt19937_64 rng(37);
    Mat x = randn(4, 8, rng, 2.0);
    Mat gain = Mat::Ones(1, 8), bias = Mat::Zero(1, 8);
    {
        Tape tape;
        const Mat y =
            nn::layer_norm(tape.leaf(x), tape.leaf(gain), tape.leaf(bias)).value();
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            CHECK(y.row(r).mean() == doctest::Approx(0.0).scale(1).epsilon(1e-10));
            const double var = (y.row(r).array() - y.row(r).mean()).square().mean();
            CHECK(var == doctest::Approx(1.0).epsilon(1e-10));
        }
    }
    Mat g2 = randn(1, 8, rng), b2 = randn(1, 8, rng);
    Mat w = randn(4, 8, rng);
    check_gradients({x, g2, b2}, [w](Tape& t, std::vector<Var>& l) {
        return nn::sum_all(nn::cmul(nn::layer_norm(l[0], l[1], l[2]), t.leaf(w)));
    });
}

TEST_CASE("layer_norm gradient is orthogonal to uniform shifts") {
    // Adding a constant to a row does not change layer_norm, so the row
    // gradient must sum to ~0.
    std::mt19937_64 rng(38);
    Mat x = randn(3, 8, rng);
    Mat gain = randn(1, 8, rng), bias = randn(1, 8, rng);
    Mat w = randn(3, 8, rng);
    Tape tape;
    Var vx = tape.leaf(x);
    Var out = nn::sum_all(
        nn::cmul(nn::layer_norm(vx, tape.leaf(gain), tape.leaf(bias)), tape.leaf(w)));
    tape.backward(out);
    const Mat gx = tape.grad(vx);
    for (Eigen::Index r = 0; r < gx.rows(); ++r)
        CHECK(std::abs(gx.row(r).sum()) < 1e-10);
}

TEST_CASE("concat_cols and slice_rows gradients") {
    std::mt19937_64 rng(39);
    Mat a = randn(3, 2, rng), b = randn(3, 4, rng);
    check_gradients({a, b}, [](Tape&, std::vector<Var>& l) {
        return nn::sum_all(nn::concat_cols({l[0], l[1]}));
    });
    Mat x = randn(6, 3, rng);
    check_gradients({x}, [](Tape&, std::vector<Var>& l) {
        return nn::sum_all(nn::slice_rows(l[0], 2, 3));
    });
}

TEST_CASE("dropout is identity in eval mode and rescales in train mode") {
    std::mt19937_64 rng(40);
    Tape tape;
    Mat x = Mat::Ones(50, 40);
    Var v = tape.leaf(x);
    Var eval_out = nn::dropout(v, 0.3, rng, false);
    CHECK(eval_out.idx == v.idx); // pass-through

    Var train_out = nn::dropout(v, 0.3, rng, true);
    const Mat& y = train_out.value();
    long kept = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y(i) != 0.0) {
            CHECK(y(i) == doctest::Approx(1.0 / 0.7));
            ++kept;
        }
    }
    // mean keep rate should be near 0.7
    CHECK(static_cast<double>(kept) / static_cast<double>(y.size()) ==
          doctest::Approx(0.7).epsilon(0.05));
}

TEST_CASE("dropout is deterministic under a fixed seed") {
    Mat x = Mat::Ones(10, 10);
    auto run = [&](std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        Tape tape;
        return Mat(nn::dropout(tape.leaf(x), 0.5, rng, true).value());
    };
    CHECK((run(7) - run(7)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((run(7) - run(8)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("cross_entropy_with_logits value and gradient") {
    std::mt19937_64 rng(41);
    Mat logits = randn(4, 5, rng, 2.0);
    const std::vector<int> targets = {1, 3, 0, 0}; // last row is PAD
    const int pad = 0;

    // hand-computed reference value over non-pad rows {0, 1}
    // (row 2 has target 0 == pad? no: pad id is 0 and target 0 means PAD.)
    double want = 0;
    int n_valid = 0;
    for (int r = 0; r < 4; ++r) {
        if (targets[static_cast<std::size_t>(r)] == pad) continue;
        const auto row = logits.row(r);
        const double mx = row.maxCoeff();
        const double lse = mx + std::log((row.array() - mx).exp().sum());
        want -= row[targets[static_cast<std::size_t>(r)]] - lse;
        ++n_valid;
    }
    want /= n_valid;

    Tape tape;
    Var v = tape.leaf(logits);
    Var ce = nn::cross_entropy_with_logits(v, targets, pad);
    CHECK(ce.value()(0, 0) == doctest::Approx(want).epsilon(1e-12));

    check_gradients({logits}, [&targets, pad](Tape&, std::vector<Var>& l) {
        return nn::cross_entropy_with_logits(l[0], targets, pad);
    });

    CHECK_THROWS_AS(
        nn::cross_entropy_with_logits(tape.leaf(logits), {0, 0, 0, 0}, pad), DataError);
}

TEST_CASE("backward requires a scalar root") {
    Tape tape;
    Var x = tape.leaf(Mat::Ones(2, 2));
    CHECK_THROWS_AS(tape.backward(x), Error);
}

TEST_CASE("grad of an uninvolved node is zero") {
    Tape tape;
    Var x = tape.leaf(Mat::Ones(2, 2));
    Var y = tape.leaf(Mat::Ones(2, 2));
    Var s = nn::sum_all(x);
    tape.backward(s);
    CHECK(tape.grad(y).cwiseAbs().maxCoeff() == 0.0);
}
