#include "ecglang/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace ecglang::ot {

Metric metric_from_string(const std::string& name) {
    if (name == "sq_euclidean") return Metric::SqEuclidean;
    if (name == "euclidean") return Metric::Euclidean;
    if (name == "cosine") return Metric::Cosine;
    throw ConfigError("unknown OT metric: " + name);
}

const char* metric_to_string(Metric m) {
    switch (m) {
        case Metric::SqEuclidean: return "sq_euclidean";
        case Metric::Euclidean: return "euclidean";
        case Metric::Cosine: return "cosine";
    }
    return "?";
}

Mat cost_matrix(const Mat& X, const Mat& Y, Metric metric) {
    if (X.cols() != Y.cols()) throw DataError("cost_matrix: vector width mismatch");
    const Eigen::Index n = X.rows(), m = Y.rows();
    Mat C(n, m);
    switch (metric) {
        case Metric::SqEuclidean:
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 0; j < m; ++j)
                    C(i, j) = (X.row(i) - Y.row(j)).squaredNorm();
            break;
        case Metric::Euclidean:
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 0; j < m; ++j) C(i, j) = (X.row(i) - Y.row(j)).norm();
            break;
        case Metric::Cosine:
            for (Eigen::Index i = 0; i < n; ++i) {
                const double nx = X.row(i).norm();
                for (Eigen::Index j = 0; j < m; ++j) {
                    const double ny = Y.row(j).norm();
                    if (nx == 0.0 || ny == 0.0)
                        throw UndefinedSimilarity("cosine cost with zero-norm vector");
                    C(i, j) = 1.0 - X.row(i).dot(Y.row(j)) / (nx * ny);
                }
            }
            break;
    }
    return C.cwiseMax(0.0); // clamp the odd -1e-17 from cancellation
}

double plan_violation(const TransportPlan& plan, const Vec& mu, const Vec& nu) {
    const double row = (plan.pi.rowwise().sum() - mu).cwiseAbs().maxCoeff();
    const double col = (plan.pi.colwise().sum().transpose() - nu).cwiseAbs().maxCoeff();
    return std::max(row, col);
}

namespace {

void check_marginals(const Vec& mu, const Vec& nu) {
    if (mu.size() == 0 || nu.size() == 0) throw DataError("ot: empty distribution support");
    if (mu.minCoeff() < 0 || nu.minCoeff() < 0) throw DataError("ot: negative mass");
    if (std::abs(mu.sum() - nu.sum()) > 1e-9)
        throw DataError("ot: infeasible marginals, mass " + std::to_string(mu.sum()) + " vs " +
                        std::to_string(nu.sum()));
}

// Basic cell of the transportation simplex.
struct Cell {
    int i, j;
    double value;
};

} // namespace

TransportPlan exact_ot(const Vec& mu, const Vec& nu, const Mat& C) {
    const int n = static_cast<int>(mu.size());
    const int m = static_cast<int>(nu.size());
    if (static_cast<long>(n) * m > 4096)
        throw ConfigError("exact_ot size guard: n*m must be <= 4096");
    if (C.rows() != n || C.cols() != m) throw DataError("exact_ot: cost shape mismatch");
    check_marginals(mu, nu);

    // Northwest-corner initial basis. Advancing only the row on a tie keeps
    // exactly n + m - 1 basic cells (some possibly zero).
    std::vector<Cell> basis;
    basis.reserve(static_cast<std::size_t>(n + m - 1));
    {
        Vec row_left = mu, col_left = nu;
        int i = 0, j = 0;
        while (i < n && j < m) {
            const double q = std::min(row_left[i], col_left[j]);
            basis.push_back({i, j, q});
            row_left[i] -= q;
            col_left[j] -= q;
            if (i == n - 1 && j == m - 1) break;
            if (row_left[i] <= col_left[j] && i < n - 1)
                ++i;
            else if (j < m - 1)
                ++j;
            else
                ++i;
        }
    }

    std::vector<double> u(static_cast<std::size_t>(n)), v(static_cast<std::size_t>(m));
    std::vector<char> u_set(static_cast<std::size_t>(n)), v_set(static_cast<std::size_t>(m));
    std::vector<std::vector<int>> row_cells(static_cast<std::size_t>(n));
    std::vector<std::vector<int>> col_cells(static_cast<std::size_t>(m));

    const int max_pivots = 200 * (n + m) + 1000;
    TransportPlan out;
    for (int pivot = 0;; ++pivot) {
        if (pivot > max_pivots) throw NumericalFault("exact_ot: pivot limit exceeded");

        // Potentials u_i + v_j = c_ij on the basis tree.
        for (auto& rc : row_cells) rc.clear();
        for (auto& cc : col_cells) cc.clear();
        for (int b = 0; b < static_cast<int>(basis.size()); ++b) {
            row_cells[static_cast<std::size_t>(basis[b].i)].push_back(b);
            col_cells[static_cast<std::size_t>(basis[b].j)].push_back(b);
        }
        std::fill(u_set.begin(), u_set.end(), 0);
        std::fill(v_set.begin(), v_set.end(), 0);
        u[0] = 0.0;
        u_set[0] = 1;
        std::vector<int> stack = {0}; // row indices encoded as i, cols as n+j
        while (!stack.empty()) {
            const int node = stack.back();
            stack.pop_back();
            if (node < n) {
                for (int b : row_cells[static_cast<std::size_t>(node)]) {
                    const int j = basis[b].j;
                    if (!v_set[static_cast<std::size_t>(j)]) {
                        v[static_cast<std::size_t>(j)] = C(node, j) - u[static_cast<std::size_t>(node)];
                        v_set[static_cast<std::size_t>(j)] = 1;
                        stack.push_back(n + j);
                    }
                }
            } else {
                const int j = node - n;
                for (int b : col_cells[static_cast<std::size_t>(j)]) {
                    const int i = basis[b].i;
                    if (!u_set[static_cast<std::size_t>(i)]) {
                        u[static_cast<std::size_t>(i)] = C(i, j) - v[static_cast<std::size_t>(j)];
                        u_set[static_cast<std::size_t>(i)] = 1;
                        stack.push_back(i);
                    }
                }
            }
        }
        // A disconnected basis graph can only come from a bug upstream.
        for (int i = 0; i < n; ++i)
            if (!u_set[static_cast<std::size_t>(i)]) throw NumericalFault("exact_ot: degenerate basis");
        for (int j = 0; j < m; ++j)
            if (!v_set[static_cast<std::size_t>(j)]) throw NumericalFault("exact_ot: degenerate basis");

        // Most negative reduced cost enters the basis.
        int ei = -1, ej = -1;
        double best = -1e-11;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) {
                const double r = C(i, j) - u[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(j)];
                if (r < best) {
                    best = r;
                    ei = i;
                    ej = j;
                }
            }
        if (ei < 0) break; // optimal

        // Unique alternating cycle through the entering cell: walk the basis
        // tree from row ei to column ej.
        // parent[] over nodes 0..n+m-1 via BFS on basic cells.
        std::vector<int> parent(static_cast<std::size_t>(n + m), -2);
        std::vector<int> parent_cell(static_cast<std::size_t>(n + m), -1);
        std::vector<int> queue = {ei};
        parent[static_cast<std::size_t>(ei)] = -1;
        for (std::size_t qh = 0; qh < queue.size(); ++qh) {
            const int node = queue[qh];
            const auto& cells = node < n ? row_cells[static_cast<std::size_t>(node)]
                                         : col_cells[static_cast<std::size_t>(node - n)];
            for (int b : cells) {
                const int next = node < n ? n + basis[b].j : basis[b].i;
                if (parent[static_cast<std::size_t>(next)] != -2) continue;
                parent[static_cast<std::size_t>(next)] = node;
                parent_cell[static_cast<std::size_t>(next)] = b;
                queue.push_back(next);
            }
        }
        if (parent[static_cast<std::size_t>(n + ej)] == -2)
            throw NumericalFault("exact_ot: basis tree disconnected");

        // Cells along the path alternate -theta, +theta, ... starting from
        // the one that shares column ej...

        std::vector<int> minus_cells, plus_cells;
        bool minus = true; // first basic cell on the path leaves mass
        for (int node = n + ej; parent[static_cast<std::size_t>(node)] != -1;
             node = parent[static_cast<std::size_t>(node)]) {
            const int b = parent_cell[static_cast<std::size_t>(node)];
            (minus ? minus_cells : plus_cells).push_back(b);
            minus = !minus;
        }

        double theta = std::numeric_limits<double>::infinity();
        int leave = -1;
        for (int b : minus_cells)
            if (basis[static_cast<std::size_t>(b)].value < theta ||
                (basis[static_cast<std::size_t>(b)].value == theta && b < leave)) {
                theta = basis[static_cast<std::size_t>(b)].value;
                leave = b;
            }
        if (leave < 0) throw NumericalFault("exact_ot: no leaving cell");

        for (int b : minus_cells) basis[static_cast<std::size_t>(b)].value -= theta;
        for (int b : plus_cells) basis[static_cast<std::size_t>(b)].value += theta;
        basis[static_cast<std::size_t>(leave)] = Cell{ei, ej, theta};
    }

    out.pi = Mat::Zero(n, m);
    for (const auto& c : basis) out.pi(c.i, c.j) += std::max(0.0, c.value);
    out.cost = (out.pi.array() * C.array()).sum();
    out.marginal_violation = plan_violation(out, mu, nu);
    return out;
}

TransportPlan sinkhorn(const Vec& mu, const Vec& nu, const Mat& C, const SinkhornParams& p) {
    check_marginals(mu, nu);
    if (p.eps <= 0) throw ConfigError("sinkhorn: eps must be positive");
    if (mu.minCoeff() <= 0 || nu.minCoeff() <= 0)
        throw DataError("sinkhorn: masses must be strictly positive");
    const Eigen::Index n = mu.size(), m = nu.size();
    if (C.rows() != n || C.cols() != m) throw DataError("sinkhorn: cost shape mismatch");

    const Vec log_mu = mu.array().log();
    const Vec log_nu = nu.array().log();
    Vec f = Vec::Zero(n), g = Vec::Zero(m);

    auto lse_rows = [&](const Vec& gv) {
        // returns r_i = eps * log sum_j exp((g_j - C_ij)/eps)
        Vec r(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < m; ++j)
                mx = std::max(mx, (gv[j] - C(i, j)) / p.eps);
            double s = 0.0;
            for (Eigen::Index j = 0; j < m; ++j) s += std::exp((gv[j] - C(i, j)) / p.eps - mx);
            r[i] = p.eps * (mx + std::log(s));
        }
        return r;
    };
    auto lse_cols = [&](const Vec& fv) {
        Vec r(m);
        for (Eigen::Index j = 0; j < m; ++j) {
            double mx = -std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < n; ++i)
                mx = std::max(mx, (fv[i] - C(i, j)) / p.eps);
            double s = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) s += std::exp((fv[i] - C(i, j)) / p.eps - mx);
            r[j] = p.eps * (mx + std::log(s));
        }
        return r;
    };

    TransportPlan out;
    out.converged = false;
    for (int it = 1; it <= p.max_iters; ++it) {
        f = p.eps * log_mu - lse_rows(g);
        g = p.eps * log_nu - lse_cols(f);
        out.iterations = it;

        // After the g-update column marginals are exact; row violation
        // measures convergence.
        out.pi = ((f.replicate(1, m) + g.transpose().replicate(n, 1) - C) / p.eps).array().exp();
        out.marginal_violation = plan_violation(out, mu, nu);
        if (out.marginal_violation <= p.tol) {
            out.converged = true;
            break;
        }
    }
    out.cost = (out.pi.array() * C.array()).sum();
    out.dual_objective = f.dot(mu) + g.dot(nu) - p.eps * out.pi.sum();
    return out;
}

Mat ot_grad(const TransportPlan& plan, const Mat& X, const Mat& Y, Metric metric) {
    const Eigen::Index n = X.rows(), m = Y.rows();
    if (plan.pi.rows() != n || plan.pi.cols() != m) throw DataError("ot_grad: plan shape mismatch");
    if (X.cols() != Y.cols()) throw DataError("ot_grad: width mismatch");

    Mat grad = Mat::Zero(n, X.cols());
    switch (metric) {
        case Metric::SqEuclidean: {
            const Vec row_mass = plan.pi.rowwise().sum();
            grad = 2.0 * (row_mass.asDiagonal() * X - plan.pi * Y);
            break;
        }
        case Metric::Euclidean:
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 0; j < m; ++j) {
                    const double d = (X.row(i) - Y.row(j)).norm();
                    if (d > 1e-15) grad.row(i) += plan.pi(i, j) * (X.row(i) - Y.row(j)) / d;
                }
            break;
        case Metric::Cosine:
            for (Eigen::Index i = 0; i < n; ++i) {
                const double nx = X.row(i).norm();
                if (nx == 0.0) throw UndefinedSimilarity("ot_grad: zero-norm row");
                for (Eigen::Index j = 0; j < m; ++j) {
                    const double ny = Y.row(j).norm();
                    if (ny == 0.0) throw UndefinedSimilarity("ot_grad: zero-norm row");
                    const double dot = X.row(i).dot(Y.row(j));
                    grad.row(i) += plan.pi(i, j) *
                                   (dot / (nx * nx * nx * ny) * X.row(i) - Y.row(j) / (nx * ny));
                }
            }
            break;
    }
    return grad;
}

nn::Var sinkhorn_loss(nn::Var X, const Mat& Y, Metric metric, const SinkhornParams& p,
                      bool eps_relative_to_mean_cost) {
    nn::Tape& t = *X.tape;
    const int xi = X.idx;
    const Mat Xv = X.value();

    const Vec mu = Vec::Constant(Xv.rows(), 1.0 / static_cast<double>(Xv.rows()));
    const Vec nu = Vec::Constant(Y.rows(), 1.0 / static_cast<double>(Y.rows()));
    const Mat C = cost_matrix(Xv, Y, metric);
    SinkhornParams eff = p;
    if (eps_relative_to_mean_cost) eff.eps = std::max(p.eps * C.mean(), 1e-12);
    TransportPlan plan = sinkhorn(mu, nu, C, eff);

    Mat scalar(1, 1);
    scalar(0, 0) = plan.cost;
    const Mat grad_x = ot_grad(plan, Xv, Y, metric);
    return t.emit(std::move(scalar), [xi, grad_x](nn::Tape& tp, const Mat& g) {
        tp.accumulate(xi, grad_x * g(0, 0));
    });
}

nn::Var combined_loss(nn::Var logits, const std::vector<int>& targets, int pad_id,
                      nn::Var l_gen, const Mat& l_gt, double lambda_ot, Metric metric,
                      const SinkhornParams& p) {
    if (lambda_ot < 0) throw ConfigError("lambda_ot must be >= 0");
    nn::Var ce = nn::cross_entropy_with_logits(logits, targets, pad_id);
    if (lambda_ot == 0.0) return ce;
    return nn::add(ce, nn::scale(sinkhorn_loss(l_gen, l_gt, metric, p), lambda_ot));
}

} // namespace ecglang::ot
