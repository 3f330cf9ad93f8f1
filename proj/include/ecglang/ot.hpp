#pragma once

#include <Eigen/Dense>

#include <string>

#include "ecglang/error.hpp"
#include "ecglang/tape.hpp"

namespace ecglang::ot {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class Metric { SqEuclidean, Euclidean, Cosine };

Metric metric_from_string(const std::string& name);
const char* metric_to_string(Metric m);

// Pairwise costs between the rows of X (n x d) and Y (m x d).
Mat cost_matrix(const Mat& X, const Mat& Y, Metric metric);

struct TransportPlan {
    Mat pi;          // n x m, nonnegative, marginals mu / nu
    double cost = 0; // <pi, C>
    int iterations = 0;
    double marginal_violation = 0;
    bool converged = true;
    // Entropic dual value <f,mu> + <g,nu> - eps * sum exp((f+g-C)/eps);
    // nondecreasing over sweeps (alternating exact maximization). Only set
    // by sinkhorn.
    double dual_objective = 0;
};

// Checks row/column sums against mu/nu.
double plan_violation(const TransportPlan& plan, const Vec& mu, const Vec& nu);

// Exact solver on the transportation polytope (primal transportation
// simplex with u/v potentials). Guarded to n*m <= 4096.
TransportPlan exact_ot(const Vec& mu, const Vec& nu, const Mat& C);

struct SinkhornParams {
    double eps = 0.05; // absolute regularization; callers usually scale by mean(C)
    int max_iters = 500;
    double tol = 1e-6;
};

// Entropic solver, log-domain scaling (stable for small eps). Non-convergence
// is reported through `converged`/`marginal_violation`, not thrown.
TransportPlan sinkhorn(const Vec& mu, const Vec& nu, const Mat& C, const SinkhornParams& p);

// Envelope gradient wrt the rows of X, holding the plan fixed:
//   d/dx_i  sum_j pi_ij C(x_i, y_j).
Mat ot_grad(const TransportPlan& plan, const Mat& X, const Mat& Y, Metric metric);

// Uniform-mass OT distance between tape value X and constant Y as a tape
// node; backward applies the envelope gradient. With
// eps_relative_to_mean_cost the effective eps is p.eps * mean(C).
nn::Var sinkhorn_loss(nn::Var X, const Mat& Y, Metric metric, const SinkhornParams& p,
                      bool eps_relative_to_mean_cost = false);

// Token cross-entropy (PAD masked) + lambda * OT(L_gen, L_gt), both terms on
// the tape so gradients flow through each.
nn::Var combined_loss(nn::Var logits, const std::vector<int>& targets, int pad_id,
                      nn::Var l_gen, const Mat& l_gt, double lambda_ot, Metric metric,
                      const SinkhornParams& p);

} // namespace ecglang::ot
