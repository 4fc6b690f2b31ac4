#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "druid/dataset.hpp"
#include "druid/state.hpp"

namespace druid {

struct LossConfig {
    double gamma = 0.0;  // L1 weight of the regularizer
    double ridge = 0.0;  // per-sample L2 weight delta
};

struct LossEval {
    double value = 0.0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;  // empty unless requested
};

enum class Want { value_grad, value_grad_hess };

/// Mini-batch average of the {0,1}-label logistic loss
///     l(w, y; x) = log(1 + exp(-z)) + (1 - y) z + (ridge / 2) |x|^2,  z = x.w
/// over `rows` of the shard (all rows when `rows` is empty).
LossEval logistic_loss(const AgentShard& shard, std::span<const std::size_t> rows, const Eigen::VectorXd& x,
                       const LossConfig& cfg, Want want = Want::value_grad_hess);
LossEval logistic_loss(const std::vector<Sample>& batch, const Eigen::VectorXd& x, const LossConfig& cfg,
                       Want want = Want::value_grad_hess);

/// Numerically stable log(1 + exp(t)).
double softplus(double t);
double sigmoid(double t);

/// Soft-thresholding sign(u) max(|u| - threshold, 0); the prox of
/// threshold * |.|_1.  Throws std::invalid_argument for negative thresholds.
Eigen::VectorXd prox_l1(const Eigen::VectorXd& u, double threshold);

/// Round-constant part of agent i's local gradient:
///     phi_i + (mu_z / 2) sum_j (x_i - x_j) + [i == q] (mu_theta (x_i - theta) + lambda)
/// evaluated at the round anchor x_i^t and the cached neighbor values.
/// Throws std::logic_error if a neighbor is missing from the cache.
Eigen::VectorXd coupling_term(const AgentState& agent, const std::vector<std::size_t>& neighbors,
                              const RegularizerState* reg, const HyperParams& hp);

/// Local stochastic gradient at the inner iterate:
///     w * grad f_{i,b}(x_inner) + coupling + eps_i (x_inner - x_i^t),
/// with w the loss weight of `hp`.  An empty `batch` means the full shard.
Eigen::VectorXd local_sto_gradient(const AgentState& agent, const std::vector<std::size_t>& neighbors,
                                   const RegularizerState* reg, const Eigen::VectorXd& x_inner,
                                   std::span<const std::size_t> batch, const HyperParams& hp);

/// w * hess f_{i,b}(x_inner) + (mu_z |N_i| + [i == q] mu_theta + eps_i) I.
Eigen::MatrixXd local_subsampled_hessian(const AgentState& agent, std::size_t degree, const Eigen::VectorXd& x_inner,
                                         std::span<const std::size_t> batch, const HyperParams& hp);

/// Diagonal shift mu_z |N_i| + [i == q] mu_theta + eps_i of the local Hessian.
double hessian_shift(const AgentState& agent, std::size_t degree, const HyperParams& hp);

}  // namespace druid
