#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>

#include "druid/dataset.hpp"
#include "druid/matrix_reference.hpp"
#include "druid/objective.hpp"
#include "druid/protocol.hpp"
#include "druid/state.hpp"
#include "druid/topology.hpp"

namespace druid {

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CentralizedResult {
    Eigen::VectorXd x;
    double residual = 0.0;  // largest optimality violation (see optimality_residual)
    std::size_t iterations = 0;
};

/// Global smooth loss w * sum_i f_i(x), its gradient and (optionally) Hessian.
LossEval pooled_loss(std::span<const AgentShard> shards, const Eigen::VectorXd& x, const LossConfig& cfg,
                     LossWeighting weighting, Want want = Want::value_grad);

/// max_k of the distance from 0 to grad_k + gamma * d|x_k|: for x_k = 0 this is
/// max(|grad_k| - gamma, 0), otherwise |grad_k + gamma sign(x_k)|.
double optimality_residual(const Eigen::VectorXd& x, const Eigen::VectorXd& grad, double gamma);

/// Minimiser of w * sum_i f_i + gamma |.|_1 over the shards.  Accelerated
/// proximal gradient with backtracking and adaptive restart does the bulk of
/// the work; once the support settles a Newton step on the active set
/// finishes it off.  Stops when optimality_residual <= tol.
CentralizedResult solve_centralized(std::span<const AgentShard> shards, const LossConfig& cfg, LossWeighting weighting,
                                    double tol = 1e-10, const std::optional<Eigen::VectorXd>& x0 = std::nullopt);

/// Same as solve_centralized, but reads/writes a CSV sidecar under `cache_dir`
/// keyed by the dataset digest, gamma, ridge and weighting.
Eigen::VectorXd cached_centralized(std::span<const AgentShard> shards, const LossConfig& cfg, LossWeighting weighting,
                                   const std::filesystem::path& cache_dir, double tol = 1e-10);

/// sum_i |x_i - x*|^2 / sum_i |x0_i - x*|^2 for n x d iterates.
double relative_error(const Eigen::MatrixXd& x, const Eigen::MatrixXd& x0, const Eigen::VectorXd& x_star);
/// Stacked (agent-major nd vector) form.
double relative_error(const Eigen::VectorXd& x_stacked, const Eigen::VectorXd& x0_stacked, const Eigen::VectorXd& x_star);

/// The ADMM fixed point v* = (x*, z*, alpha*, theta*, lambda*) built from the
/// centralized minimiser: replicated x*, z* = E_u x* / 2, theta* = x*,
/// lambda* = -w sum_i grad f_i(x*) and alpha* the minimum-norm solution of
/// E_s^T alpha = -w grad f(x*) - S lambda* (beta* = -alpha*).
MatrixState fixed_point(const Topology& topo, std::span<const AgentShard> shards, const HyperParams& hp,
                        const Eigen::VectorXd& x_star);

/// Stacked state of a distributed run.  z is E_u x / 2 and alpha is the
/// minimum-norm solution of E_s^T alpha = phi; both identities hold along the
/// matrix-form iteration, so the two representations carry the same v.
MatrixState network_state(const Network& net);

/// How P^{-1} enters the Lyapunov weight.  `per_agent_x` scales agent i's x
/// block by 1/p_i and everything else by 1/p_min; `uniform` uses 1/p_min
/// throughout.
enum class LyapunovWeighting { per_agent_x, uniform };

/// |v - v*|^2 in the metric diag(Gamma, 2 mu_z I, (2 / mu_z) I, mu_theta I, I / mu_theta) P^{-1}.
double lyapunov_norm(const MatrixState& state, const MatrixState& fixed, const HyperParams& hp,
                     LyapunovWeighting mode = LyapunovWeighting::per_agent_x);

}  // namespace druid
