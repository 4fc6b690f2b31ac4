#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

#include "druid/state.hpp"

namespace druid {

class NotPositiveDefinite : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Solves H d = g with a Cholesky factorisation.  Throws NotPositiveDefinite
/// when the factorisation fails.
Eigen::VectorXd newton_direction(const Eigen::MatrixXd& hess, const Eigen::VectorXd& grad);

struct LocalResult {
    Eigen::VectorXd x;
    double flops = 0.0;
    std::size_t inner_iterations = 0;
    bool hit_cap = false;  // exact mode stopped at max_inner without meeting its tolerance
};

/// Agent i's primal update for one round, starting from its anchor x_i^t.
///
/// Stochastic Newton runs E_i steps x <- x - H_b^{-1} g_b with fresh b_g, b_H
/// drawn from `rng` at every step; a batch size equal to the shard size uses
/// the whole shard in storage order and draws nothing.
LocalResult run_local(const AgentState& agent, const std::vector<std::size_t>& neighbors, const RegularizerState* reg,
                      const SolverKind& kind, const HyperParams& hp, Rng& rng);

/// Value of the local model whose gradient is the local stochastic gradient
/// evaluated full batch:  w f_i(x) + c^T x + (eps_i / 2) |x - x_i^t|^2.
double local_model_value(const AgentState& agent, const std::vector<std::size_t>& neighbors,
                         const RegularizerState* reg, const Eigen::VectorXd& x, const HyperParams& hp);

/// Minimiser of the full-batch local model (Newton to `tolerance`).
Eigen::VectorXd local_minimizer(const AgentState& agent, const std::vector<std::size_t>& neighbors,
                                const RegularizerState* reg, const HyperParams& hp, double tolerance = 1e-12);

/// Largest per-step ratio |x^e - x*|^2 / |x^{e-1} - x*|^2 over `steps`
/// full-batch Newton steps from the anchor; an empirical stand-in for the
/// contraction constant c_i.  Returns 0 when the anchor already solves the
/// local problem.
double estimate_contraction(const AgentState& agent, const std::vector<std::size_t>& neighbors,
                            const RegularizerState* reg, const HyperParams& hp, int steps = 5);

}  // namespace druid
