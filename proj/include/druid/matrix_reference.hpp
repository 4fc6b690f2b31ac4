#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <vector>

#include "druid/dataset.hpp"
#include "druid/state.hpp"
#include "druid/topology.hpp"

namespace druid {

class InvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Stacked ADMM state.  x is agent-major (block i holds x_i), z / alpha /
/// beta are edge-major.  phi = (E_s kron I_d)^T alpha.
struct MatrixState {
    Eigen::VectorXd x, z, alpha, beta, theta, lambda, phi;
};

/// Dense Kronecker products A kron I_d for the block operators.
Eigen::MatrixXd kron_identity(const Eigen::MatrixXd& a, std::size_t d);

/// Synchronous ADMM in stacked form: every agent updates every round, the
/// x-step is carried out on the full nd x nd system, z and the edge duals
/// (alpha, beta) are updated explicitly, and phi is recovered from alpha.
/// After each round the invariants z = E_u x / 2 and alpha + beta = 0 are
/// checked; a violation above 1e-8 throws InvariantViolation.
///
/// Mini-batches are drawn from the same per-agent streams as the
/// distributed runner so shared-seed stochastic runs are comparable.
class MatrixReference {
public:
    MatrixReference(const Topology& topo, std::vector<AgentShard> shards, const HyperParams& hp,
                    const std::optional<Eigen::MatrixXd>& x0 = std::nullopt);

    const MatrixState& state() const { return state_; }
    const MatrixState& step(const SolverKind& kind);

    std::size_t size() const { return n_; }
    std::size_t dim() const { return d_; }

    /// Full-batch gradient of the perturbed augmented Lagrangian with
    /// coupling anchored at `anchor`, at point x, given the current duals.
    Eigen::VectorXd anchored_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& anchor) const;

    /// Gradient of the perturbed augmented Lagrangian in x, assembled from
    /// A = [A_s; A_d] kron I_d, B = [I; I], y = [alpha; beta] and z, with the
    /// proximal centre `anchor`:
    ///   w grad f(x) + A^T y + S lambda + mu_z A^T (A x - B z) + mu_theta S (S^T x - theta) + Gamma (x - anchor).
    Eigen::VectorXd perturbed_al_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& anchor) const;

private:
    Eigen::VectorXd loss_gradient(const Eigen::VectorXd& x, const std::vector<std::vector<std::size_t>>& batches) const;
    Eigen::MatrixXd loss_hessian(const Eigen::VectorXd& x, const std::vector<std::vector<std::size_t>>& batches) const;
    void check_invariants() const;

    Topology topo_;
    std::vector<AgentShard> shards_;
    HyperParams hp_;
    std::size_t n_, d_;
    Eigen::MatrixXd es_, eu_, as_, ad_, ls_, deg_, s_;  // block (Kronecker) operators
    Eigen::VectorXd gamma_diag_;
    std::vector<Rng> batch_rngs_;
    MatrixState state_;
};

std::vector<MatrixState> run_matrix_reference(const Topology& topo, const std::vector<AgentShard>& shards,
                                              const HyperParams& hp, std::size_t rounds, const SolverKind& kind,
                                              const std::optional<Eigen::MatrixXd>& x0 = std::nullopt);

/// Stacks the rows of an n x d matrix agent-major into an nd vector.
Eigen::VectorXd stack_rows(const Eigen::MatrixXd& m);

}  // namespace druid
