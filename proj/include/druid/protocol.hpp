#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <vector>

#include "druid/dataset.hpp"
#include "druid/local_solver.hpp"
#include "druid/metrics.hpp"
#include "druid/state.hpp"
#include "druid/streams.hpp"
#include "druid/topology.hpp"

namespace druid {

class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything the simulated network holds between rounds.  Agent i owns
/// (x_i, phi_i, cache, shard, batch stream); agent q additionally owns the
/// regularizer state.  The participation stream belongs to the simulator.
struct Network {
    Topology topo;
    HyperParams hp;
    std::vector<AgentState> agents;
    RegularizerState reg;
    Rng participation_rng;
    std::size_t round = 0;

    std::size_t size() const { return agents.size(); }
    std::size_t dim() const { return std::size_t(agents.front().x.size()); }
    /// Rows are agents.
    Eigen::MatrixXd primal() const;
    Eigen::MatrixXd duals() const;
};

/// Builds agent states: x_i from `x0` (rows; zero when absent), phi_i = 0,
/// caches filled with the initial neighbor values, theta = x_q, lambda = 0.
/// Batch and participation streams derive from hp.seed.
Network init_run(const Topology& topo, std::vector<AgentShard> shards, const HyperParams& hp,
                 const std::optional<Eigen::MatrixXd>& x0 = std::nullopt);

/// Independent Bernoulli(p_i) draw per agent, in agent order.
std::vector<std::size_t> sample_active(const std::vector<double>& participation, Rng& rng);

/// One asynchronous round: primal updates of the active agents, broadcast
/// into neighbor caches, dual updates of the active agents, and the
/// regularizer updates when q is active.  Inactive agents keep their state;
/// their stale cached values stand in for x_j^{t+1} in neighbors' updates.
///
/// The returned record carries t, active set, per-agent and total flops
/// (total in `flops`, not yet cumulative) and vectors sent.
RoundRecord run_round(Network& net, const SolverKind& kind);

/// Same round with a caller-chosen active set (used by tests and by the
/// synchronous drivers).
RoundRecord run_round_with(Network& net, const SolverKind& kind, const std::vector<std::size_t>& active);

/// Surrogate epsilon tuning rule
///   eps_i = eps_bar c^{E_i - E_bar} [1 - (1+zeta) c^{E_bar}] / [1 - (1+zeta) c^{E_i}].
/// Throws std::domain_error when a denominator is not positive.
std::vector<double> tune_epsilons(const std::vector<int>& loads, double eps_bar, int load_bar, double c, double zeta);

}  // namespace druid
