#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <variant>
#include <vector>

#include "druid/dataset.hpp"
#include "druid/streams.hpp"

namespace druid {

/// How the per-agent loss enters the global objective.  `mean_of_agents`
/// minimises (1/n) sum_i f_i + r, `sum_of_agents` minimises sum_i f_i + r.
enum class LossWeighting { mean_of_agents, sum_of_agents };

/// Communication accounting: one vector per active agent per round
/// (broadcast medium) or one per incident edge.
enum class CommAccounting { broadcast, per_edge };

struct HyperParams {
    double mu_z = 5e-5;
    double mu_theta = 1e-4;
    double gamma = 2e-6;
    double ridge = 0.0;
    std::vector<double> eps;         // epsilon_i > 0
    std::vector<int> loads;          // E_i >= 1
    std::vector<double> participation;  // p_i in (0, 1]
    std::size_t batch_g = 100;
    std::size_t batch_h = 100;
    std::uint64_t seed = 0;
    std::size_t rounds = 100;
    std::size_t q = 0;
    LossWeighting weighting = LossWeighting::mean_of_agents;
    CommAccounting comm = CommAccounting::broadcast;
    std::size_t threads = 1;

    /// Uniform hyperparameters for n agents.
    static HyperParams uniform(std::size_t n, double eps, int load, double p = 1.0);

    /// Weight applied to each agent's loss in its local model (1/n or 1).
    double loss_weight() const { return weighting == LossWeighting::mean_of_agents ? 1.0 / double(eps.size()) : 1.0; }
    double p_min() const;
    /// Throws std::invalid_argument naming the offending field.
    void validate(std::size_t n) const;
};

struct AgentState {
    std::size_t index = 0;
    Eigen::VectorXd x;
    Eigen::VectorXd phi;
    std::map<std::size_t, Eigen::VectorXd> neighbor_cache;  // j -> last x_j received
    std::shared_ptr<const AgentShard> shard;
    double eps = 1e-4;
    int load = 1;
    double participation = 1.0;
    Rng batch_rng;
};

struct RegularizerState {
    std::size_t q = 0;
    Eigen::VectorXd theta;
    Eigen::VectorXd lambda;
    double mu_theta = 1e-4;
};

namespace solver {
struct StochasticNewton {
    std::size_t batch_g;
    std::size_t batch_h;
};
/// One full-batch Newton step per round regardless of the agent's load.
struct DeterministicNewton {};
struct GradientDescent {
    double step;
};
struct Exact {
    double tolerance = 1e-5;
    int max_inner = 200;
};
}  // namespace solver

using SolverKind = std::variant<solver::StochasticNewton, solver::DeterministicNewton, solver::GradientDescent, solver::Exact>;

}  // namespace druid
