#include "druid/local_solver.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <span>
#include <type_traits>

#include "druid/dataset.hpp"
#include "druid/metrics.hpp"
#include "druid/objective.hpp"

namespace druid {

Eigen::VectorXd newton_direction(const Eigen::MatrixXd& hess, const Eigen::VectorXd& grad)
{
    Eigen::LLT<Eigen::MatrixXd> llt(hess);
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefinite("Newton system is not positive definite");
    return llt.solve(grad);
}

namespace {

std::vector<std::size_t> draw(const AgentShard& shard, std::size_t size, Rng& rng)
{
    if (size == shard.size())
        return {};
    return sample_batch(shard, size, rng);
}

}  // namespace

LocalResult run_local(const AgentState& agent, const std::vector<std::size_t>& neighbors, const RegularizerState* reg,
                      const SolverKind& kind, const HyperParams& hp, Rng& rng)
{
    const auto& shard = *agent.shard;
    const std::size_t degree = neighbors.size();
    LocalResult out;
    out.x = agent.x;

    std::visit(
        [&](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, solver::StochasticNewton>) {
                for (int e = 0; e < agent.load; ++e) {
                    const auto bg = draw(shard, k.batch_g, rng);
                    const auto bh = draw(shard, k.batch_h, rng);
                    const auto g = local_sto_gradient(agent, neighbors, reg, out.x, bg, hp);
                    const auto h = local_subsampled_hessian(agent, degree, out.x, bh, hp);
                    out.x -= newton_direction(h, g);
                }
                out.inner_iterations = std::size_t(agent.load);
            } else if constexpr (std::is_same_v<K, solver::DeterministicNewton>) {
                const auto g = local_sto_gradient(agent, neighbors, reg, out.x, {}, hp);
                const auto h = local_subsampled_hessian(agent, degree, out.x, {}, hp);
                out.x -= newton_direction(h, g);
                out.inner_iterations = 1;
            } else if constexpr (std::is_same_v<K, solver::GradientDescent>) {
                out.x -= k.step * local_sto_gradient(agent, neighbors, reg, out.x, {}, hp);
                out.inner_iterations = 1;
            } else {
                out.hit_cap = true;
                for (int it = 0; it < k.max_inner; ++it) {
                    const auto g = local_sto_gradient(agent, neighbors, reg, out.x, {}, hp);
                    if (g.norm() <= k.tolerance) {
                        out.hit_cap = false;
                        break;
                    }
                    const auto h = local_subsampled_hessian(agent, degree, out.x, {}, hp);
                    out.x -= newton_direction(h, g);
                    ++out.inner_iterations;
                }
                if (out.hit_cap && local_sto_gradient(agent, neighbors, reg, out.x, {}, hp).norm() <= k.tolerance)
                    out.hit_cap = false;
            }
        },
        kind);

    out.flops = flop_cost(kind, shard.dim(), shard.size(), out.inner_iterations);
    return out;
}

double local_model_value(const AgentState& agent, const std::vector<std::size_t>& neighbors,
                         const RegularizerState* reg, const Eigen::VectorXd& x, const HyperParams& hp)
{
    const LossConfig cfg{hp.gamma, hp.ridge};
    const double loss = logistic_loss(*agent.shard, {}, x, cfg, Want::value_grad).value;
    return hp.loss_weight() * loss + coupling_term(agent, neighbors, reg, hp).dot(x) +
           0.5 * agent.eps * (x - agent.x).squaredNorm();
}

Eigen::VectorXd local_minimizer(const AgentState& agent, const std::vector<std::size_t>& neighbors,
                                const RegularizerState* reg, const HyperParams& hp, double tolerance)
{
    Rng unused(0);
    auto res = run_local(agent, neighbors, reg, solver::Exact{tolerance, 500}, hp, unused);
    return res.x;
}

double estimate_contraction(const AgentState& agent, const std::vector<std::size_t>& neighbors,
                            const RegularizerState* reg, const HyperParams& hp, int steps)
{
    const Eigen::VectorXd target = local_minimizer(agent, neighbors, reg, hp);
    const std::size_t degree = neighbors.size();
    Eigen::VectorXd x = agent.x;
    double worst = 0.0;
    for (int e = 0; e < steps; ++e) {
        const double before = (x - target).squaredNorm();
        if (before < 1e-24 * (1.0 + target.squaredNorm()))
            break;
        const auto g = local_sto_gradient(agent, neighbors, reg, x, {}, hp);
        const auto h = local_subsampled_hessian(agent, degree, x, {}, hp);
        x -= newton_direction(h, g);
        worst = std::max(worst, (x - target).squaredNorm() / before);
    }
    return worst;
}

}  // namespace druid
