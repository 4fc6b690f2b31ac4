#include "druid/objective.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace druid {

double softplus(double t)
{
    return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double sigmoid(double t)
{
    if (t >= 0.0)
        return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

namespace {

LossEval evaluate(const Eigen::Ref<const Eigen::MatrixXd>& features, const Eigen::Ref<const Eigen::VectorXd>& labels,
                  const Eigen::VectorXd& x, const LossConfig& cfg, Want want)
{
    const Eigen::Index count = features.rows();
    if (count == 0)
        throw std::invalid_argument("logistic loss over an empty batch");
    const double inv = 1.0 / double(count);
    const Eigen::VectorXd z = features * x;
    Eigen::VectorXd s(count);
    double value = 0.0;
    for (Eigen::Index j = 0; j < count; ++j) {
        s(j) = sigmoid(z(j));
        // log(1 + e^{-z}) + (1 - y) z == log(1 + e^{z}) - y z
        value += softplus(-z(j)) + (1.0 - labels(j)) * z(j);
    }

    LossEval out;
    out.value = value * inv + 0.5 * cfg.ridge * x.squaredNorm();
    out.grad = inv * (features.transpose() * (s - labels)) + cfg.ridge * x;
    if (want == Want::value_grad_hess) {
        const Eigen::VectorXd curvature = (s.array() * (1.0 - s.array())).sqrt().matrix();
        const Eigen::MatrixXd scaled = curvature.asDiagonal() * features;
        out.hess = Eigen::MatrixXd::Zero(x.size(), x.size());
        out.hess.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose(), inv);
        out.hess = out.hess.selfadjointView<Eigen::Lower>();
        out.hess.diagonal().array() += cfg.ridge;
    }
    return out;
}

}  // namespace

LossEval logistic_loss(const AgentShard& shard, std::span<const std::size_t> rows, const Eigen::VectorXd& x,
                       const LossConfig& cfg, Want want)
{
    if (rows.empty())
        return evaluate(shard.features, shard.labels, x, cfg, want);
    const std::vector<std::size_t> idx(rows.begin(), rows.end());
    const Eigen::MatrixXd features = shard.features(idx, Eigen::all);
    const Eigen::VectorXd labels = shard.labels(idx);
    return evaluate(features, labels, x, cfg, want);
}

LossEval logistic_loss(const std::vector<Sample>& batch, const Eigen::VectorXd& x, const LossConfig& cfg, Want want)
{
    if (batch.empty())
        throw std::invalid_argument("logistic loss over an empty batch");
    Eigen::MatrixXd features{Eigen::Index(batch.size()), x.size()};
    Eigen::VectorXd labels{Eigen::Index(batch.size())};
    for (std::size_t j = 0; j < batch.size(); ++j) {
        features.row(Eigen::Index(j)) = batch[j].w.transpose();
        labels(Eigen::Index(j)) = batch[j].y;
    }
    return evaluate(features, labels, x, cfg, want);
}

Eigen::VectorXd prox_l1(const Eigen::VectorXd& u, double threshold)
{
    if (threshold < 0.0)
        throw std::invalid_argument("prox_l1: negative threshold");
    return u.unaryExpr([threshold](double v) {
        const double mag = std::abs(v) - threshold;
        return mag > 0.0 ? std::copysign(mag, v) : 0.0;
    });
}

Eigen::VectorXd coupling_term(const AgentState& agent, const std::vector<std::size_t>& neighbors,
                              const RegularizerState* reg, const HyperParams& hp)
{
    Eigen::VectorXd c = agent.phi;
    Eigen::VectorXd disagreement = Eigen::VectorXd::Zero(agent.x.size());
    for (auto j : neighbors) {
        auto it = agent.neighbor_cache.find(j);
        if (it == agent.neighbor_cache.end())
            throw std::logic_error("agent " + std::to_string(agent.index) + " has no cached value for neighbor " +
                                   std::to_string(j));
        disagreement += agent.x - it->second;
    }
    c += 0.5 * hp.mu_z * disagreement;
    if (reg != nullptr && reg->q == agent.index)
        c += reg->mu_theta * (agent.x - reg->theta) + reg->lambda;
    return c;
}

Eigen::VectorXd local_sto_gradient(const AgentState& agent, const std::vector<std::size_t>& neighbors,
                                   const RegularizerState* reg, const Eigen::VectorXd& x_inner,
                                   std::span<const std::size_t> batch, const HyperParams& hp)
{
    const LossConfig cfg{hp.gamma, hp.ridge};
    const auto loss = logistic_loss(*agent.shard, batch, x_inner, cfg, Want::value_grad);
    return hp.loss_weight() * loss.grad + coupling_term(agent, neighbors, reg, hp) + agent.eps * (x_inner - agent.x);
}

double hessian_shift(const AgentState& agent, std::size_t degree, const HyperParams& hp)
{
    return hp.mu_z * double(degree) + (agent.index == hp.q ? hp.mu_theta : 0.0) + agent.eps;
}

Eigen::MatrixXd local_subsampled_hessian(const AgentState& agent, std::size_t degree, const Eigen::VectorXd& x_inner,
                                         std::span<const std::size_t> batch, const HyperParams& hp)
{
    const LossConfig cfg{hp.gamma, hp.ridge};
    Eigen::MatrixXd h = hp.loss_weight() * logistic_loss(*agent.shard, batch, x_inner, cfg).hess;
    h.diagonal().array() += hessian_shift(agent, degree, hp);
    return h;
}

}  // namespace druid
