#include "druid/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

#include "druid/objective.hpp"

namespace druid {

Eigen::MatrixXd Network::primal() const
{
    Eigen::MatrixXd out{Eigen::Index(size()), Eigen::Index(dim())};
    for (std::size_t i = 0; i < size(); ++i)
        out.row(Eigen::Index(i)) = agents[i].x.transpose();
    return out;
}

Eigen::MatrixXd Network::duals() const
{
    Eigen::MatrixXd out{Eigen::Index(size()), Eigen::Index(dim())};
    for (std::size_t i = 0; i < size(); ++i)
        out.row(Eigen::Index(i)) = agents[i].phi.transpose();
    return out;
}

Network init_run(const Topology& topo, std::vector<AgentShard> shards, const HyperParams& hp,
                 const std::optional<Eigen::MatrixXd>& x0)
{
    const std::size_t n = topo.size();
    if (shards.size() != n)
        throw std::invalid_argument("init_run: " + std::to_string(shards.size()) + " shards for " + std::to_string(n) +
                                    " agents");
    hp.validate(n);
    const std::size_t d = shards.front().dim();
    if (x0 && (std::size_t(x0->rows()) != n || std::size_t(x0->cols()) != d))
        throw std::invalid_argument("init_run: initial point must be n x d");

    const SeedStreams streams(hp.seed);
    Network net{topo, hp, {}, {}, streams.participation(), 0};
    net.agents.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (shards[i].dim() != d)
            throw std::invalid_argument("init_run: shards disagree on feature dimension");
        auto& a = net.agents[i];
        a.index = i;
        a.x = x0 ? Eigen::VectorXd(x0->row(Eigen::Index(i)).transpose()) : Eigen::VectorXd::Zero(Eigen::Index(d));
        a.phi = Eigen::VectorXd::Zero(Eigen::Index(d));
        a.shard = std::make_shared<const AgentShard>(std::move(shards[i]));
        a.eps = hp.eps[i];
        a.load = hp.loads[i];
        a.participation = hp.participation[i];
        a.batch_rng = streams.batches(i);
    }
    for (auto& a : net.agents)
        for (auto j : topo.neighbors(a.index))
            a.neighbor_cache[j] = net.agents[j].x;

    net.reg.q = hp.q;
    net.reg.theta = net.agents[hp.q].x;
    net.reg.lambda = Eigen::VectorXd::Zero(Eigen::Index(d));
    net.reg.mu_theta = hp.mu_theta;
    return net;
}

std::vector<std::size_t> sample_active(const std::vector<double>& participation, Rng& rng)
{
    std::vector<std::size_t> active;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t i = 0; i < participation.size(); ++i)
        if (unif(rng) < participation[i])
            active.push_back(i);
    return active;
}

RoundRecord run_round(Network& net, const SolverKind& kind)
{
    const auto active = sample_active(net.hp.participation, net.participation_rng);
    return run_round_with(net, kind, active);
}

RoundRecord run_round_with(Network& net, const SolverKind& kind, const std::vector<std::size_t>& active)
{
    const std::size_t n = net.size();
    const std::size_t t = net.round + 1;
    RoundRecord rec;
    rec.t = t;
    rec.active = active;
    rec.agent_flops.assign(n, 0.0);

    // Primal phase: agents are independent; results are merged below in
    // agent order so the thread count never changes the outcome.
    std::vector<LocalResult> results(active.size());
    std::vector<std::string> failures(active.size());
    auto work = [&](std::size_t slot) {
        auto& a = net.agents[active[slot]];
        const RegularizerState* reg = a.index == net.reg.q ? &net.reg : nullptr;
        try {
            results[slot] = run_local(a, net.topo.neighbors(a.index), reg, kind, net.hp, a.batch_rng);
        } catch (const std::exception& e) {
            failures[slot] = e.what();
        }
    };
    const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(net.hp.threads, 1), active.size());
    if (workers <= 1) {
        for (std::size_t s = 0; s < active.size(); ++s)
            work(s);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t s = w; s < active.size(); s += workers)
                    work(s);
            });
    }
    for (std::size_t s = 0; s < active.size(); ++s)
        if (!failures[s].empty())
            throw ProtocolError("agent " + std::to_string(active[s]) + ", round " + std::to_string(t) + ": " +
                                failures[s]);

    // Broadcast.
    for (std::size_t s = 0; s < active.size(); ++s) {
        auto& a = net.agents[active[s]];
        a.x = std::move(results[s].x);
        rec.agent_flops[a.index] = results[s].flops;
        rec.flops += results[s].flops;
        for (auto j : net.topo.neighbors(a.index))
            net.agents[j].neighbor_cache[a.index] = a.x;
        rec.comm_vectors += net.hp.comm == CommAccounting::broadcast ? 1.0 : double(net.topo.degree(a.index));
    }

    // Dual phase.
    for (auto i : active) {
        auto& a = net.agents[i];
        Eigen::VectorXd disagreement = Eigen::VectorXd::Zero(a.x.size());
        for (auto j : net.topo.neighbors(i))
            disagreement += a.x - a.neighbor_cache.at(j);
        a.phi += 0.5 * net.hp.mu_z * disagreement;
    }

    // Regularizer, owned by agent q.
    const bool q_active = std::find(active.begin(), active.end(), net.reg.q) != active.end();
    if (q_active) {
        const auto& xq = net.agents[net.reg.q].x;
        net.reg.theta = prox_l1(xq + net.reg.lambda / net.reg.mu_theta, net.hp.gamma / net.reg.mu_theta);
        net.reg.lambda += net.reg.mu_theta * (xq - net.reg.theta);
    }

    net.round = t;
    return rec;
}

std::vector<double> tune_epsilons(const std::vector<int>& loads, double eps_bar, int load_bar, double c, double zeta)
{
    if (!(c > 0.0 && c < 1.0))
        throw std::domain_error("tune_epsilons: c must lie in (0, 1)");
    if (!(zeta > 0.0))
        throw std::domain_error("tune_epsilons: zeta must be positive");
    const double ref = 1.0 - (1.0 + zeta) * std::pow(c, load_bar);
    if (ref <= 0.0)
        throw std::domain_error("tune_epsilons: 1 - (1+zeta) c^Ebar <= 0; use a smaller zeta or a larger Ebar");
    std::vector<double> eps;
    eps.reserve(loads.size());
    for (int load : loads) {
        const double denom = 1.0 - (1.0 + zeta) * std::pow(c, load);
        if (denom <= 0.0)
            throw std::domain_error("tune_epsilons: 1 - (1+zeta) c^E_i <= 0 for E_i = " + std::to_string(load) +
                                    "; use a smaller zeta or a larger E_i");
        eps.push_back(eps_bar * std::pow(c, load - load_bar) * ref / denom);
    }
    return eps;
}

}  // namespace druid
