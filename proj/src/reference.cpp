#include "druid/reference.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace druid {

namespace {

constexpr std::size_t kIterationCap = 1'000'000;

double l1(const Eigen::VectorXd& x) { return x.lpNorm<1>(); }

Eigen::MatrixXd dense_signed_incidence(const Topology& topo)
{
    Eigen::MatrixXd es = Eigen::MatrixXd::Zero(Eigen::Index(topo.edge_count()), Eigen::Index(topo.size()));
    for (std::size_t k = 0; k < topo.edge_count(); ++k) {
        es(Eigen::Index(k), Eigen::Index(topo.edges()[k].src)) = 1.0;
        es(Eigen::Index(k), Eigen::Index(topo.edges()[k].dst)) = -1.0;
    }
    return es;
}

// Active-set Newton on the smooth loss plus gamma s^T x over the current
// support.  A coordinate that would cross zero is clipped to zero and leaves
// the support; once the restricted problem is solved, a zero coordinate whose
// gradient exceeds gamma re-enters with the sign that decreases the
// objective.  Returns nullopt if this does not certify optimality quickly.
std::optional<Eigen::VectorXd> polish_on_support(std::span<const AgentShard> shards, const LossConfig& cfg,
                                                 LossWeighting weighting, Eigen::VectorXd x, double tol)
{
    std::vector<double> sign(std::size_t(x.size()), 0.0);
    for (Eigen::Index k = 0; k < x.size(); ++k)
        sign[std::size_t(k)] = x(k) > 0 ? 1.0 : (x(k) < 0 ? -1.0 : 0.0);

    for (int it = 0; it < 200; ++it) {
        const LossEval e = pooled_loss(shards, x, cfg, weighting, Want::value_grad_hess);
        if (optimality_residual(x, e.grad, cfg.gamma) <= tol)
            return x;
        std::vector<Eigen::Index> support;
        for (Eigen::Index k = 0; k < x.size(); ++k)
            if (sign[std::size_t(k)] != 0.0)
                support.push_back(k);
        Eigen::VectorXd g(Eigen::Index(support.size()));
        for (std::size_t s = 0; s < support.size(); ++s)
            g(Eigen::Index(s)) = e.grad(support[s]) + cfg.gamma * sign[std::size_t(support[s])];

        if (support.empty() || g.lpNorm<Eigen::Infinity>() <= 0.1 * tol) {
            // Restricted problem solved: release the worst zero coordinate.
            Eigen::Index worst = -1;
            double excess = 0.0;
            for (Eigen::Index k = 0; k < x.size(); ++k)
                if (sign[std::size_t(k)] == 0.0 && std::abs(e.grad(k)) - cfg.gamma > excess) {
                    excess = std::abs(e.grad(k)) - cfg.gamma;
                    worst = k;
                }
            if (worst < 0)
                return std::nullopt;
            sign[std::size_t(worst)] = e.grad(worst) > 0 ? -1.0 : 1.0;
            continue;
        }

        Eigen::LLT<Eigen::MatrixXd> llt(e.hess(support, support));
        if (llt.info() != Eigen::Success)
            return std::nullopt;
        const Eigen::VectorXd step = llt.solve(g);
        double alpha = 1.0;
        Eigen::Index blocked = -1;
        for (std::size_t s = 0; s < support.size(); ++s) {
            const Eigen::Index k = support[s];
            const double moved = x(k) - step(Eigen::Index(s));
            if (moved * sign[std::size_t(k)] < 0.0) {
                const double frac = x(k) / step(Eigen::Index(s));
                if (frac < alpha) {
                    alpha = frac;
                    blocked = k;
                }
            }
        }
        for (std::size_t s = 0; s < support.size(); ++s)
            x(support[s]) -= alpha * step(Eigen::Index(s));
        if (blocked >= 0) {
            x(blocked) = 0.0;
            sign[std::size_t(blocked)] = 0.0;
        }
    }
    return std::nullopt;
}

}  // namespace

LossEval pooled_loss(std::span<const AgentShard> shards, const Eigen::VectorXd& x, const LossConfig& cfg,
                     LossWeighting weighting, Want want)
{
    const double w = weighting == LossWeighting::mean_of_agents ? 1.0 / double(shards.size()) : 1.0;
    LossEval total;
    total.grad = Eigen::VectorXd::Zero(x.size());
    if (want == Want::value_grad_hess)
        total.hess = Eigen::MatrixXd::Zero(x.size(), x.size());
    for (const auto& shard : shards) {
        const LossEval e = logistic_loss(shard, {}, x, cfg, want);
        total.value += w * e.value;
        total.grad += w * e.grad;
        if (want == Want::value_grad_hess)
            total.hess += w * e.hess;
    }
    return total;
}

double optimality_residual(const Eigen::VectorXd& x, const Eigen::VectorXd& grad, double gamma)
{
    double worst = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double r = x(k) == 0.0 ? std::max(std::abs(grad(k)) - gamma, 0.0)
                                     : std::abs(grad(k) + gamma * (x(k) > 0 ? 1.0 : -1.0));
        worst = std::max(worst, r);
    }
    return worst;
}

CentralizedResult solve_centralized(std::span<const AgentShard> shards, const LossConfig& cfg, LossWeighting weighting,
                                    double tol, const std::optional<Eigen::VectorXd>& x0)
{
    if (!(tol > 0.0))
        throw std::invalid_argument("solve_centralized: tolerance must be positive");
    if (shards.empty())
        throw std::invalid_argument("solve_centralized: no data");
    const Eigen::Index d = Eigen::Index(shards.front().dim());

    Eigen::VectorXd x = x0 ? *x0 : Eigen::VectorXd::Zero(d);
    LossEval ex = pooled_loss(shards, x, cfg, weighting);
    double fx = ex.value + cfg.gamma * l1(x);
    Eigen::VectorXd y = x;
    double t = 1.0;
    double lip = 1.0;
    double residual = optimality_residual(x, ex.grad, cfg.gamma);

    for (std::size_t it = 1; it <= kIterationCap; ++it) {
        if (residual <= tol)
            return {x, residual, it - 1};

        const LossEval ey = pooled_loss(shards, y, cfg, weighting);
        Eigen::VectorXd next;
        LossEval en;
        for (;;) {
            next = prox_l1(y - ey.grad / lip, cfg.gamma / lip);
            en = pooled_loss(shards, next, cfg, weighting);
            const Eigen::VectorXd diff = next - y;
            if (en.value <= ey.value + ey.grad.dot(diff) + 0.5 * lip * diff.squaredNorm() + 1e-15 * std::abs(ey.value))
                break;
            lip *= 2.0;
        }
        const double fn = en.value + cfg.gamma * l1(next);
        if (fn > fx && t > 1.0) {
            // Adaptive restart: drop momentum and retry from x.  A plain
            // prox-gradient step from x (t == 1) is always accepted, since
            // near the optimum an increase can be pure roundoff.
            y = x;
            t = 1.0;
            continue;
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = next + ((t - 1.0) / t_next) * (next - x);
        t = t_next;
        x = next;
        fx = fn;
        residual = optimality_residual(x, en.grad, cfg.gamma);
        lip *= 0.95;

        if (residual > tol && residual < 1e-4 && it % 25 == 0) {
            if (auto polished = polish_on_support(shards, cfg, weighting, x, tol)) {
                const LossEval ep = pooled_loss(shards, *polished, cfg, weighting);
                return {*polished, optimality_residual(*polished, ep.grad, cfg.gamma), it};
            }
        }
    }
    throw SolverError("solve_centralized: iteration cap reached with optimality residual " + std::to_string(residual));
}

Eigen::VectorXd cached_centralized(std::span<const AgentShard> shards, const LossConfig& cfg, LossWeighting weighting,
                                   const std::filesystem::path& cache_dir, double tol)
{
    char key[160];
    std::snprintf(key, sizeof key, "%016llx,%.17g,%.17g,%s,%.3g",
                  static_cast<unsigned long long>(dataset_digest(shards)), cfg.gamma, cfg.ridge,
                  weighting == LossWeighting::mean_of_agents ? "mean" : "sum", tol);
    char name[64];
    std::snprintf(name, sizeof name, "xstar_%016llx.csv", static_cast<unsigned long long>(splitmix64(std::hash<std::string>{}(key))));
    const auto path = cache_dir / name;

    if (std::ifstream in(path); in) {
        std::string header, line;
        std::getline(in, header);
        if (header == key) {
            Eigen::VectorXd x(Eigen::Index(shards.front().dim()));
            Eigen::Index k = 0;
            while (k < x.size() && std::getline(in, line))
                x(k++) = std::stod(line);
            if (k == x.size())
                return x;
        }
    }
    const CentralizedResult r = solve_centralized(shards, cfg, weighting, tol);
    std::filesystem::create_directories(cache_dir);
    std::ofstream out(path);
    out << key << '\n';
    char buf[40];
    for (Eigen::Index k = 0; k < r.x.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", r.x(k));
        out << buf << '\n';
    }
    return r.x;
}

double relative_error(const Eigen::MatrixXd& x, const Eigen::MatrixXd& x0, const Eigen::VectorXd& x_star)
{
    const Eigen::RowVectorXd s = x_star.transpose();
    const double den = (x0.rowwise() - s).squaredNorm();
    if (den == 0.0)
        throw std::domain_error("relative_error: initial point equals the minimiser");
    return (x.rowwise() - s).squaredNorm() / den;
}

double relative_error(const Eigen::VectorXd& x_stacked, const Eigen::VectorXd& x0_stacked, const Eigen::VectorXd& x_star)
{
    const Eigen::Index d = x_star.size();
    if (d == 0 || x_stacked.size() % d != 0 || x_stacked.size() != x0_stacked.size())
        throw std::invalid_argument("relative_error: dimension mismatch");
    const Eigen::Index n = x_stacked.size() / d;
    const Eigen::VectorXd rep = x_star.replicate(n, 1);
    const double den = (x0_stacked - rep).squaredNorm();
    if (den == 0.0)
        throw std::domain_error("relative_error: initial point equals the minimiser");
    return (x_stacked - rep).squaredNorm() / den;
}

MatrixState fixed_point(const Topology& topo, std::span<const AgentShard> shards, const HyperParams& hp,
                        const Eigen::VectorXd& x_star)
{
    const std::size_t n = topo.size();
    const std::size_t d = std::size_t(x_star.size());
    const LossConfig cfg{hp.gamma, hp.ridge};
    const double w = hp.loss_weight();

    Eigen::VectorXd grad(Eigen::Index(n * d));
    for (std::size_t i = 0; i < n; ++i)
        grad.segment(Eigen::Index(i * d), Eigen::Index(d)) = w * logistic_loss(shards[i], {}, x_star, cfg, Want::value_grad).grad;

    MatrixState v;
    v.x = x_star.replicate(Eigen::Index(n), 1);
    v.theta = x_star;
    v.lambda = Eigen::VectorXd::Zero(Eigen::Index(d));
    for (std::size_t i = 0; i < n; ++i)
        v.lambda -= grad.segment(Eigen::Index(i * d), Eigen::Index(d));

    const Eigen::MatrixXd es = kron_identity(dense_signed_incidence(topo), d);
    Eigen::MatrixXd eu = es.cwiseAbs();
    v.z = 0.5 * eu * v.x;

    Eigen::VectorXd rhs = -grad;
    rhs.segment(Eigen::Index(hp.q * d), Eigen::Index(d)) -= v.lambda;
    v.alpha = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(es.transpose()).solve(rhs);
    v.beta = -v.alpha;
    v.phi = es.transpose() * v.alpha;
    return v;
}

MatrixState network_state(const Network& net)
{
    const std::size_t d = net.dim();
    const Eigen::MatrixXd es = kron_identity(dense_signed_incidence(net.topo), d);
    MatrixState v;
    v.x = stack_rows(net.primal());
    v.phi = stack_rows(net.duals());
    v.z = 0.5 * es.cwiseAbs() * v.x;
    v.alpha = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(es.transpose()).solve(v.phi);
    v.beta = -v.alpha;
    v.theta = net.reg.theta;
    v.lambda = net.reg.lambda;
    return v;
}

double lyapunov_norm(const MatrixState& state, const MatrixState& fixed, const HyperParams& hp, LyapunovWeighting mode)
{
    const std::size_t n = hp.eps.size();
    const Eigen::Index d = state.x.size() / Eigen::Index(n);
    const double inv_pmin = 1.0 / hp.p_min();
    double x_part = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double scale = mode == LyapunovWeighting::per_agent_x ? 1.0 / hp.participation[i] : inv_pmin;
        x_part += scale * hp.eps[i] * (state.x - fixed.x).segment(Eigen::Index(i) * d, d).squaredNorm();
    }
    const double rest = 2.0 * hp.mu_z * (state.z - fixed.z).squaredNorm() +
                        (2.0 / hp.mu_z) * (state.alpha - fixed.alpha).squaredNorm() +
                        hp.mu_theta * (state.theta - fixed.theta).squaredNorm() +
                        (state.lambda - fixed.lambda).squaredNorm() / hp.mu_theta;
    return x_part + inv_pmin * rest;
}

}  // namespace druid
