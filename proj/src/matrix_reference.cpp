#include "druid/matrix_reference.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <string>
#include <type_traits>

#include "druid/local_solver.hpp"
#include "druid/objective.hpp"

namespace druid {

Eigen::MatrixXd kron_identity(const Eigen::MatrixXd& a, std::size_t d)
{
    const auto dd = Eigen::Index(d);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows() * dd, a.cols() * dd);
    for (Eigen::Index r = 0; r < a.rows(); ++r)
        for (Eigen::Index c = 0; c < a.cols(); ++c)
            if (a(r, c) != 0.0)
                out.block(r * dd, c * dd, dd, dd).diagonal().setConstant(a(r, c));
    return out;
}

Eigen::VectorXd stack_rows(const Eigen::MatrixXd& m)
{
    Eigen::VectorXd out(m.size());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        out.segment(i * m.cols(), m.cols()) = m.row(i).transpose();
    return out;
}

MatrixReference::MatrixReference(const Topology& topo, std::vector<AgentShard> shards, const HyperParams& hp,
                                 const std::optional<Eigen::MatrixXd>& x0)
    : topo_(topo), shards_(std::move(shards)), hp_(hp), n_(topo.size()), d_(shards_.front().dim())
{
    if (shards_.size() != n_)
        throw std::invalid_argument("matrix reference: one shard per agent required");
    hp_.validate(n_);

    // Source / destination selectors straight from the edge list.
    const auto m = Eigen::Index(topo_.edge_count());
    Eigen::MatrixXd src = Eigen::MatrixXd::Zero(m, Eigen::Index(n_));
    Eigen::MatrixXd dst = Eigen::MatrixXd::Zero(m, Eigen::Index(n_));
    for (Eigen::Index k = 0; k < m; ++k) {
        src(k, Eigen::Index(topo_.edges()[std::size_t(k)].src)) = 1.0;
        dst(k, Eigen::Index(topo_.edges()[std::size_t(k)].dst)) = 1.0;
    }
    const Eigen::MatrixXd es = src - dst;
    const Eigen::MatrixXd eu = src + dst;
    as_ = kron_identity(src, d_);
    ad_ = kron_identity(dst, d_);
    es_ = kron_identity(es, d_);
    eu_ = kron_identity(eu, d_);
    ls_ = kron_identity(es.transpose() * es, d_);
    deg_ = kron_identity(0.5 * (eu.transpose() * eu + es.transpose() * es), d_);
    Eigen::MatrixXd eq = Eigen::MatrixXd::Zero(Eigen::Index(n_), 1);
    eq(Eigen::Index(hp_.q), 0) = 1.0;
    s_ = kron_identity(eq, d_);

    gamma_diag_.resize(Eigen::Index(n_ * d_));
    for (std::size_t i = 0; i < n_; ++i)
        gamma_diag_.segment(Eigen::Index(i * d_), Eigen::Index(d_)).setConstant(hp_.eps[i]);

    const SeedStreams streams(hp_.seed);
    for (std::size_t i = 0; i < n_; ++i)
        batch_rngs_.push_back(streams.batches(i));

    state_.x = x0 ? stack_rows(*x0) : Eigen::VectorXd::Zero(Eigen::Index(n_ * d_));
    state_.z = 0.5 * eu_ * state_.x;
    state_.alpha = Eigen::VectorXd::Zero(m * Eigen::Index(d_));
    state_.beta = state_.alpha;
    state_.theta = s_.transpose() * state_.x;
    state_.lambda = Eigen::VectorXd::Zero(Eigen::Index(d_));
    state_.phi = es_.transpose() * state_.alpha;
}

Eigen::VectorXd MatrixReference::loss_gradient(const Eigen::VectorXd& x,
                                               const std::vector<std::vector<std::size_t>>& batches) const
{
    const LossConfig cfg{hp_.gamma, hp_.ridge};
    Eigen::VectorXd g(x.size());
    const auto d = Eigen::Index(d_);
    for (std::size_t i = 0; i < n_; ++i)
        g.segment(Eigen::Index(i) * d, d) =
            logistic_loss(shards_[i], batches[i], x.segment(Eigen::Index(i) * d, d), cfg, Want::value_grad).grad;
    return hp_.loss_weight() * g;
}

Eigen::MatrixXd MatrixReference::loss_hessian(const Eigen::VectorXd& x,
                                              const std::vector<std::vector<std::size_t>>& batches) const
{
    const LossConfig cfg{hp_.gamma, hp_.ridge};
    const auto d = Eigen::Index(d_);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(x.size(), x.size());
    for (std::size_t i = 0; i < n_; ++i)
        h.block(Eigen::Index(i) * d, Eigen::Index(i) * d, d, d) =
            logistic_loss(shards_[i], batches[i], x.segment(Eigen::Index(i) * d, d), cfg).hess;
    return hp_.loss_weight() * h;
}

Eigen::VectorXd MatrixReference::anchored_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& anchor) const
{
    const std::vector<std::vector<std::size_t>> full(n_);
    const auto& st = state_;
    return loss_gradient(x, full) + st.phi + s_ * st.lambda + 0.5 * hp_.mu_z * ls_ * anchor +
           gamma_diag_.cwiseProduct(x - anchor) + hp_.mu_theta * s_ * (s_.transpose() * anchor - st.theta);
}

Eigen::VectorXd MatrixReference::perturbed_al_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& anchor) const
{
    const std::vector<std::vector<std::size_t>> full(n_);
    const auto& st = state_;
    Eigen::MatrixXd a(as_.rows() + ad_.rows(), as_.cols());
    a << as_, ad_;
    Eigen::VectorXd y(st.alpha.size() + st.beta.size());
    y << st.alpha, st.beta;
    Eigen::VectorXd bz(2 * st.z.size());
    bz << st.z, st.z;
    return loss_gradient(x, full) + a.transpose() * y + s_ * st.lambda + hp_.mu_z * a.transpose() * (a * x - bz) +
           hp_.mu_theta * s_ * (s_.transpose() * x - st.theta) + gamma_diag_.cwiseProduct(x - anchor);
}

const MatrixState& MatrixReference::step(const SolverKind& kind)
{
    auto& st = state_;
    const Eigen::VectorXd anchor = st.x;
    const auto d = Eigen::Index(d_);
    const Eigen::Index nd = anchor.size();

    Eigen::MatrixXd shift = hp_.mu_z * deg_ + hp_.mu_theta * s_ * s_.transpose();
    shift.diagonal() += gamma_diag_;

    // Round-constant part: phi + S lambda + mu_z/2 L_s x^t + mu_theta S (S^T x^t - theta).
    const Eigen::VectorXd constant =
        st.phi + s_ * st.lambda + 0.5 * hp_.mu_z * ls_ * anchor + hp_.mu_theta * s_ * (s_.transpose() * anchor - st.theta);
    auto gradient = [&](const Eigen::VectorXd& x, const std::vector<std::vector<std::size_t>>& bg) {
        return Eigen::VectorXd(loss_gradient(x, bg) + constant + gamma_diag_.cwiseProduct(x - anchor));
    };
    auto solve = [&](const Eigen::VectorXd& x, const std::vector<std::vector<std::size_t>>& bh, const Eigen::VectorXd& g) {
        Eigen::LLT<Eigen::MatrixXd> llt(loss_hessian(x, bh) + shift);
        if (llt.info() != Eigen::Success)
            throw NotPositiveDefinite("matrix reference: stacked Newton system is not positive definite");
        return Eigen::VectorXd(llt.solve(g));
    };
    const std::vector<std::vector<std::size_t>> full(n_);

    Eigen::VectorXd x = anchor;
    std::visit(
        [&](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, solver::StochasticNewton>) {
                const int rounds = *std::max_element(hp_.loads.begin(), hp_.loads.end());
                for (int e = 0; e < rounds; ++e) {
                    std::vector<std::vector<std::size_t>> bg(n_), bh(n_);
                    for (std::size_t i = 0; i < n_; ++i) {
                        if (e >= hp_.loads[i])
                            continue;
                        if (k.batch_g != shards_[i].size())
                            bg[i] = sample_batch(shards_[i], k.batch_g, batch_rngs_[i]);
                        if (k.batch_h != shards_[i].size())
                            bh[i] = sample_batch(shards_[i], k.batch_h, batch_rngs_[i]);
                    }
                    const Eigen::VectorXd dx = solve(x, bh, gradient(x, bg));
                    for (std::size_t i = 0; i < n_; ++i)
                        if (e < hp_.loads[i])
                            x.segment(Eigen::Index(i) * d, d) -= dx.segment(Eigen::Index(i) * d, d);
                }
            } else if constexpr (std::is_same_v<K, solver::DeterministicNewton>) {
                x -= solve(x, full, gradient(x, full));
            } else if constexpr (std::is_same_v<K, solver::GradientDescent>) {
                x -= k.step * gradient(x, full);
            } else {
                std::vector<bool> done(n_, false);
                for (int it = 0; it < k.max_inner; ++it) {
                    const Eigen::VectorXd g = gradient(x, full);
                    bool all = true;
                    for (std::size_t i = 0; i < n_; ++i) {
                        if (!done[i] && g.segment(Eigen::Index(i) * d, d).norm() <= k.tolerance)
                            done[i] = true;
                        all = all && done[i];
                    }
                    if (all)
                        break;
                    const Eigen::VectorXd dx = solve(x, full, g);
                    for (std::size_t i = 0; i < n_; ++i)
                        if (!done[i])
                            x.segment(Eigen::Index(i) * d, d) -= dx.segment(Eigen::Index(i) * d, d);
                }
            }
        },
        kind);
    (void)nd;

    st.x = x;
    st.theta = prox_l1(s_.transpose() * st.x + st.lambda / hp_.mu_theta, hp_.gamma / hp_.mu_theta);
    st.z = (st.alpha + st.beta) / (2.0 * hp_.mu_z) + 0.5 * eu_ * st.x;
    st.alpha += hp_.mu_z * (as_ * st.x - st.z);
    st.beta += hp_.mu_z * (ad_ * st.x - st.z);
    st.lambda += hp_.mu_theta * (s_.transpose() * st.x - st.theta);
    st.phi = es_.transpose() * st.alpha;
    check_invariants();
    return st;
}

void MatrixReference::check_invariants() const
{
    const auto& st = state_;
    const double z_gap = (st.z - 0.5 * eu_ * st.x).lpNorm<Eigen::Infinity>();
    if (z_gap > 1e-8 * (1.0 + st.z.lpNorm<Eigen::Infinity>()))
        throw InvariantViolation("z != E_u x / 2 (gap " + std::to_string(z_gap) + ")");
    const double dual_gap = (st.alpha + st.beta).lpNorm<Eigen::Infinity>();
    if (dual_gap > 1e-8 * (1.0 + st.alpha.lpNorm<Eigen::Infinity>()))
        throw InvariantViolation("alpha + beta != 0 (gap " + std::to_string(dual_gap) + ")");
}

std::vector<MatrixState> run_matrix_reference(const Topology& topo, const std::vector<AgentShard>& shards,
                                              const HyperParams& hp, std::size_t rounds, const SolverKind& kind,
                                              const std::optional<Eigen::MatrixXd>& x0)
{
    MatrixReference ref(topo, shards, hp, x0);
    std::vector<MatrixState> traj;
    traj.reserve(rounds + 1);
    traj.push_back(ref.state());
    for (std::size_t t = 0; t < rounds; ++t)
        traj.push_back(ref.step(kind));
    return traj;
}

}  // namespace druid
