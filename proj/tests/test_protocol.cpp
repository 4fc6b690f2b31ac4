#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "druid/matrix_reference.hpp"
#include "druid/objective.hpp"
#include "druid/protocol.hpp"
#include "druid/reference.hpp"
#include "support.hpp"

using namespace druid;

namespace {

HyperParams test_params(std::size_t n, std::uint64_t seed, int load = 1, double p = 1.0)
{
    HyperParams hp = HyperParams::uniform(n, 1e-2, load, p);
    hp.mu_z = 0.05;
    hp.mu_theta = 0.1;
    hp.gamma = 1e-3;
    hp.seed = seed;
    hp.q = n / 2;
    return hp;
}

Eigen::MatrixXd random_start(std::size_t n, std::size_t d, std::uint64_t seed)
{
    Rng rng(seed * 7 + 1);
    return testing::random_matrix(Eigen::Index(n), Eigen::Index(d), rng, 0.3);
}

Eigen::MatrixXd unstack(const Eigen::VectorXd& v, std::size_t n, std::size_t d)
{
    Eigen::MatrixXd m(n, d);
    for (std::size_t i = 0; i < n; ++i)
        m.row(Eigen::Index(i)) = v.segment(Eigen::Index(i * d), Eigen::Index(d)).transpose();
    return m;
}

void expect_bit_identical(const Network& a, const Network& b)
{
    CHECK(a.primal() == b.primal());
    CHECK(a.duals() == b.duals());
    CHECK(a.reg.theta == b.reg.theta);
    CHECK(a.reg.lambda == b.reg.lambda);
}

}  // namespace

TEST_CASE("init_run realises the consistent initial state")
{
    const auto topo = testing::random_topology(6, 0.4, 3);
    const auto shards = testing::random_shards(6, 10, 3, 3);
    const HyperParams hp = test_params(6, 3);

    const Network zero = init_run(topo, shards, hp);
    CHECK(zero.primal().isZero(0.0));
    CHECK(zero.duals().isZero(0.0));
    CHECK(zero.reg.theta.isZero(0.0));
    CHECK(zero.reg.lambda.isZero(0.0));

    const Eigen::MatrixXd x0 = random_start(6, 3, 3);
    const Network net = init_run(topo, shards, hp, x0);
    CHECK(net.primal() == x0);
    CHECK(net.reg.theta == Eigen::VectorXd(x0.row(Eigen::Index(hp.q)).transpose()));
    for (const auto& a : net.agents) {
        std::set<std::size_t> keys;
        for (const auto& [j, v] : a.neighbor_cache) {
            keys.insert(j);
            CHECK(v == Eigen::VectorXd(x0.row(Eigen::Index(j)).transpose()));
        }
        const auto& nb = topo.neighbors(a.index);
        CHECK(keys == std::set<std::size_t>(nb.begin(), nb.end()));
    }

    CHECK_THROWS(init_run(topo, testing::random_shards(5, 10, 3, 3), hp));
    CHECK_THROWS(init_run(topo, shards, hp, Eigen::MatrixXd::Zero(6, 4)));
}

TEST_CASE("participation sampling")
{
    Rng rng(11);
    std::vector<double> all(7, 1.0);
    for (int t = 0; t < 100; ++t)
        CHECK(sample_active(all, rng).size() == 7);

    std::vector<double> half(10, 0.5);
    half[0] = 1.0;
    std::vector<int> hits(10, 0);
    const int rounds = 10000;
    for (int t = 0; t < rounds; ++t)
        for (auto i : sample_active(half, rng))
            ++hits[i];
    CHECK(hits[0] == rounds);
    const double sigma = std::sqrt(rounds * 0.25);
    for (std::size_t i = 1; i < 10; ++i)
        CHECK(std::abs(hits[i] - rounds * 0.5) <= 3.0 * sigma);
}

TEST_CASE("a round with nobody active changes nothing")
{
    Network net = init_run(testing::random_topology(5, 0.5, 2), testing::random_shards(5, 20, 3, 2),
                           test_params(5, 2), random_start(5, 3, 2));
    run_round_with(net, solver::DeterministicNewton{}, {0, 1, 2, 3, 4});
    const Network before = net;
    const RoundRecord rec = run_round_with(net, solver::DeterministicNewton{}, {});
    expect_bit_identical(before, net);
    CHECK(rec.comm_vectors == 0.0);
    CHECK(rec.flops == 0.0);
    CHECK(rec.active.empty());
}

TEST_CASE("when only the regulariser agent is active the update stays local")
{
    const auto topo = testing::random_topology(6, 0.5, 4);
    Network net = init_run(topo, testing::random_shards(6, 20, 3, 4), test_params(6, 4), random_start(6, 3, 4));
    run_round_with(net, solver::DeterministicNewton{}, {0, 1, 2, 3, 4, 5});
    const Network before = net;
    const std::size_t q = net.reg.q;
    const RoundRecord rec = run_round_with(net, solver::DeterministicNewton{}, {q});
    for (std::size_t i = 0; i < 6; ++i) {
        if (i == q) {
            CHECK(net.agents[i].x != before.agents[i].x);
            CHECK(net.agents[i].phi != before.agents[i].phi);
        } else {
            CHECK(net.agents[i].x == before.agents[i].x);
            CHECK(net.agents[i].phi == before.agents[i].phi);
        }
        for (const auto& [j, v] : net.agents[i].neighbor_cache)
            CHECK(v == (j == q ? net.agents[q].x : before.agents[i].neighbor_cache.at(j)));
    }
    CHECK(net.reg.theta != before.reg.theta);
    CHECK(net.reg.lambda != before.reg.lambda);
    CHECK(rec.comm_vectors == 1.0);
    for (std::size_t i = 0; i < 6; ++i)
        CHECK((rec.agent_flops[i] > 0.0) == (i == q));
}

TEST_CASE("frozen regulariser while its owner sleeps")
{
    Network net = init_run(testing::random_topology(5, 0.6, 5), testing::random_shards(5, 20, 3, 5),
                           test_params(5, 5), random_start(5, 3, 5));
    run_round_with(net, solver::DeterministicNewton{}, {0, 1, 2, 3, 4});
    const auto theta = net.reg.theta;
    const auto lambda = net.reg.lambda;
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < 5; ++i)
        if (i != net.reg.q)
            others.push_back(i);
    run_round_with(net, solver::DeterministicNewton{}, others);
    CHECK(net.reg.theta == theta);
    CHECK(net.reg.lambda == lambda);
}

TEST_CASE("per-edge communication accounting counts neighbours")
{
    const auto topo = testing::random_topology(6, 0.5, 6);
    HyperParams hp = test_params(6, 6);
    hp.comm = CommAccounting::per_edge;
    Network net = init_run(topo, testing::random_shards(6, 10, 2, 6), hp);
    const RoundRecord rec = run_round_with(net, solver::DeterministicNewton{}, {1, 4});
    CHECK(rec.comm_vectors == double(topo.degree(1) + topo.degree(4)));
}

TEST_CASE("the first matrix-form x-update is the damped Newton step on the augmented Lagrangian")
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const std::size_t n = 5, d = 3;
        const auto topo = testing::random_topology(n, 0.5, seed);
        const auto shards = testing::random_shards(n, 15, d, seed);
        const HyperParams hp = test_params(n, seed);
        MatrixReference ref(topo, shards, hp, random_start(n, d, seed));
        // Give the duals something nonzero before checking the step.
        ref.step(solver::DeterministicNewton{});
        const Eigen::VectorXd x = ref.state().x;
        const Eigen::VectorXd g = ref.perturbed_al_gradient(x, x);

        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(Eigen::Index(n * d), Eigen::Index(n * d));
        const double w = hp.loss_weight();
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::VectorXd xi = x.segment(Eigen::Index(i * d), Eigen::Index(d));
            const double shift = hp.mu_z * double(topo.degree(i)) + (i == hp.q ? hp.mu_theta : 0.0) + hp.eps[i];
            h.block(Eigen::Index(i * d), Eigen::Index(i * d), Eigen::Index(d), Eigen::Index(d)) =
                w * logistic_loss(shards[i], {}, xi, {hp.gamma, hp.ridge}).hess +
                shift * Eigen::MatrixXd::Identity(Eigen::Index(d), Eigen::Index(d));
        }
        const Eigen::VectorXd expected = x - h.llt().solve(g);
        ref.step(solver::DeterministicNewton{});
        CHECK(testing::max_rel_diff(ref.state().x, expected, 1e-12) <= 1e-10);
    }
}

TEST_CASE("augmented Lagrangian gradient: agent blocks and curvature")
{
    const std::size_t n = 4, d = 3;
    const auto topo = testing::random_topology(n, 0.6, 21);
    const auto shards = testing::random_shards(n, 25, d, 21);
    const HyperParams hp = test_params(n, 21);
    Network net = init_run(topo, shards, hp, random_start(n, d, 21));
    MatrixReference ref(topo, shards, hp, random_start(n, d, 21));
    for (int t = 0; t < 3; ++t) {
        run_round_with(net, solver::DeterministicNewton{}, {0, 1, 2, 3});
        ref.step(solver::DeterministicNewton{});
    }
    const Eigen::VectorXd x = ref.state().x;

    SUBCASE("at the anchor each block is the agent's local gradient")
    {
        const Eigen::VectorXd g = ref.perturbed_al_gradient(x, x);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& a = net.agents[i];
            const Eigen::VectorXd local =
                local_sto_gradient(a, topo.neighbors(i), i == net.reg.q ? &net.reg : nullptr, a.x, {}, hp);
            CHECK(testing::max_rel_diff(g.segment(Eigen::Index(i * d), Eigen::Index(d)), local, 1e-12) <= 1e-9);
        }
    }

    SUBCASE("finite differences match the block-diagonal local Hessians")
    {
        Rng rng(4);
        const Eigen::VectorXd anchor = x;
        const Eigen::VectorXd at = x + testing::random_matrix(x.size(), 1, rng, 0.1);
        const double h = 1e-6;
        Eigen::MatrixXd fd(x.size(), x.size());
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            Eigen::VectorXd up = at, dn = at;
            up(k) += h;
            dn(k) -= h;
            fd.col(k) = (ref.perturbed_al_gradient(up, anchor) - ref.perturbed_al_gradient(dn, anchor)) / (2 * h);
        }
        Eigen::MatrixXd block_diag = Eigen::MatrixXd::Zero(x.size(), x.size());
        for (std::size_t i = 0; i < n; ++i)
            block_diag.block(Eigen::Index(i * d), Eigen::Index(i * d), Eigen::Index(d), Eigen::Index(d)) =
                local_subsampled_hessian(net.agents[i], topo.degree(i),
                                         at.segment(Eigen::Index(i * d), Eigen::Index(d)), {}, hp);
        CHECK((fd - block_diag).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("synchronous rounds agree with the stacked matrix iteration")
{
    for (std::size_t n : {3, 5, 10}) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            CAPTURE(n);
            CAPTURE(seed);
            const std::size_t d = 4;
            const auto topo = testing::random_topology(n, 0.4, seed + 100 * n);
            const auto shards = testing::random_shards(n, 20, d, seed);
            const HyperParams hp = test_params(n, seed);
            const Eigen::MatrixXd x0 = random_start(n, d, seed);

            Network net = init_run(topo, shards, hp, x0);
            MatrixReference ref(topo, shards, hp, x0);
            std::vector<std::size_t> everyone(n);
            for (std::size_t i = 0; i < n; ++i)
                everyone[i] = i;
            double worst = 0.0;
            for (int t = 0; t < 50; ++t) {
                run_round_with(net, solver::DeterministicNewton{}, everyone);
                const MatrixState& s = ref.step(solver::DeterministicNewton{});
                worst = std::max(worst, testing::max_rel_diff(net.primal(), unstack(s.x, n, d), 1e-8));
                worst = std::max(worst, testing::max_rel_diff(net.duals(), unstack(s.phi, n, d), 1e-8));
                worst = std::max(worst, testing::max_rel_diff(net.reg.theta, s.theta, 1e-8));
                worst = std::max(worst, testing::max_rel_diff(net.reg.lambda, s.lambda, 1e-8));
            }
            CHECK(worst <= 1e-9);
        }
    }
}

TEST_CASE("shared-seed stochastic rounds agree with the stacked iteration")
{
    const std::size_t n = 5, d = 3;
    const auto topo = testing::random_topology(n, 0.5, 8);
    const auto shards = testing::random_shards(n, 40, d, 8);
    HyperParams hp = test_params(n, 8, 3);
    hp.batch_g = 10;
    hp.batch_h = 12;
    Network net = init_run(topo, shards, hp);
    MatrixReference ref(topo, shards, hp);
    const solver::StochasticNewton kind{10, 12};
    for (int t = 0; t < 30; ++t) {
        run_round_with(net, kind, {0, 1, 2, 3, 4});
        ref.step(kind);
    }
    CHECK(testing::max_rel_diff(net.primal(), unstack(ref.state().x, n, d), 1e-8) <= 1e-9);
}

TEST_CASE("matrix iteration keeps the edge-variable identities")
{
    const std::size_t n = 6, d = 2;
    const auto topo = testing::random_topology(n, 0.5, 9);
    MatrixReference ref(topo, testing::random_shards(n, 20, d, 9), test_params(n, 9), random_start(n, d, 9));
    const Eigen::MatrixXd eu = kron_identity(to_dense(topo.unsigned_incidence()), d);
    const Eigen::MatrixXd es = kron_identity(to_dense(topo.signed_incidence()), d);
    for (int t = 0; t <= 20; ++t) {
        const MatrixState& s = ref.state();
        CHECK((s.z - 0.5 * eu * s.x).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((s.alpha + s.beta).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((s.phi - es.transpose() * s.alpha).cwiseAbs().maxCoeff() <= 1e-12);
        ref.step(solver::DeterministicNewton{});
    }
}

TEST_CASE("a consensus start on a shared minimiser keeps the duals at zero")
{
    const std::size_t n = 5, d = 3;
    const auto topo = testing::random_topology(n, 0.5, 12);
    const auto one = testing::random_shards(1, 60, d, 12)[0];
    std::vector<AgentShard> shards(n, one);
    for (std::size_t i = 0; i < n; ++i)
        shards[i].agent = i;
    HyperParams hp = test_params(n, 12);
    hp.gamma = 0.0;
    const auto xs = solve_centralized(shards, {0.0, 0.0}, hp.weighting, 1e-13).x;
    Eigen::MatrixXd x0(n, d);
    x0.rowwise() = xs.transpose();
    Network net = init_run(topo, shards, hp, x0);
    for (int t = 0; t < 10; ++t)
        run_round_with(net, solver::DeterministicNewton{}, {0, 1, 2, 3, 4});
    CHECK(net.duals().cwiseAbs().maxCoeff() <= 1e-13);
    CHECK(net.reg.lambda.cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("a synchronous round leaves the optimal state in place")
{
    const std::size_t n = 5, d = 4;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto topo = testing::random_topology(n, 0.5, seed + 30);
        const auto shards = testing::random_shards(n, 40, d, seed + 30);
        HyperParams hp = test_params(n, seed);
        hp.gamma = 5e-3;
        const auto xs = solve_centralized(shards, {hp.gamma, hp.ridge}, hp.weighting, 1e-14).x;
        const MatrixState star = fixed_point(topo, shards, hp, xs);

        Eigen::MatrixXd x0(n, d);
        x0.rowwise() = xs.transpose();
        Network net = init_run(topo, shards, hp, x0);
        for (std::size_t i = 0; i < n; ++i)
            net.agents[i].phi = star.phi.segment(Eigen::Index(i * d), Eigen::Index(d));
        net.reg.theta = star.theta;
        net.reg.lambda = star.lambda;
        const Network before = net;
        run_round_with(net, solver::DeterministicNewton{}, {0, 1, 2, 3, 4});
        CHECK((net.primal() - before.primal()).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((net.duals() - before.duals()).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((net.reg.theta - before.reg.theta).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((net.reg.lambda - before.reg.lambda).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("runs are reproducible and independent of the thread count")
{
    const auto topo = testing::random_topology(8, 0.4, 14);
    const auto shards = testing::random_shards(8, 50, 5, 14);
    HyperParams hp = test_params(8, 14, 4, 0.6);
    const solver::StochasticNewton kind{15, 15};
    auto play = [&](std::size_t threads) {
        HyperParams h = hp;
        h.threads = threads;
        Network net = init_run(topo, shards, h);
        std::vector<RoundRecord> recs;
        for (int t = 0; t < 25; ++t)
            recs.push_back(run_round(net, kind));
        return std::pair{net, recs};
    };
    const auto [a, ra] = play(1);
    const auto [b, rb] = play(1);
    const auto [c, rc] = play(4);
    expect_bit_identical(a, b);
    expect_bit_identical(a, c);
    for (std::size_t t = 0; t < ra.size(); ++t) {
        CHECK(ra[t].active == rb[t].active);
        CHECK(ra[t].active == rc[t].active);
        CHECK(ra[t].agent_flops == rc[t].agent_flops);
        CHECK(ra[t].comm_vectors == rc[t].comm_vectors);
    }
}

TEST_CASE("named seed streams")
{
    const SeedStreams s(42);
    CHECK(s.derive("batch", 3) == SeedStreams(42).derive("batch", 3));
    std::set<std::uint64_t> seeds{s.derive("graph"), s.derive("partition"), s.derive("participation"),
                                  s.derive("load-profile")};
    for (std::uint64_t i = 0; i < 100; ++i)
        seeds.insert(s.derive("batch", i));
    CHECK(seeds.size() == 104);
    CHECK(SeedStreams(43).derive("graph") != s.derive("graph"));
    Rng a = s.participation(), b = s.participation();
    CHECK(a() == b());
}

TEST_CASE("epsilon tuning rule")
{
    const double c = 0.98, zeta = 5e-3;
    CHECK(tune_epsilons({10}, 1e-4, 10, c, zeta)[0] == doctest::Approx(1e-4).epsilon(1e-14));

    // 1e-4 * 0.98^-9 * (1 - 1.005 * 0.98^10) / (1 - 1.005 * 0.98), evaluated by hand.
    CHECK(tune_epsilons({1}, 1e-4, 10, c, zeta)[0] == doctest::Approx(1.4205531070939181e-3).epsilon(1e-12));

    std::vector<int> loads;
    for (int e = 1; e <= 19; ++e)
        loads.push_back(e);
    const auto eps = tune_epsilons(loads, 1e-4, 10, c, zeta);
    for (std::size_t k = 1; k < eps.size(); ++k)
        CHECK(eps[k] < eps[k - 1]);

    CHECK_THROWS_AS(tune_epsilons({1}, 1e-4, 10, c, 0.1), std::domain_error);
    CHECK_THROWS_AS(tune_epsilons({1}, 1e-4, 10, 1.0, zeta), std::domain_error);
}
