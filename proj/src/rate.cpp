#include "druid/rate.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "druid/local_solver.hpp"
#include "druid/objective.hpp"
#include "druid/topology.hpp"

namespace druid {

namespace {

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

}  // namespace

double default_xi(double c)
{
    if (!(c > 0.0 && c < 1.0))
        throw std::domain_error("default_xi: c must lie in (0, 1)");
    return 0.5 * (1.0 / c - 1.0);
}

double smoothness_constant(const RateConstants& rc)
{
    return rc.M_f + rc.mu_z * double(rc.max_degree) + rc.mu_theta + max_of(rc.eps);
}

double tau(double c, int E, double xi, double M)
{
    const double ce = std::pow(c, E);
    const double den = 1.0 - (1.0 + xi) * ce;
    if (!(xi > 0.0) || !(den > 0.0))
        throw std::domain_error("tau: requires xi > 0 and (1 + xi) c^E < 1, got xi=" + fmt(xi) + " c^E=" + fmt(ce));
    return (1.0 + 1.0 / xi) * M * M * ce / den;
}

std::vector<double> taus(const RateConstants& rc)
{
    const double M = smoothness_constant(rc);
    std::vector<double> out(rc.c.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = tau(rc.c[i], rc.E[i], rc.xi[i], M);
    return out;
}

double epsilon_star(double tau_value, double zeta)
{
    return zeta * tau_value + std::sqrt(zeta * zeta * tau_value * tau_value + tau_value);
}

namespace {

std::array<double, 5> common_terms(const RateConstants& rc, double first, double max_eps)
{
    const double harmonic = 2.0 * rc.m_f * rc.M_f / (rc.m_f + rc.M_f);
    return {first,
            (harmonic - 1.0 / rc.zeta) / (max_eps + rc.mu_theta * (rc.sigma_lu_max + 2.0)),
            0.4 * rc.mu_theta * rc.sigma_plus_min / (rc.m_f + rc.M_f),
            rc.sigma_plus_min / (5.0 * std::max(1.0, rc.sigma_lu_max)),
            0.5};
}

}  // namespace

std::array<double, 5> eta_terms(const RateConstants& rc, std::span<const double> tau_values)
{
    double first = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < tau_values.size(); ++i) {
        const double e = rc.eps[i], t = tau_values[i];
        first = std::min(first, rc.mu_theta * rc.sigma_plus_min * (e - rc.zeta * t) / (5.0 * (t + e * e)));
    }
    return common_terms(rc, first, max_of(rc.eps));
}

std::array<double, 5> eta_corollary_terms(const RateConstants& rc, std::span<const double> tau_values)
{
    double inner = std::numeric_limits<double>::infinity();
    double max_eps = 0.0;
    for (const double t : tau_values) {
        inner = std::min(inner, 1.0 / (std::sqrt(t * t + t / (rc.zeta * rc.zeta)) + t));
        max_eps = std::max(max_eps, epsilon_star(t, rc.zeta));
    }
    return common_terms(rc, rc.mu_theta * rc.sigma_plus_min / (10.0 * rc.zeta) * inner, max_eps);
}

std::vector<std::string> failed_conditions(const RateConstants& rc)
{
    std::vector<std::string> failed;
    const std::size_t n = rc.eps.size();
    if (rc.c.size() != n || rc.xi.size() != n || rc.E.size() != n)
        return {"per-agent vectors c, xi, eps, E differ in length"};
    if (!(rc.m_f > 0.0))
        failed.push_back("m_f > 0 fails (m_f = " + fmt(rc.m_f) + ")");
    if (!(rc.m_f <= rc.M_f))
        failed.push_back("m_f <= M_f fails (" + fmt(rc.m_f) + " > " + fmt(rc.M_f) + ")");
    if (!(rc.mu_z > 0.0 && rc.mu_theta > 0.0 && rc.zeta > 0.0))
        failed.push_back("mu_z, mu_theta, zeta must be positive");
    if (!(rc.sigma_plus_min > 0.0))
        failed.push_back("sigma_plus_min > 0 fails");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(rc.c[i] > 0.0 && rc.c[i] < 1.0))
            failed.push_back("0 < c_" + std::to_string(i) + " < 1 fails (c = " + fmt(rc.c[i]) + ")");
        else if (!(rc.xi[i] > 0.0 && rc.xi[i] < 1.0 / rc.c[i] - 1.0))
            failed.push_back("0 < xi_" + std::to_string(i) + " < 1/c_i - 1 = " + fmt(1.0 / rc.c[i] - 1.0) +
                             " fails (xi = " + fmt(rc.xi[i]) + ")");
        if (rc.E[i] < 1)
            failed.push_back("E_" + std::to_string(i) + " >= 1 fails");
        if (!(rc.eps[i] > 0.0))
            failed.push_back("eps_" + std::to_string(i) + " > 0 fails");
    }
    if (!failed.empty() || !(rc.m_f > 0.0))
        return failed;

    const double lower = (rc.m_f + rc.M_f) / (2.0 * rc.m_f * rc.M_f);
    if (!(rc.zeta > lower))
        failed.push_back("zeta > (m_f + M_f) / (2 m_f M_f) = " + fmt(lower) + " fails (zeta = " + fmt(rc.zeta) + ")");
    const std::vector<double> t = taus(rc);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(rc.zeta < rc.eps[i] / t[i]))
            failed.push_back("zeta < eps_" + std::to_string(i) + " / tau_" + std::to_string(i) + " = " +
                             fmt(rc.eps[i] / t[i]) + " fails (zeta = " + fmt(rc.zeta) + ")");
        if (!(rc.eps[i] > t[i] * lower))
            failed.push_back("eps_" + std::to_string(i) + " > tau_i (m_f + M_f) / (2 m_f M_f) = " + fmt(t[i] * lower) +
                             " fails (eps = " + fmt(rc.eps[i]) + ")");
    }
    return failed;
}

std::vector<std::string> rate_warnings(const RateConstants& rc)
{
    std::vector<std::string> out;
    if (std::abs(rc.mu_z - 2.0 * rc.mu_theta) > 1e-12 * std::max(rc.mu_z, rc.mu_theta))
        out.push_back("mu_z = " + fmt(rc.mu_z) + " differs from 2 mu_theta = " + fmt(2.0 * rc.mu_theta) +
                      "; the rate analysis assumes mu_z = 2 mu_theta");
    return out;
}

double eta(const RateConstants& rc)
{
    const auto failed = failed_conditions(rc);
    if (!failed.empty()) {
        std::string msg = "rate conditions violated:";
        for (const auto& f : failed)
            msg += "\n  " + f;
        throw RateConditionError(msg);
    }
    const auto t = taus(rc);
    const auto terms = eta_terms(rc, t);
    return *std::min_element(terms.begin(), terms.end());
}

double eta_corollary(const RateConstants& rc)
{
    RateConstants tuned = rc;
    const auto t = taus(rc);
    for (std::size_t i = 0; i < t.size(); ++i)
        tuned.eps[i] = epsilon_star(t[i], rc.zeta);
    const auto failed = failed_conditions(rc);
    std::vector<std::string> relevant;
    for (const auto& f : failed)
        if (f.rfind("eps_", 0) != 0 && f.rfind("zeta < eps_", 0) != 0)
            relevant.push_back(f);
    if (!relevant.empty()) {
        std::string msg = "rate conditions violated:";
        for (const auto& f : relevant)
            msg += "\n  " + f;
        throw RateConditionError(msg);
    }
    const auto terms = eta_corollary_terms(rc, t);
    return *std::min_element(terms.begin(), terms.end());
}

double contraction_factor(double eta_value, double p_min)
{
    if (!(eta_value > 0.0) || !(p_min > 0.0 && p_min <= 1.0))
        throw std::domain_error("contraction_factor: need eta > 0 and p_min in (0, 1]");
    return 1.0 - eta_value * p_min / (1.0 + eta_value);
}

CurvatureEstimate estimate_curvature(std::span<const AgentShard> shards, const HyperParams& hp, const Eigen::VectorXd& x,
                                     std::size_t batch, std::size_t samples, Rng& rng)
{
    const LossConfig cfg{hp.gamma, hp.ridge};
    const double w = hp.loss_weight();
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& shard : shards) {
        for (std::size_t s = 0; s < samples; ++s) {
            const auto rows = sample_batch(shard, std::min(batch, shard.size()), rng);
            const Eigen::MatrixXd h = w * logistic_loss(shard, rows, x, cfg).hess;
            const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h, Eigen::EigenvaluesOnly).eigenvalues();
            lo = std::min(lo, ev.minCoeff());
            hi = std::max(hi, ev.maxCoeff());
        }
    }
    CurvatureEstimate est;
    est.M_f = hi;
    if (hp.ridge > 0.0) {
        est.m_f = w * hp.ridge;
    } else {
        est.m_f = std::max(lo, 1e-8);
        est.weak = true;
    }
    return est;
}

RateConstants rate_constants_for(const Network& net, double zeta, std::size_t batch, std::size_t samples, Rng& rng)
{
    RateConstants rc;
    std::vector<AgentShard> shards;
    for (const auto& a : net.agents)
        shards.push_back(*a.shard);
    const auto curv = estimate_curvature(shards, net.hp, net.agents.front().x, batch, samples, rng);
    rc.m_f = curv.m_f;
    rc.M_f = curv.M_f;
    const RegularizerState* reg = &net.reg;
    for (const auto& a : net.agents) {
        const auto nbrs = net.topo.neighbors(a.index);
        const double c = std::clamp(estimate_contraction(a, nbrs, a.index == net.reg.q ? reg : nullptr, net.hp), 1e-6,
                                    1.0 - 1e-9);
        rc.c.push_back(c);
        rc.xi.push_back(default_xi(c));
    }
    rc.zeta = zeta;
    rc.mu_z = net.hp.mu_z;
    rc.mu_theta = net.hp.mu_theta;
    rc.eps = net.hp.eps;
    rc.E = net.hp.loads;
    const auto sc = spectral_constants(net.topo, net.hp.q);
    rc.sigma_plus_min = sc.sigma_plus_min;
    rc.sigma_lu_max = sc.sigma_lu_max;
    rc.max_degree = net.topo.max_degree();
    return rc;
}

}  // namespace druid
