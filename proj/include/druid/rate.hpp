#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "druid/dataset.hpp"
#include "druid/protocol.hpp"
#include "druid/state.hpp"

namespace druid {

/// Raised when the constants violate a condition of the convergence
/// theorem.  what() lists every failed inequality, one per line.
class RateConditionError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct RateConstants {
    double m_f = 0.0, M_f = 0.0;
    std::vector<double> c;    // per-agent contraction c_i in (0, 1)
    std::vector<double> xi;   // per-agent xi_i in (0, 1/c_i - 1)
    double zeta = 0.0;
    double mu_z = 0.0, mu_theta = 0.0;
    std::vector<double> eps;
    std::vector<int> E;
    double sigma_plus_min = 0.0;
    double sigma_lu_max = 0.0;
    std::size_t max_degree = 0;
};

/// Midpoint of the admissible xi interval, (1/c - 1) / 2.
double default_xi(double c);

/// Smoothness constant of the perturbed augmented Lagrangian,
/// M_f + mu_z max|N_i| + mu_theta + max eps_i.
double smoothness_constant(const RateConstants& rc);

/// (1 + 1/xi) M^2 c^E / (1 - (1 + xi) c^E).  Throws std::domain_error unless
/// (1 + xi) c^E < 1.
double tau(double c, int E, double xi, double M);

/// tau_i for every agent of `rc`.
std::vector<double> taus(const RateConstants& rc);

/// zeta tau + sqrt(zeta^2 tau^2 + tau).
double epsilon_star(double tau, double zeta);

/// The five candidates whose minimum is the rate eta, evaluated for given
/// tau_i without checking the theorem's conditions.
std::array<double, 5> eta_terms(const RateConstants& rc, std::span<const double> tau_values);

/// Same five candidates for the tuned-epsilon variant: the first entry is
/// mu_theta sigma / (10 zeta) min_i 1 / (sqrt(tau_i^2 + tau_i / zeta^2) + tau_i),
/// the remaining four are evaluated with eps_i = epsilon_star(tau_i, zeta).
std::array<double, 5> eta_corollary_terms(const RateConstants& rc, std::span<const double> tau_values);

/// Every violated theorem condition as readable text (empty when all hold).
std::vector<std::string> failed_conditions(const RateConstants& rc);

/// Non-fatal remarks, currently the mu_z != 2 mu_theta mismatch with the
/// parameter choice used in the analysis.
std::vector<std::string> rate_warnings(const RateConstants& rc);

/// Rate eta for the given constants.  Throws RateConditionError listing the
/// failed inequalities.
double eta(const RateConstants& rc);

/// Rate with eps_i replaced by epsilon_star(tau_i, zeta).  Since M depends on
/// max eps_i, tau_i are taken from rc as given.
double eta_corollary(const RateConstants& rc);

/// 1 - eta p_min / (1 + eta).
double contraction_factor(double eta, double p_min);

struct CurvatureEstimate {
    double m_f = 0.0, M_f = 0.0;
    bool weak = false;  // no ridge: m_f is the smallest sampled eigenvalue floored at 1e-8
};

/// Curvature of the weighted agent losses w f_i at x from `samples`
/// mini-batch Hessians of size `batch` per agent.  M_f is the largest
/// eigenvalue seen; m_f is the weighted ridge when positive, else the
/// smallest eigenvalue seen floored at 1e-8.
CurvatureEstimate estimate_curvature(std::span<const AgentShard> shards, const HyperParams& hp, const Eigen::VectorXd& x,
                                     std::size_t batch, std::size_t samples, Rng& rng);

/// Assembles rate constants for a network at its current state: curvature
/// from sampled Hessians, c_i from estimate_contraction (clamped into
/// [1e-6, 1 - 1e-9]), xi_i at the midpoint, spectral constants from the
/// topology.
RateConstants rate_constants_for(const Network& net, double zeta, std::size_t batch, std::size_t samples, Rng& rng);

}  // namespace druid
