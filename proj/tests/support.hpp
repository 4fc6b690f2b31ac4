#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "druid/dataset.hpp"
#include "druid/state.hpp"
#include "druid/streams.hpp"
#include "druid/topology.hpp"

namespace testing {

// Random logistic data split contiguously into n shards of `per_agent` rows.
inline std::vector<druid::AgentShard> random_shards(std::size_t n, std::size_t per_agent, std::size_t d,
                                                    std::uint64_t seed, double feature_sd = 1.0)
{
    druid::Rng rng(seed);
    const auto samples = druid::random_logistic_samples(n * per_agent, d, rng, feature_sd);
    return druid::partition(samples, n, druid::PartitionStrategy::contiguous);
}

inline druid::Topology random_topology(std::size_t n, double p, std::uint64_t seed)
{
    druid::Rng rng(seed);
    return druid::generate_erdos_renyi(n, p, rng);
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, druid::Rng& rng, double sd = 1.0)
{
    std::normal_distribution<double> g(0.0, sd);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = g(rng);
    return m;
}

inline double rel_diff(double a, double b, double floor = 1e-300)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Largest coordinate-wise |a - b| / max(|a|, |b|, scale_floor).
inline double max_rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double scale_floor)
{
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) /
                                    std::max({std::abs(a.data()[i]), std::abs(b.data()[i]), scale_floor}));
    return worst;
}

}  // namespace testing
