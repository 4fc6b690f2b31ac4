#include "druid/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace druid {

namespace cost {

double gradient(std::size_t batch, std::size_t dim)
{
    return 2.0 * double(batch) * double(dim);
}

double hessian(std::size_t batch, std::size_t dim)
{
    return double(batch) * double(dim) * double(dim);
}

double factor_solve(std::size_t dim)
{
    const double d = double(dim);
    return d * d * d / 3.0 + 2.0 * d * d;
}

}  // namespace cost

double flop_cost(const SolverKind& kind, std::size_t dim, std::size_t shard_size, std::size_t inner_iterations)
{
    const double newton_full = cost::gradient(shard_size, dim) + cost::hessian(shard_size, dim) + cost::factor_solve(dim);
    return std::visit(
        [&](const auto& k) -> double {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, solver::StochasticNewton>)
                return double(inner_iterations) *
                       (cost::gradient(k.batch_g, dim) + cost::hessian(k.batch_h, dim) + cost::factor_solve(dim));
            else if constexpr (std::is_same_v<K, solver::DeterministicNewton>)
                return newton_full;
            else if constexpr (std::is_same_v<K, solver::GradientDescent>)
                return cost::gradient(shard_size, dim);
            else
                return double(inner_iterations) * newton_full;
        },
        kind);
}

std::optional<std::size_t> rounds_to_error(std::span<const RoundRecord> trajectory, double target)
{
    if (trajectory.empty())
        throw std::invalid_argument("rounds_to_error: empty trajectory");
    for (const auto& r : trajectory)
        if (r.rel_err <= target)
            return r.t;
    return std::nullopt;
}

namespace {

std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void write_round_csv(std::ostream& out, std::span<const RoundRecord> trajectory)
{
    out << kRoundCsvHeader << '\n';
    for (const auto& r : trajectory) {
        out << r.t << ',' << r.active.size() << ',' << num(r.rel_err) << ',' << num(r.comm_vectors) << ','
            << num(r.comm_cum_per_agent) << ',' << num(r.flops) << ',' << (r.wall_ms ? num(*r.wall_ms) : std::string()) << ','
            << (r.lyapunov ? num(*r.lyapunov) : std::string()) << '\n';
    }
}

void write_round_csv(const std::filesystem::path& path, std::span<const RoundRecord> trajectory)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    write_round_csv(out, trajectory);
}

}  // namespace druid
