#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "druid/state.hpp"

namespace druid {

struct RoundRecord {
    std::size_t t = 0;
    std::vector<std::size_t> active;
    double rel_err = 1.0;
    double comm_vectors = 0.0;        // d-vectors sent this round
    double comm_cum_per_agent = 0.0;  // cumulative vectors / n
    double flops = 0.0;               // cumulative cost-model units
    std::vector<double> agent_flops;  // this round, indexed by agent
    std::optional<double> wall_ms;    // only when wall-clock timing is requested
    std::optional<double> lyapunov;
};

/// Deterministic cost model shared by every solver variant:
///   gradient over b samples   2 b d
///   Hessian over b samples    b d^2
///   SPD factor + solve        d^3 / 3 + 2 d^2
namespace cost {
double gradient(std::size_t batch, std::size_t dim);
double hessian(std::size_t batch, std::size_t dim);
double factor_solve(std::size_t dim);
}  // namespace cost

/// Cost of one agent's primal update.  `inner_iterations` is E_i for
/// stochastic Newton and the number of Newton steps taken in exact mode;
/// exact-mode convergence checks are not charged.
double flop_cost(const SolverKind& kind, std::size_t dim, std::size_t shard_size, std::size_t inner_iterations);

/// First round whose relative error is <= target.
std::optional<std::size_t> rounds_to_error(std::span<const RoundRecord> trajectory, double target);

inline constexpr const char* kRoundCsvHeader = "t,active_count,rel_err,comm_vectors,comm_cum_per_agent,flops,wall_ms,lyapunov";

void write_round_csv(std::ostream& out, std::span<const RoundRecord> trajectory);
void write_round_csv(const std::filesystem::path& path, std::span<const RoundRecord> trajectory);

}  // namespace druid
