#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "druid/dataset.hpp"
#include "druid/metrics.hpp"
#include "druid/state.hpp"
#include "druid/topology.hpp"

namespace druid {

enum class Algorithm { druid_vl, druid_newton, druid_gd, exact_admm };

Algorithm parse_algorithm(const std::string& name);
std::string to_string(Algorithm a);

/// How local work loads E_i are assigned.
///   equal:k         every agent runs k
///   uniform:lo,hi   E_i ~ U{lo, ..., hi}, drawn per run
///   extreme:lo,hi   floor(n/2) agents get lo, the rest hi
///   e1,e2,...       explicit per-agent list
struct LoadProfile {
    enum class Kind { equal, uniform, extreme, list } kind = Kind::equal;
    int lo = 10, hi = 10;
    std::vector<int> values;

    static LoadProfile parse(const std::string& text);
    std::vector<int> loads(std::size_t n, Rng& rng) const;
    std::string describe() const;
};

/// Fixed eps for every agent, or loads-dependent eps from tune_epsilons.
struct EpsilonMode {
    bool tuned = false;
    double value = 1e-4;
    double eps_bar = 1e-4;
    int load_bar = 10;
    double c = 0.98;
    double zeta = 5e-3;
};

struct ExperimentConfig {
    std::string label;
    std::string dataset;  // LIBSVM file; empty means the built-in synthetic set
    std::size_t dim = 22;
    std::size_t samples = 4000;
    PartitionStrategy partition = PartitionStrategy::shuffled;  // shuffled with the master seed, shared by all repeats
    std::size_t agents = 10;
    double er_p = 0.2;
    std::string edges;  // fixed edge list instead of a random graph
    std::uint64_t seed = 1;
    std::size_t rounds = 100;
    Algorithm algorithm = Algorithm::druid_vl;
    LoadProfile e_profile;
    std::vector<double> participation{1.0};  // one value for all agents, or one per agent
    double mu_z = 5e-5, mu_theta = 1e-4, gamma = 2e-6, ridge = 0.0;
    EpsilonMode eps;
    std::size_t bg = 100, bh = 100;
    double target = 1e-2;
    std::size_t repeats = 1;
    std::string out_dir;  // empty: keep results in memory only
    LossWeighting weighting = LossWeighting::mean_of_agents;
    CommAccounting comm = CommAccounting::broadcast;
    std::size_t threads = 1;
    bool stop_at_target = false;
    bool lyapunov = false;
    bool wall_clock = false;
    double exact_tol = 1e-5;
    int exact_max_inner = 200;
    std::optional<double> gd_step;
    double xstar_tol = 1e-10;
};

/// Sets one configuration key from its text form.  Keys use the CLI flag
/// names with '-' or '_' interchangeably.  Throws std::invalid_argument for
/// unknown keys or malformed values.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Reads "key = value" lines ('#' starts a comment) on top of `base`.
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

/// Every accepted key with a one-line description.
const std::vector<std::pair<std::string, std::string>>& documented_keys();

/// Everything needed to execute run k of an experiment.
struct PreparedRun {
    Topology topo;
    std::vector<AgentShard> shards;
    HyperParams hp;
    SolverKind kind;
};

std::vector<Sample> load_samples(const ExperimentConfig& cfg);
PreparedRun prepare_run(const ExperimentConfig& cfg, const std::vector<Sample>& samples, std::size_t run_index);

/// Executes a prepared run from x = 0 and returns its trajectory, starting
/// with the t = 0 record.
std::vector<RoundRecord> execute_run(const ExperimentConfig& cfg, const PreparedRun& run, const Eigen::VectorXd& x_star);

struct Summary {
    std::string label;
    std::size_t runs = 0, reached = 0;
    double rounds_mean = 0, rounds_std = 0;
    double comm_mean = 0, comm_std = 0;
    double flops_mean = 0, flops_std = 0;
};

Summary summarize(const std::string& label, const std::vector<std::vector<RoundRecord>>& runs, double target);

struct ExperimentResult {
    std::vector<std::vector<RoundRecord>> runs;
    Summary summary;
    Eigen::VectorXd x_star;
};

/// Runs cfg.repeats seeds (seed + k).  When out_dir is set, writes
/// run_<k>.csv and summary.csv there.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

inline constexpr const char* kSummaryCsvHeader =
    "label,runs,reached,rounds_mean,rounds_std,comm_mean,comm_std,flops_mean,flops_std";
void write_summary_csv(const std::filesystem::path& path, const std::vector<Summary>& rows);

/// Runs each configuration and writes one table row per configuration.
/// All configurations must share the dataset and the target error.
std::vector<Summary> compare_suite(const std::vector<ExperimentConfig>& cfgs,
                                   const std::optional<std::filesystem::path>& table_csv);

}  // namespace druid
