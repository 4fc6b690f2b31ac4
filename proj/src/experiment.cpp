#include "druid/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "druid/local_solver.hpp"
#include "druid/objective.hpp"
#include "druid/protocol.hpp"
#include "druid/reference.hpp"

#include <Eigen/Eigenvalues>

namespace druid {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep))
        out.push_back(trim(item));
    return out;
}

double to_double(const std::string& key, const std::string& v)
{
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size())
        throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
    return out;
}

std::uint64_t to_count(const std::string& key, const std::string& v)
{
    std::size_t used = 0;
    unsigned long long out = 0;
    try {
        if (!v.empty() && v[0] != '-')
            out = std::stoull(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size())
        throw std::invalid_argument(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v)
{
    if (v == "1" || v == "true" || v == "yes" || v == "on")
        return true;
    if (v == "0" || v == "false" || v == "no" || v == "off")
        return false;
    throw std::invalid_argument(key + ": expected true/false, got '" + v + "'");
}

std::string canonical_key(std::string key)
{
    key = trim(key);
    while (!key.empty() && key.front() == '-')
        key.erase(key.begin());
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

double mean(const std::vector<double>& v)
{
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

double stddev(const std::vector<double>& v)
{
    if (v.size() < 2)
        return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v)
        s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size() - 1));
}

std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// x* depends only on the shards and the loss settings, so repeats with a
// fixed partition share one solve.
Eigen::VectorXd minimiser_for(const ExperimentConfig& cfg, const std::vector<AgentShard>& shards)
{
    static std::mutex mutex;
    static std::map<std::string, Eigen::VectorXd> memo;
    char key[128];
    std::snprintf(key, sizeof key, "%016llx/%.17g/%.17g/%d/%.3g",
                  static_cast<unsigned long long>(dataset_digest(shards)), cfg.gamma, cfg.ridge, int(cfg.weighting),
                  cfg.xstar_tol);
    std::lock_guard lock(mutex);
    if (auto it = memo.find(key); it != memo.end())
        return it->second;
    const LossConfig loss{cfg.gamma, cfg.ridge};
    Eigen::VectorXd x = cfg.out_dir.empty()
                            ? solve_centralized(shards, loss, cfg.weighting, cfg.xstar_tol).x
                            : cached_centralized(shards, loss, cfg.weighting, std::filesystem::path(cfg.out_dir) / "cache",
                                                 cfg.xstar_tol);
    memo.emplace(key, x);
    return x;
}

}  // namespace

Algorithm parse_algorithm(const std::string& name)
{
    if (name == "druid-vl")
        return Algorithm::druid_vl;
    if (name == "druid-newton")
        return Algorithm::druid_newton;
    if (name == "druid-gd")
        return Algorithm::druid_gd;
    if (name == "exact-admm")
        return Algorithm::exact_admm;
    throw std::invalid_argument("unknown algorithm '" + name + "' (druid-vl, druid-newton, druid-gd, exact-admm)");
}

std::string to_string(Algorithm a)
{
    switch (a) {
    case Algorithm::druid_vl: return "druid-vl";
    case Algorithm::druid_newton: return "druid-newton";
    case Algorithm::druid_gd: return "druid-gd";
    case Algorithm::exact_admm: return "exact-admm";
    }
    return "?";
}

LoadProfile LoadProfile::parse(const std::string& text)
{
    LoadProfile p;
    const auto colon = text.find(':');
    auto ints = [&](const std::string& s) {
        std::vector<int> v;
        for (const auto& part : split(s, ',')) {
            const auto k = to_count("e-profile", part);
            if (k < 1)
                throw std::invalid_argument("e-profile: loads must be >= 1");
            v.push_back(int(k));
        }
        return v;
    };
    if (colon == std::string::npos) {
        p.kind = Kind::list;
        p.values = ints(text);
        if (p.values.empty())
            throw std::invalid_argument("e-profile: empty list");
        return p;
    }
    const std::string kind = trim(text.substr(0, colon));
    const auto args = ints(text.substr(colon + 1));
    if (kind == "equal" && args.size() == 1) {
        p.kind = Kind::equal;
        p.lo = p.hi = args[0];
    } else if ((kind == "uniform" || kind == "extreme") && args.size() == 2 && args[0] <= args[1]) {
        p.kind = kind == "uniform" ? Kind::uniform : Kind::extreme;
        p.lo = args[0];
        p.hi = args[1];
    } else {
        throw std::invalid_argument("e-profile: expected equal:k, uniform:lo,hi, extreme:lo,hi or a list, got '" + text + "'");
    }
    return p;
}

std::vector<int> LoadProfile::loads(std::size_t n, Rng& rng) const
{
    switch (kind) {
    case Kind::equal: return std::vector<int>(n, lo);
    case Kind::uniform: {
        std::uniform_int_distribution<int> pick(lo, hi);
        std::vector<int> out(n);
        for (auto& e : out)
            e = pick(rng);
        return out;
    }
    case Kind::extreme: {
        std::vector<int> out(n, hi);
        std::fill(out.begin(), out.begin() + std::ptrdiff_t(n / 2), lo);
        return out;
    }
    case Kind::list:
        if (values.size() != n)
            throw std::invalid_argument("e-profile: list has " + std::to_string(values.size()) + " entries for " +
                                        std::to_string(n) + " agents");
        return values;
    }
    return {};
}

std::string LoadProfile::describe() const
{
    switch (kind) {
    case Kind::equal: return "equal:" + std::to_string(lo);
    case Kind::uniform: return "uniform:" + std::to_string(lo) + "," + std::to_string(hi);
    case Kind::extreme: return "extreme:" + std::to_string(lo) + "," + std::to_string(hi);
    case Kind::list: {
        std::string s;
        for (std::size_t i = 0; i < values.size(); ++i)
            s += (i ? "," : "") + std::to_string(values[i]);
        return s;
    }
    }
    return {};
}

const std::vector<std::pair<std::string, std::string>>& documented_keys()
{
    static const std::vector<std::pair<std::string, std::string>> keys = {
        {"label", "name used in summary rows"},
        {"dataset", "LIBSVM file (empty: built-in synthetic data)"},
        {"dim", "feature dimension"},
        {"samples", "number of samples read or generated"},
        {"partition", "contiguous | shuffled"},
        {"agents", "number of agents n"},
        {"er-p", "Erdos-Renyi edge probability"},
        {"edges", "edge-list CSV (src,dst) used instead of a random graph"},
        {"seed", "master seed; run k uses seed + k"},
        {"rounds", "global rounds per run"},
        {"algorithm", "druid-vl | druid-newton | druid-gd | exact-admm"},
        {"e-profile", "equal:k | uniform:lo,hi | extreme:lo,hi | comma list"},
        {"p-min", "participation probability for all agents, or a comma list"},
        {"mu-z", "consensus penalty mu_z"},
        {"mu-theta", "regularizer penalty mu_theta"},
        {"gamma", "L1 weight"},
        {"ridge", "L2 weight delta inside each sample loss"},
        {"eps", "fixed proximal weight for every agent"},
        {"tune-eps", "ebar,Ebar,c,zeta: loads-dependent proximal weights"},
        {"bg", "gradient batch size"},
        {"bh", "Hessian batch size"},
        {"target", "relative error threshold for the summaries"},
        {"repeats", "number of seeded runs"},
        {"out-dir", "directory for run_<k>.csv and summary.csv"},
        {"loss-weight", "mean (1/n sum f_i) | sum (sum f_i)"},
        {"comm", "broadcast | per-edge communication accounting"},
        {"threads", "worker threads for the primal phase"},
        {"stop-at-target", "end a run once the target error is reached"},
        {"lyapunov", "record the Lyapunov distance to the fixed point"},
        {"wall-clock", "record per-round wall-clock milliseconds"},
        {"exact-tol", "inner gradient tolerance of exact-admm"},
        {"exact-max-inner", "inner iteration cap of exact-admm"},
        {"gd-step", "step of druid-gd (default 1 / local smoothness bound)"},
        {"xstar-tol", "optimality tolerance of the centralized reference solve"},
    };
    return keys;
}

void apply_setting(ExperimentConfig& cfg, const std::string& raw_key, const std::string& raw_value)
{
    const std::string key = canonical_key(raw_key);
    const std::string v = trim(raw_value);
    if (key == "label") cfg.label = v;
    else if (key == "dataset") cfg.dataset = v;
    else if (key == "dim") cfg.dim = to_count(key, v);
    else if (key == "samples") cfg.samples = to_count(key, v);
    else if (key == "partition") {
        if (v == "contiguous") cfg.partition = PartitionStrategy::contiguous;
        else if (v == "shuffled") cfg.partition = PartitionStrategy::shuffled;
        else throw std::invalid_argument("partition: expected contiguous or shuffled");
    }
    else if (key == "agents") cfg.agents = to_count(key, v);
    else if (key == "er-p") cfg.er_p = to_double(key, v);
    else if (key == "edges") cfg.edges = v;
    else if (key == "seed") cfg.seed = to_count(key, v);
    else if (key == "rounds") cfg.rounds = to_count(key, v);
    else if (key == "algorithm") cfg.algorithm = parse_algorithm(v);
    else if (key == "e-profile") cfg.e_profile = LoadProfile::parse(v);
    else if (key == "p-min") {
        cfg.participation.clear();
        for (const auto& part : split(v, ','))
            cfg.participation.push_back(to_double(key, part));
    }
    else if (key == "mu-z") cfg.mu_z = to_double(key, v);
    else if (key == "mu-theta") cfg.mu_theta = to_double(key, v);
    else if (key == "gamma") cfg.gamma = to_double(key, v);
    else if (key == "ridge") cfg.ridge = to_double(key, v);
    else if (key == "eps") {
        cfg.eps.tuned = false;
        cfg.eps.value = to_double(key, v);
    }
    else if (key == "tune-eps") {
        const auto parts = split(v, ',');
        if (parts.size() != 4)
            throw std::invalid_argument("tune-eps: expected ebar,Ebar,c,zeta");
        cfg.eps.tuned = true;
        cfg.eps.eps_bar = to_double(key, parts[0]);
        cfg.eps.load_bar = int(to_count(key, parts[1]));
        cfg.eps.c = to_double(key, parts[2]);
        cfg.eps.zeta = to_double(key, parts[3]);
    }
    else if (key == "bg") cfg.bg = to_count(key, v);
    else if (key == "bh") cfg.bh = to_count(key, v);
    else if (key == "target") cfg.target = to_double(key, v);
    else if (key == "repeats") cfg.repeats = to_count(key, v);
    else if (key == "out-dir") cfg.out_dir = v;
    else if (key == "loss-weight") {
        if (v == "mean") cfg.weighting = LossWeighting::mean_of_agents;
        else if (v == "sum") cfg.weighting = LossWeighting::sum_of_agents;
        else throw std::invalid_argument("loss-weight: expected mean or sum");
    }
    else if (key == "comm") {
        if (v == "broadcast") cfg.comm = CommAccounting::broadcast;
        else if (v == "per-edge") cfg.comm = CommAccounting::per_edge;
        else throw std::invalid_argument("comm: expected broadcast or per-edge");
    }
    else if (key == "threads") cfg.threads = to_count(key, v);
    else if (key == "stop-at-target") cfg.stop_at_target = to_bool(key, v);
    else if (key == "lyapunov") cfg.lyapunov = to_bool(key, v);
    else if (key == "wall-clock") cfg.wall_clock = to_bool(key, v);
    else if (key == "exact-tol") cfg.exact_tol = to_double(key, v);
    else if (key == "exact-max-inner") cfg.exact_max_inner = int(to_count(key, v));
    else if (key == "gd-step") cfg.gd_step = to_double(key, v);
    else if (key == "xstar-tol") cfg.xstar_tol = to_double(key, v);
    else throw std::invalid_argument("unknown configuration key '" + raw_key + "'");
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read config " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        try {
            apply_setting(base, line.substr(0, eq), line.substr(eq + 1));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return base;
}

std::vector<Sample> load_samples(const ExperimentConfig& cfg)
{
    if (!cfg.dataset.empty())
        return parse_libsvm(cfg.dataset, cfg.dim, cfg.samples);
    SyntheticSpec spec;
    spec.samples = cfg.samples;
    spec.dim = cfg.dim;
    spec.categories = std::min<std::size_t>(spec.categories, cfg.dim > 1 ? cfg.dim / 2 : 0);
    return synthesize_logistic_dataset(spec);
}

PreparedRun prepare_run(const ExperimentConfig& cfg, const std::vector<Sample>& samples, std::size_t run_index)
{
    const std::uint64_t seed = cfg.seed + run_index;
    const SeedStreams streams(seed);
    const std::size_t n = cfg.agents;

    auto graph_rng = streams.graph();
    Topology topo = cfg.edges.empty() ? generate_erdos_renyi(n, cfg.er_p, graph_rng) : read_edge_csv(cfg.edges, n);

    auto part_rng = SeedStreams(cfg.seed).partition();
    std::vector<AgentShard> shards = partition(samples, n, cfg.partition, &part_rng);

    HyperParams hp;
    hp.mu_z = cfg.mu_z;
    hp.mu_theta = cfg.mu_theta;
    hp.gamma = cfg.gamma;
    hp.ridge = cfg.ridge;
    hp.batch_g = cfg.bg;
    hp.batch_h = cfg.bh;
    hp.seed = seed;
    hp.rounds = cfg.rounds;
    hp.weighting = cfg.weighting;
    hp.comm = cfg.comm;
    hp.threads = cfg.threads;

    auto load_rng = streams.load_profile();
    hp.loads = cfg.algorithm == Algorithm::druid_vl ? cfg.e_profile.loads(n, load_rng) : std::vector<int>(n, 1);

    if (cfg.participation.size() == 1)
        hp.participation.assign(n, cfg.participation.front());
    else if (cfg.participation.size() == n)
        hp.participation = cfg.participation;
    else
        throw std::invalid_argument("p-min: need one value or one per agent");

    hp.eps = cfg.eps.tuned ? tune_epsilons(hp.loads, cfg.eps.eps_bar, cfg.eps.load_bar, cfg.eps.c, cfg.eps.zeta)
                           : std::vector<double>(n, cfg.eps.value);
    hp.validate(n);

    SolverKind kind = solver::DeterministicNewton{};
    switch (cfg.algorithm) {
    case Algorithm::druid_vl: kind = solver::StochasticNewton{cfg.bg, cfg.bh}; break;
    case Algorithm::druid_newton: kind = solver::DeterministicNewton{}; break;
    case Algorithm::exact_admm: kind = solver::Exact{cfg.exact_tol, cfg.exact_max_inner}; break;
    case Algorithm::druid_gd: {
        double step = 0.0;
        if (cfg.gd_step) {
            step = *cfg.gd_step;
        } else {
            // The logistic Hessian is largest at x = 0, where every sigmoid
            // weight equals its maximum 1/4.
            double bound = 0.0;
            const LossConfig loss{cfg.gamma, cfg.ridge};
            for (std::size_t i = 0; i < n; ++i) {
                const Eigen::MatrixXd h = logistic_loss(shards[i], {}, Eigen::VectorXd::Zero(Eigen::Index(shards[i].dim())), loss).hess;
                const double top = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
                const double shift = hp.mu_z * double(topo.degree(i)) + (i == hp.q ? hp.mu_theta : 0.0) + hp.eps[i];
                bound = std::max(bound, hp.loss_weight() * top + shift);
            }
            step = 1.0 / bound;
        }
        kind = solver::GradientDescent{step};
        break;
    }
    }
    return {std::move(topo), std::move(shards), std::move(hp), kind};
}

std::vector<RoundRecord> execute_run(const ExperimentConfig& cfg, const PreparedRun& run, const Eigen::VectorXd& x_star)
{
    Network net = init_run(run.topo, run.shards, run.hp);
    const Eigen::MatrixXd x0 = net.primal();
    const double n = double(net.size());

    std::optional<MatrixState> vstar;
    if (cfg.lyapunov)
        vstar = fixed_point(run.topo, run.shards, run.hp, x_star);

    std::vector<RoundRecord> traj;
    traj.reserve(cfg.rounds + 1);
    RoundRecord start;
    start.rel_err = relative_error(x0, x0, x_star);
    start.agent_flops.assign(net.size(), 0.0);
    if (vstar)
        start.lyapunov = lyapunov_norm(network_state(net), *vstar, run.hp);
    if (cfg.wall_clock)
        start.wall_ms = 0.0;
    traj.push_back(start);

    double comm_total = 0.0, flops_total = 0.0;
    for (std::size_t t = 1; t <= cfg.rounds; ++t) {
        const auto begin = std::chrono::steady_clock::now();
        RoundRecord rec = run_round(net, run.kind);
        const auto end = std::chrono::steady_clock::now();
        comm_total += rec.comm_vectors;
        flops_total += rec.flops;
        rec.flops = flops_total;
        rec.comm_cum_per_agent = comm_total / n;
        rec.rel_err = relative_error(net.primal(), x0, x_star);
        if (!std::isfinite(rec.rel_err))
            throw std::runtime_error("run diverged at round " + std::to_string(t));
        if (vstar)
            rec.lyapunov = lyapunov_norm(network_state(net), *vstar, run.hp);
        if (cfg.wall_clock)
            rec.wall_ms = std::chrono::duration<double, std::milli>(end - begin).count();
        traj.push_back(std::move(rec));
        if (cfg.stop_at_target && traj.back().rel_err <= cfg.target)
            break;
    }
    return traj;
}

Summary summarize(const std::string& label, const std::vector<std::vector<RoundRecord>>& runs, double target)
{
    Summary s;
    s.label = label;
    s.runs = runs.size();
    std::vector<double> rounds, comm, flops;
    for (const auto& traj : runs) {
        const auto hit = rounds_to_error(traj, target);
        if (!hit)
            continue;
        const auto& rec = *std::find_if(traj.begin(), traj.end(), [&](const RoundRecord& r) { return r.t == *hit; });
        rounds.push_back(double(*hit));
        comm.push_back(rec.comm_cum_per_agent);
        flops.push_back(rec.flops);
    }
    s.reached = rounds.size();
    s.rounds_mean = mean(rounds);
    s.rounds_std = stddev(rounds);
    s.comm_mean = mean(comm);
    s.comm_std = stddev(comm);
    s.flops_mean = mean(flops);
    s.flops_std = stddev(flops);
    return s;
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<Summary>& rows)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << kSummaryCsvHeader << '\n';
    for (const auto& s : rows)
        out << s.label << ',' << s.runs << ',' << s.reached << ',' << num(s.rounds_mean) << ',' << num(s.rounds_std)
            << ',' << num(s.comm_mean) << ',' << num(s.comm_std) << ',' << num(s.flops_mean) << ','
            << num(s.flops_std) << '\n';
}

ExperimentResult run_experiment(const ExperimentConfig& cfg)
{
    if (cfg.repeats == 0)
        throw std::invalid_argument("repeats must be at least 1");
    const auto samples = load_samples(cfg);
    ExperimentResult result;
    std::optional<std::filesystem::path> dir;
    if (!cfg.out_dir.empty()) {
        dir = cfg.out_dir;
        std::filesystem::create_directories(*dir);
    }
    for (std::size_t k = 0; k < cfg.repeats; ++k) {
        const PreparedRun run = prepare_run(cfg, samples, k);
        const Eigen::VectorXd x_star = minimiser_for(cfg, run.shards);
        if (k == 0)
            result.x_star = x_star;
        result.runs.push_back(execute_run(cfg, run, x_star));
        if (dir)
            write_round_csv(*dir / ("run_" + std::to_string(k) + ".csv"), result.runs.back());
    }
    std::string label = cfg.label;
    if (label.empty())
        label = cfg.algorithm == Algorithm::druid_vl ? "druid-vl/" + cfg.e_profile.describe() : to_string(cfg.algorithm);
    result.summary = summarize(label, result.runs, cfg.target);
    if (dir)
        write_summary_csv(*dir / "summary.csv", {result.summary});
    return result;
}

std::vector<Summary> compare_suite(const std::vector<ExperimentConfig>& cfgs,
                                   const std::optional<std::filesystem::path>& table_csv)
{
    if (cfgs.empty())
        throw std::invalid_argument("compare_suite: no configurations");
    for (const auto& c : cfgs) {
        if (c.target != cfgs.front().target)
            throw std::invalid_argument("compare_suite: configurations use different target errors");
        if (c.dataset != cfgs.front().dataset || c.dim != cfgs.front().dim || c.samples != cfgs.front().samples)
            throw std::invalid_argument("compare_suite: configurations use different datasets");
    }
    std::vector<Summary> rows;
    for (const auto& c : cfgs)
        rows.push_back(run_experiment(c).summary);
    if (table_csv)
        write_summary_csv(*table_csv, rows);
    return rows;
}

}  // namespace druid
