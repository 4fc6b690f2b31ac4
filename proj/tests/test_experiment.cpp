#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "druid/experiment.hpp"
#include "druid/protocol.hpp"

using namespace druid;

namespace {

ExperimentConfig small_config()
{
    ExperimentConfig cfg;
    cfg.samples = 400;
    cfg.dim = 6;
    cfg.agents = 5;
    cfg.er_p = 0.5;
    cfg.rounds = 20;
    cfg.bg = cfg.bh = 20;
    cfg.mu_z = 0.01;
    cfg.mu_theta = 0.02;
    cfg.eps.value = 0.01;
    return cfg;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("load profiles")
{
    Rng rng(1);
    CHECK(LoadProfile::parse("equal:7").loads(4, rng) == std::vector<int>{7, 7, 7, 7});
    CHECK(LoadProfile::parse("extreme:1,19").loads(5, rng) == std::vector<int>{1, 1, 19, 19, 19});
    CHECK(LoadProfile::parse("3,1,4").loads(3, rng) == std::vector<int>{3, 1, 4});
    CHECK_THROWS(LoadProfile::parse("3,1,4").loads(4, rng));

    const LoadProfile u = LoadProfile::parse("uniform:1,19");
    double sum = 0.0;
    std::size_t count = 0;
    for (int r = 0; r < 2000; ++r)
        for (int e : u.loads(10, rng)) {
            CHECK(e >= 1);
            CHECK(e <= 19);
            sum += e;
            ++count;
        }
    // Mean 10, standard deviation of a single draw sqrt((19^2 - 1) / 12) = 5.48.
    CHECK(std::abs(sum / double(count) - 10.0) <= 4.0 * 5.48 / std::sqrt(double(count)));

    for (const char* text : {"equal:7", "uniform:1,19", "extreme:2,18", "3,1,4"})
        CHECK(LoadProfile::parse(LoadProfile::parse(text).describe()).describe() == text);
    for (const char* bad : {"equal:0", "uniform:5,1", "equal:1,2", "wild:3", "", "a,b"})
        CHECK_THROWS_AS(LoadProfile::parse(bad), std::invalid_argument);
}

TEST_CASE("algorithm names")
{
    for (auto a : {Algorithm::druid_vl, Algorithm::druid_newton, Algorithm::druid_gd, Algorithm::exact_admm})
        CHECK(parse_algorithm(to_string(a)) == a);
    CHECK_THROWS_AS(parse_algorithm("admm"), std::invalid_argument);
}

TEST_CASE("configuration keys")
{
    const std::map<std::string, std::string> sample = {
        {"label", "x"},          {"dataset", ""},           {"dim", "5"},
        {"samples", "100"},      {"partition", "contiguous"}, {"agents", "4"},
        {"er-p", "0.3"},         {"edges", ""},             {"seed", "9"},
        {"rounds", "12"},        {"algorithm", "exact-admm"}, {"e-profile", "uniform:1,19"},
        {"p-min", "0.4"},        {"mu-z", "1e-3"},          {"mu-theta", "2e-3"},
        {"gamma", "1e-5"},       {"ridge", "0.1"},          {"eps", "3e-4"},
        {"tune-eps", "1e-4,10,0.98,5e-3"}, {"bg", "10"},    {"bh", "11"},
        {"target", "0.05"},      {"repeats", "5"},          {"out-dir", "/tmp/x"},
        {"loss-weight", "sum"},  {"comm", "per-edge"},      {"threads", "2"},
        {"stop-at-target", "true"}, {"lyapunov", "1"},      {"wall-clock", "false"},
        {"exact-tol", "1e-7"},   {"exact-max-inner", "50"}, {"gd-step", "0.5"},
        {"xstar-tol", "1e-9"}};
    std::set<std::string> seen;
    for (const auto& [key, help] : documented_keys()) {
        CAPTURE(key);
        CHECK_FALSE(help.empty());
        CHECK(seen.insert(key).second);
        REQUIRE(sample.count(key) == 1);
        ExperimentConfig cfg;
        CHECK_NOTHROW(apply_setting(cfg, key, sample.at(key)));
    }
    CHECK(seen.size() == sample.size());

    ExperimentConfig cfg;
    apply_setting(cfg, "mu_z", "0.5");
    apply_setting(cfg, "mu-theta", "0.25");
    apply_setting(cfg, "tune_eps", "1e-4,10,0.98,5e-3");
    apply_setting(cfg, "p-min", "1,0.5,0.25");
    apply_setting(cfg, "algorithm", "druid-gd");
    apply_setting(cfg, "loss_weight", "sum");
    CHECK(cfg.mu_z == 0.5);
    CHECK(cfg.mu_theta == 0.25);
    CHECK(cfg.eps.tuned);
    CHECK(cfg.eps.load_bar == 10);
    CHECK(cfg.eps.zeta == 5e-3);
    CHECK(cfg.participation == std::vector<double>{1.0, 0.5, 0.25});
    CHECK(cfg.algorithm == Algorithm::druid_gd);
    CHECK(cfg.weighting == LossWeighting::sum_of_agents);

    CHECK_THROWS_AS(apply_setting(cfg, "nonsense", "1"), std::invalid_argument);
    CHECK_THROWS_AS(apply_setting(cfg, "rounds", "many"), std::invalid_argument);
    CHECK_THROWS_AS(apply_setting(cfg, "gamma", "1e-3x"), std::invalid_argument);
    CHECK_THROWS_AS(apply_setting(cfg, "partition", "random"), std::invalid_argument);
}

TEST_CASE("configuration files")
{
    const auto path = std::filesystem::temp_directory_path() / "druid_cfg_test.cfg";
    {
        std::ofstream out(path);
        out << "# comparison run\n"
               "algorithm = druid-newton   # trailing comment\n"
               "\n"
               "rounds=7\n"
               "  e_profile = extreme:1,19\n";
    }
    ExperimentConfig base;
    base.agents = 6;
    const ExperimentConfig cfg = load_config(path, base);
    CHECK(cfg.algorithm == Algorithm::druid_newton);
    CHECK(cfg.rounds == 7);
    CHECK(cfg.e_profile.describe() == "extreme:1,19");
    CHECK(cfg.agents == 6);

    {
        std::ofstream out(path);
        out << "rounds 7\n";
    }
    CHECK_THROWS(load_config(path));
    std::filesystem::remove(path);
    CHECK_THROWS(load_config(path));
}

TEST_CASE("run preparation")
{
    ExperimentConfig cfg = small_config();
    cfg.e_profile = LoadProfile::parse("uniform:1,19");
    cfg.eps.tuned = true;
    cfg.participation = {0.6};
    const auto samples = load_samples(cfg);
    const PreparedRun a = prepare_run(cfg, samples, 0);
    const PreparedRun b = prepare_run(cfg, samples, 1);
    CHECK(a.shards.size() == 5);
    CHECK(a.hp.seed == cfg.seed);
    CHECK(b.hp.seed == cfg.seed + 1);
    CHECK(a.hp.participation == std::vector<double>(5, 0.6));
    // The partition is fixed by the master seed; graphs and loads vary per run.
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(a.shards[i].source_rows == b.shards[i].source_rows);
    CHECK(a.hp.eps == tune_epsilons(a.hp.loads, 1e-4, 10, 0.98, 5e-3));
    CHECK(std::holds_alternative<solver::StochasticNewton>(a.kind));

    cfg.algorithm = Algorithm::druid_newton;
    const PreparedRun n = prepare_run(cfg, samples, 0);
    CHECK(n.hp.loads == std::vector<int>(5, 1));
    CHECK(std::holds_alternative<solver::DeterministicNewton>(n.kind));

    cfg.participation = {0.5, 0.5};
    CHECK_THROWS(prepare_run(cfg, samples, 0));
}

TEST_CASE("single full-batch step matches deterministic Newton")
{
    ExperimentConfig vl = small_config();
    vl.e_profile = LoadProfile::parse("equal:1");
    vl.bg = vl.bh = 80;  // the whole shard
    ExperimentConfig newton = vl;
    newton.algorithm = Algorithm::druid_newton;
    const auto a = run_experiment(vl).runs[0];
    const auto b = run_experiment(newton).runs[0];
    REQUIRE(a.size() == b.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
        CHECK(a[t].rel_err == b[t].rel_err);
        CHECK(a[t].flops == b[t].flops);
    }
}

TEST_CASE("repeated experiments reproduce their files byte for byte")
{
    const auto root = std::filesystem::temp_directory_path() / "druid_repro_test";
    std::filesystem::remove_all(root);
    ExperimentConfig cfg = small_config();
    cfg.repeats = 3;
    cfg.participation = {0.7};
    cfg.e_profile = LoadProfile::parse("uniform:1,5");
    cfg.threads = 3;
    cfg.out_dir = (root / "a").string();
    const auto ra = run_experiment(cfg);
    cfg.out_dir = (root / "b").string();
    cfg.threads = 1;
    const auto rb = run_experiment(cfg);
    for (const char* f : {"run_0.csv", "run_1.csv", "run_2.csv", "summary.csv"}) {
        CAPTURE(f);
        const std::string x = slurp(root / "a" / f);
        CHECK_FALSE(x.empty());
        CHECK(x == slurp(root / "b" / f));
    }
    CHECK(slurp(root / "a" / "run_0.csv") != slurp(root / "a" / "run_1.csv"));
    CHECK(ra.summary.runs == 3);
    std::filesystem::remove_all(root);
}

TEST_CASE("summary statistics")
{
    auto traj = [](std::vector<double> errs, double comm_step) {
        std::vector<RoundRecord> out;
        for (std::size_t t = 0; t < errs.size(); ++t) {
            RoundRecord r;
            r.t = t;
            r.rel_err = errs[t];
            r.comm_cum_per_agent = comm_step * double(t);
            r.flops = 100.0 * double(t);
            out.push_back(r);
        }
        return out;
    };
    const Summary s = summarize("demo", {traj({1, 0.1, 0.005}, 1.0), traj({1, 0.5, 0.1, 0.001}, 0.5),
                                         traj({1, 0.5}, 1.0)},
                                0.01);
    CHECK(s.runs == 3);
    CHECK(s.reached == 2);
    CHECK(s.rounds_mean == 2.5);
    CHECK(s.rounds_std == doctest::Approx(std::sqrt(0.5)));
    CHECK(s.comm_mean == 1.75);
    CHECK(s.flops_mean == 250.0);
}

TEST_CASE("comparison suite")
{
    ExperimentConfig a = small_config();
    a.label = "vl";
    a.e_profile = LoadProfile::parse("equal:3");
    ExperimentConfig b = small_config();
    b.label = "newton";
    b.algorithm = Algorithm::druid_newton;
    ExperimentConfig c = small_config();
    c.label = "exact";
    c.algorithm = Algorithm::exact_admm;

    const auto table = std::filesystem::temp_directory_path() / "druid_compare_test.csv";
    const auto rows = compare_suite({a, b, c}, table);
    CHECK(rows.size() == 3);
    std::ifstream in(table);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line))
        lines.push_back(line);
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == kSummaryCsvHeader);
    CHECK(lines[1].rfind("vl,1,", 0) == 0);
    CHECK(lines[3].rfind("exact,1,", 0) == 0);
    std::filesystem::remove(table);

    ExperimentConfig d = b;
    d.target = 1e-3;
    CHECK_THROWS_AS(compare_suite({a, d}, std::nullopt), std::invalid_argument);
    ExperimentConfig e = b;
    e.samples = 300;
    CHECK_THROWS_AS(compare_suite({a, e}, std::nullopt), std::invalid_argument);
}
