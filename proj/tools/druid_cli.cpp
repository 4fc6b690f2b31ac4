#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "druid/experiment.hpp"
#include "druid/protocol.hpp"
#include "druid/rate.hpp"

namespace {

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Registers one string flag per configuration key; values are applied after
// any --config file so the command line always wins.
void add_config_flags(CLI::App& app, Overrides& overrides, std::vector<std::string>& configs)
{
    app.add_option("--config", configs, "key = value configuration file(s)")->check(CLI::ExistingFile);
    for (const auto& [key, help] : druid::documented_keys()) {
        const std::string k = key;
        app.add_option_function<std::string>(
            "--" + key, [&overrides, k](const std::string& v) { overrides.emplace_back(k, v); }, help);
    }
}

druid::ExperimentConfig build_config(const std::string& config_file, const Overrides& overrides)
{
    druid::ExperimentConfig cfg;
    if (!config_file.empty())
        cfg = druid::load_config(config_file, cfg);
    for (const auto& [k, v] : overrides)
        druid::apply_setting(cfg, k, v);
    return cfg;
}

void print_summary(const druid::Summary& s)
{
    if (s.reached == 0) {
        std::printf("%s: reached 0/%zu, target never met\n", s.label.c_str(), s.runs);
        return;
    }
    std::printf("%s: reached %zu/%zu, rounds %.3g +- %.3g, comm/agent %.3g +- %.3g, flops %.4g +- %.3g\n",
                s.label.c_str(), s.reached, s.runs, s.rounds_mean, s.rounds_std, s.comm_mean, s.comm_std, s.flops_mean,
                s.flops_std);
}

int print_rates(const druid::ExperimentConfig& cfg, double zeta, std::size_t samples)
{
    const auto data = druid::load_samples(cfg);
    const auto run = druid::prepare_run(cfg, data, 0);
    const auto net = druid::init_run(run.topo, run.shards, run.hp);
    auto rng = druid::SeedStreams(cfg.seed).make("rate-estimate", 0);
    const auto rc = druid::rate_constants_for(net, zeta, cfg.bh, samples, rng);
    std::printf("m_f %.6g  M_f %.6g  M %.6g  sigma+_min %.6g  sigma_Lu_max %.6g  max_degree %zu\n", rc.m_f, rc.M_f,
                druid::smoothness_constant(rc), rc.sigma_plus_min, rc.sigma_lu_max, rc.max_degree);
    std::vector<double> t;
    try {
        t = druid::taus(rc);
    } catch (const std::exception& e) {
        std::printf("tau: %s\n", e.what());
    }
    for (std::size_t i = 0; i < rc.c.size(); ++i)
        std::printf("agent %zu: E %d  c %.6g  xi %.6g  eps %.6g  tau %s  eps* %s\n", i, rc.E[i], rc.c[i], rc.xi[i],
                    rc.eps[i], t.empty() ? "-" : fmt(t[i]).c_str(),
                    t.empty() ? "-" : fmt(druid::epsilon_star(t[i], zeta)).c_str());
    for (const auto& w : druid::rate_warnings(rc))
        std::printf("warning: %s\n", w.c_str());
    try {
        const double eta = druid::eta(rc);
        std::printf("eta %.6g  contraction %.9g\n", eta, druid::contraction_factor(eta, run.hp.p_min()));
    } catch (const std::exception& e) {
        std::printf("%s\n", e.what());
        return 3;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Distributed stochastic-Newton ADMM with variable local loads"};
    app.require_subcommand(1);

    Overrides run_over, cmp_over, rate_over;
    std::vector<std::string> run_cfgs, cmp_cfgs, rate_cfgs;

    auto* run = app.add_subcommand("run", "run repeated seeded experiments and write per-round and summary CSVs");
    add_config_flags(*run, run_over, run_cfgs);

    auto* cmp = app.add_subcommand("compare", "run one experiment per --config file and write a comparison table");
    add_config_flags(*cmp, cmp_over, cmp_cfgs);
    std::string table;
    cmp->add_option("--table", table, "comparison table CSV (default <out-dir>/compare.csv)");

    auto* rates = app.add_subcommand("rates", "estimate the rate constants of run 0 and evaluate the linear rate");
    add_config_flags(*rates, rate_over, rate_cfgs);
    double zeta = 5e-3;
    std::size_t hess_samples = 20;
    rates->add_option("--zeta", zeta, "zeta of the rate analysis");
    rates->add_option("--hessian-samples", hess_samples, "sampled Hessians per agent for the curvature estimate");

    auto* gen = app.add_subcommand("gen-data", "write the built-in synthetic dataset in LIBSVM format");
    std::string gen_out;
    druid::SyntheticSpec spec;
    gen->add_option("--out", gen_out, "output file")->required();
    gen->add_option("--samples", spec.samples, "number of samples");
    gen->add_option("--dim", spec.dim, "feature dimension");
    gen->add_option("--seed", spec.seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (run->parsed()) {
            if (run_cfgs.size() > 1)
                throw std::invalid_argument("run takes at most one --config");
            const auto cfg = build_config(run_cfgs.empty() ? "" : run_cfgs.front(), run_over);
            print_summary(druid::run_experiment(cfg).summary);
        } else if (cmp->parsed()) {
            std::vector<druid::ExperimentConfig> cfgs;
            if (cmp_cfgs.empty())
                cfgs.push_back(build_config("", cmp_over));
            for (const auto& c : cmp_cfgs)
                cfgs.push_back(build_config(c, cmp_over));
            std::optional<std::filesystem::path> out;
            if (!table.empty())
                out = table;
            else if (!cfgs.front().out_dir.empty())
                out = std::filesystem::path(cfgs.front().out_dir) / "compare.csv";
            for (const auto& s : druid::compare_suite(cfgs, out))
                print_summary(s);
        } else if (rates->parsed()) {
            if (rate_cfgs.size() > 1)
                throw std::invalid_argument("rates takes at most one --config");
            return print_rates(build_config(rate_cfgs.empty() ? "" : rate_cfgs.front(), rate_over), zeta, hess_samples);
        } else if (gen->parsed()) {
            // Same one-hot width rule as the experiment loader.
            spec.categories = std::min(spec.categories, spec.dim / 2);
            druid::write_libsvm(druid::synthesize_logistic_dataset(spec), gen_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
