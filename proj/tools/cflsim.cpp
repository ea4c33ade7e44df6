#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cflsim/config.hpp"
#include "cflsim/engine.hpp"
#include "cflsim/errors.hpp"
#include "cflsim/theory.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;
constexpr int kTheoryFailure = 3;

void print_result(const cflsim::RunResult& r) {
    std::printf("seed %llu: %ld rounds, final accuracy %.4f, K=%d -> %s\n",
                static_cast<unsigned long long>(r.seed), r.rounds, r.final_accuracy,
                r.final_k, r.run_dir.c_str());
    for (const auto& [target, t] : r.tta_s) {
        if (t)
            std::printf("  time to %.0f%% accuracy: %.1f s\n", 100.0 * target, *t);
        else
            std::printf("  time to %.0f%% accuracy: not reached\n", 100.0 * target);
    }
}

cflsim::theory::SuiteOptions load_suite_options(const std::string& path) {
    cflsim::theory::SuiteOptions opts;
    if (path.empty()) return opts;
    std::ifstream in(path);
    if (!in) throw cflsim::InputError("cannot open params file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw cflsim::InputError("bad params file " + path + ": " + e.what());
    }
    static const std::set<std::string> top_keys = {"seed", "sgd_trials", "trajectory_trials",
                                                   "sgd_sigma_sq", "trajectory"};
    static const std::set<std::string> traj_keys = {
        "num_groups", "clients_per_group", "dim",      "eta",     "sigma_sq",
        "drift_l1",   "t_events",          "r_rounds", "m_total", "tolerance"};
    for (const auto& item : j.items())
        if (!top_keys.count(item.key()))
            throw cflsim::InputError("params file " + path + ": unknown key " + item.key());
    opts.seed = j.value("seed", opts.seed);
    opts.sgd_trials = j.value("sgd_trials", opts.sgd_trials);
    opts.trajectory_trials = j.value("trajectory_trials", opts.trajectory_trials);
    opts.sgd_sigma_sq = j.value("sgd_sigma_sq", opts.sgd_sigma_sq);
    if (opts.sgd_trials < 1 || opts.trajectory_trials < 1)
        throw cflsim::InputError("params file " + path + ": trial counts must be >= 1");
    if (opts.sgd_sigma_sq < 0.0)
        throw cflsim::InputError("params file " + path + ": sgd_sigma_sq must be >= 0");
    if (j.contains("trajectory")) {
        const nlohmann::json& t = j["trajectory"];
        for (const auto& item : t.items())
            if (!traj_keys.count(item.key()))
                throw cflsim::InputError("params file " + path +
                                         ": unknown trajectory key " + item.key());
        cflsim::theory::TrajectoryConfig& c = opts.trajectory;
        c.num_groups = t.value("num_groups", c.num_groups);
        c.clients_per_group = t.value("clients_per_group", c.clients_per_group);
        c.dim = t.value("dim", c.dim);
        c.eta = t.value("eta", c.eta);
        c.sigma_sq = t.value("sigma_sq", c.sigma_sq);
        c.drift_l1 = t.value("drift_l1", c.drift_l1);
        c.t_events = t.value("t_events", c.t_events);
        c.r_rounds = t.value("r_rounds", c.r_rounds);
        c.m_total = t.value("m_total", c.m_total);
        c.tolerance = t.value("tolerance", c.tolerance);
    }
    opts.trajectory.trials = opts.trajectory_trials;
    return opts;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic trace-driven simulator of clustered federated learning under data drift"};
    app.require_subcommand(1);

    std::string config_path;
    std::string axis;
    std::string run_dir;
    std::string params_path;
    std::string theory_out;

    CLI::App* run = app.add_subcommand("run", "Run every seed of a config");
    run->add_option("config", config_path, "Experiment config (TOML)")->required();

    CLI::App* ablate = app.add_subcommand("ablate", "Sweep one config axis");
    ablate->add_option("config", config_path, "Experiment config (TOML)")->required();
    ablate->add_option("--axis", axis,
                       "tau_grid | policy_modes | representation | metric | "
                       "malicious_fraction | shared_level")
        ->required();

    CLI::App* verify = app.add_subcommand("verify-theory", "Run the convergence bound checks");
    verify->add_option("--params", params_path, "JSON file of suite options");
    verify->add_option("--out", theory_out, "Also write the JSON report to this file");

    CLI::App* resume = app.add_subcommand("resume", "Continue a run from its last checkpoint");
    resume->add_option("run-dir", run_dir, "Run directory")->required();

    CLI::App* report = app.add_subcommand("report", "Print a run's accuracy/heterogeneity CSV");
    report->add_option("run-dir", run_dir, "Run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kValidation;
    }

    try {
        if (run->parsed()) {
            const cflsim::ExperimentConfig cfg = cflsim::parse_config_file(config_path);
            for (const cflsim::RunResult& r : cflsim::run_experiment(cfg)) print_result(r);
            return kOk;
        }
        if (ablate->parsed()) {
            const cflsim::ExperimentConfig cfg = cflsim::parse_config_file(config_path);
            const auto cells = cflsim::run_ablation(cfg, axis);
            int failed = 0;
            for (const cflsim::AblationCell& c : cells) {
                if (c.ok) {
                    std::printf("%s=%s seed %llu: final accuracy %.4f\n", c.axis.c_str(),
                                c.value.c_str(), static_cast<unsigned long long>(c.seed),
                                c.result.final_accuracy);
                } else {
                    ++failed;
                    std::printf("%s=%s seed %llu: FAILED (%s)\n", c.axis.c_str(),
                                c.value.c_str(), static_cast<unsigned long long>(c.seed),
                                c.error.c_str());
                }
            }
            std::printf("%zu cells, %d failed; table in %s\n", cells.size(), failed,
                        (cflsim::output_root() + "/" + cfg.run.name + "-ablate-" + axis +
                         "/ablation.csv")
                            .c_str());
            return kOk;
        }
        if (verify->parsed()) {
            const cflsim::theory::SuiteOptions opts = load_suite_options(params_path);
            const auto results = cflsim::theory::run_suite(opts);
            const std::string report_text = cflsim::theory::report_json(results);
            std::cout << report_text;
            if (!theory_out.empty()) {
                std::ofstream out(theory_out, std::ios::trunc);
                if (!out) throw std::runtime_error("cannot write " + theory_out);
                out << report_text;
            }
            for (const auto& r : results)
                if (!r.pass) return kTheoryFailure;
            return kOk;
        }
        if (resume->parsed()) {
            print_result(cflsim::resume_run(run_dir));
            return kOk;
        }
        if (report->parsed()) {
            cflsim::write_report(run_dir, std::cout);
            return kOk;
        }
    } catch (const cflsim::InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kRuntime;
    }
    return kValidation;
}
