#include "fedbayes/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include <CLI11.hpp>

#include "fedbayes/errors.hpp"
#include "fedbayes/experiment.hpp"
#include "fedbayes/verify.hpp"
#include "fedbayes/version.hpp"

namespace fedbayes::cli {

namespace fs = std::filesystem;

namespace {

struct ConfigCli {
    std::string config_path;
    std::map<std::string, std::string> overrides; // values for known config keys
    std::map<std::string, CLI::Option*> opts;
};

// Every ExperimentConfig key becomes a --key <value> override, applied after
// the config file is parsed and before validation.
void attach_config_options(CLI::App* cmd, ConfigCli& cc) {
    cmd->add_option("--config", cc.config_path, "experiment config file (key=value)");
    for (const auto& key : expt::ExperimentConfig::known_keys()) {
        cc.opts[key] = cmd->add_option("--" + key, cc.overrides[key],
                                       "override config key '" + key + "'");
    }
}

expt::ExperimentConfig resolve_config(const ConfigCli& cc) {
    expt::ExperimentConfig cfg;
    if (!cc.config_path.empty()) cfg = expt::ExperimentConfig::load_file(cc.config_path);
    for (const auto& key : expt::ExperimentConfig::known_keys()) {
        const auto it = cc.opts.find(key);
        if (it != cc.opts.end() && it->second->count() > 0)
            cfg.set(key, cc.overrides.at(key));
    }
    cfg.validate();
    return cfg;
}

void write_incomplete_sentinel(const std::string& out_dir, const std::string& why) {
    if (out_dir.empty()) return;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::ofstream os(fs::path(out_dir) / "INCOMPLETE", std::ios::binary);
    os << "INCOMPLETE\n" << why << "\n";
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto pos = text.find(',', start);
        const std::string tok =
            text.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ArgumentError(std::string(what) + ": bad number '" + tok + "'");
        }
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

int cmd_run(const ConfigCli& cc) {
    expt::ExperimentConfig cfg = resolve_config(cc);
    try {
        const auto rows = expt::run_experiment(cfg);
        double final_acc = 0.0;
        for (const auto& r : rows)
            if (r.scope == "global" && r.metric == "test_accuracy" && r.round == cfg.rounds)
                final_acc = r.value;
        std::printf("run %s: %zu metric rows", cfg.resolved_run_id().c_str(), rows.size());
        if (!cfg.out.empty()) std::printf(", written to %s", cfg.out.c_str());
        std::printf(" (last-mode final accuracy %.4f)\n", final_acc);
        return 0;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        write_incomplete_sentinel(cfg.out, e.what());
        return 2;
    }
}

int cmd_sweep(const ConfigCli& cc, const std::string& fractions_text,
              const std::string& eps_text) {
    expt::ExperimentConfig cfg = resolve_config(cc);
    const auto fractions = parse_double_list(fractions_text, "--fractions");
    const auto eps_values = parse_double_list(eps_text, "--eps");
    try {
        const auto result = expt::sweep(cfg, fractions, eps_values);
        std::printf("sweep: %zu cells x %zu modes", result.cells.size(),
                    result.mode_labels.size());
        if (!cfg.out.empty()) std::printf(", written to %s/sweep.csv", cfg.out.c_str());
        std::printf("\n");
        for (const auto& cell : result.cells) {
            std::printf("|D|=%g eps=%g:", cell.fraction, cell.epsilon);
            for (std::size_t m = 0; m < result.mode_labels.size(); ++m)
                std::printf(" %s=%.4f", result.mode_labels[m].c_str(),
                            cell.final_accuracy[m]);
            std::printf("\n");
        }
        return 0;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        write_incomplete_sentinel(cfg.out, e.what());
        return 2;
    }
}

int cmd_partition(const ConfigCli& cc) {
    expt::ExperimentConfig cfg = resolve_config(cc);
    const auto pop = expt::build_population(cfg);
    const std::string dir = cfg.out.empty() ? "." : cfg.out;
    fs::create_directories(dir);
    const std::string path = (fs::path(dir) / "partition.manifest").string();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    data::write_manifest(pop.partition, os);

    const auto hist = data::class_histogram(pop.dataset, pop.partition);
    std::printf("%s\n", pop.partition.params.c_str());
    std::printf("client");
    for (int c = 0; c < pop.dataset.n_classes; ++c) std::printf(",class_%d", c);
    std::printf(",total\n");
    for (std::size_t n = 0; n < hist.size(); ++n) {
        std::size_t total = 0;
        std::printf("%zu", n);
        for (std::size_t c = 0; c < hist[n].size(); ++c) {
            std::printf(",%zu", hist[n][c]);
            total += hist[n][c];
        }
        std::printf(",%zu\n", total);
    }
    std::printf("manifest written to %s\n", path.c_str());
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, int nets) {
    const auto report = verify::gradient_check(seed, nets);
    const bool pass = report.max_rel_error <= 1e-4;
    std::printf("gradcheck: max relative error %.3e over %d coordinates "
                "(%d nets, tolerance 1e-4): %s\n",
                report.max_rel_error, report.n_coords, nets, pass ? "PASS" : "FAIL");
    return pass ? 0 : 1;
}

int cmd_klcheck(std::uint64_t seed, int cases) {
    const auto report = verify::kl_check(seed, cases);
    const bool pass = report.max_abs_error <= 1e-6;
    std::printf("klcheck: max absolute error %.3e over %d cases "
                "(tolerance 1e-6): %s\n",
                report.max_abs_error, report.n_cases, pass ? "PASS" : "FAIL");
    return pass ? 0 : 1;
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"fedbayes: deterministic personalized probabilistic FL simulator"};
    app.require_subcommand(1);

    auto* version_cmd = app.add_subcommand("version", "print the semantic version");

    ConfigCli run_cc;
    auto* run_cmd = app.add_subcommand("run", "run the configured experiment");
    attach_config_options(run_cmd, run_cc);

    ConfigCli sweep_cc;
    std::string fractions_text = "1,0.5,0.25,0.1";
    std::string eps_text = "0,0.0001,0.001,0.01,0.1";
    auto* sweep_cmd = app.add_subcommand("sweep", "run the |D| x epsilon grid");
    attach_config_options(sweep_cmd, sweep_cc);
    sweep_cmd->add_option("--fractions", fractions_text, "comma-separated |D| fractions");
    sweep_cmd->add_option("--eps", eps_text, "comma-separated noise levels");

    ConfigCli part_cc;
    auto* part_cmd =
        app.add_subcommand("partition", "write the partition manifest and histogram");
    attach_config_options(part_cmd, part_cc);

    std::uint64_t check_seed = 7;
    int gradcheck_nets = 10;
    int klcheck_cases = 20;
    auto* grad_cmd =
        app.add_subcommand("gradcheck", "finite-difference check of the analytic gradients");
    grad_cmd->add_option("--seed", check_seed, "check seed");
    grad_cmd->add_option("--nets", gradcheck_nets, "number of random nets");
    auto* kl_cmd =
        app.add_subcommand("klcheck", "numeric-integration check of the closed-form KL");
    kl_cmd->add_option("--seed", check_seed, "check seed");
    kl_cmd->add_option("--cases", klcheck_cases, "number of random cases");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (version_cmd->parsed()) {
            std::printf("fedbayes %s\n", FEDBAYES_VERSION);
            return 0;
        }
        if (run_cmd->parsed()) return cmd_run(run_cc);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_cc, fractions_text, eps_text);
        if (part_cmd->parsed()) return cmd_partition(part_cc);
        if (grad_cmd->parsed()) return cmd_gradcheck(check_seed, gradcheck_nets);
        if (kl_cmd->parsed()) return cmd_klcheck(check_seed, klcheck_cases);
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args);
}

} // namespace fedbayes::cli
