#include "fedbayes/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedbayes/errors.hpp"
#include "fedbayes/serialize.hpp"

namespace fedbayes::expt {

namespace fs = std::filesystem;
using num::Rng;
using num::SeedPath;

namespace {

std::string fmt_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') out += c;
        else if (c == '.') out += 'p';
        else out += '_';
    }
    return out;
}

data::Dataset build_base_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset == "synth")
        return data::synth_blobs(cfg.synth_classes, cfg.synth_dim, cfg.synth_per_class,
                                 cfg.synth_spread, cfg.master_seed);
    if (cfg.dataset == "idx") return data::load_idx(cfg.idx_images, cfg.idx_labels);
    return data::load_csv(cfg.csv_path, cfg.csv_classes);
}

data::NoiseMode noise_mode_of(const ExperimentConfig& cfg) {
    return cfg.noise_mode == "label_flip" ? data::NoiseMode::label_flip
                                          : data::NoiseMode::feature_gauss;
}

data::Dataset concat(const data::Dataset& a, const data::Dataset& b,
                     const std::string& name) {
    data::Dataset out = a;
    out.name = name;
    out.features.insert(out.features.end(), b.features.begin(), b.features.end());
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    return out;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os << text;
    if (!os) throw IoError("failed writing '" + path + "'");
}

} // namespace

fed::EvalResult evaluate(const bnn::VariationalNet& net, const data::Dataset& ds,
                         int n_mc) {
    return fed::evaluate_model(net, ds, n_mc);
}

Population build_population(const ExperimentConfig& cfg) {
    cfg.validate();
    Population pop;
    pop.prior = bnn::Prior{cfg.prior_mu0, cfg.prior_sigma0};

    data::Dataset ds = build_base_dataset(cfg);
    if (cfg.data_fraction < 1.0) ds = data::subsample(ds, cfg.data_fraction, cfg.master_seed);
    if (cfg.noise_eps > 0.0)
        ds = data::inject_noise(ds, cfg.noise_eps, noise_mode_of(cfg), cfg.master_seed);
    pop.dataset = std::move(ds);

    if (cfg.n_clients == 1) {
        pop.partition.scheme = data::PartitionScheme::dirichlet;
        pop.partition.params = "scheme=single n_clients=1";
        pop.partition.assignments.resize(1);
        pop.partition.assignments[0].resize(pop.dataset.size());
        for (std::size_t i = 0; i < pop.dataset.size(); ++i)
            pop.partition.assignments[0][i] = i;
    } else if (cfg.partition == "dirichlet") {
        pop.partition = data::partition_dirichlet(pop.dataset, cfg.n_clients,
                                                  cfg.dirichlet_alpha, cfg.master_seed);
    } else {
        pop.partition =
            data::partition_step(pop.dataset, cfg.n_clients, cfg.step_major,
                                 cfg.step_major_per, cfg.step_minor_per, cfg.master_seed);
    }

    for (int n = 0; n < cfg.n_clients; ++n) {
        fed::ClientState client;
        client.id = n;
        const auto& idx = pop.partition.assignments[static_cast<std::size_t>(n)];
        data::Dataset client_ds =
            pop.dataset.select(idx, "client_" + std::to_string(n));
        const std::uint64_t shard_seed =
            Rng(SeedPath(cfg.master_seed,
                         {num::purpose::shards, static_cast<std::uint64_t>(n)}))
                .next_u64();
        client.shards = data::make_shards(client_ds, shard_seed);
        if (cfg.meta_overlap) {
            // literal protocol reading: the candidate-scoring shard stays inside
            // the training data
            client.shards.train = concat(client.shards.train, client.shards.meta,
                                         client.shards.train.name + "+meta");
        }
        client.lr_candidates = cfg.lr_candidates;
        client.t_temp = cfg.t_temp;
        client.local_epochs = cfg.local_epochs;
        client.batch_size = cfg.batch_size;
        client.kl_scale = cfg.kl_scale;
        client.n_mc_train = cfg.n_mc_train;
        client.n_mc_eval = cfg.n_mc_eval;
        client.seed_root = SeedPath(cfg.master_seed);
        pop.clients.push_back(std::move(client));
    }
    return pop;
}

std::vector<MetricsRow> run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    Population pop = build_population(cfg);
    const std::string run = cfg.resolved_run_id();

    std::vector<std::size_t> dims;
    dims.push_back(pop.dataset.dim());
    for (std::size_t h : cfg.hidden) dims.push_back(h);
    dims.push_back(static_cast<std::size_t>(pop.dataset.n_classes));

    std::vector<MetricsRow> rows;
    for (const fed::RunMode& mode : cfg.modes) {
        const std::string label = mode.label();
        Rng init_rng(SeedPath(cfg.master_seed, {num::purpose::init}));
        fed::GlobalModel global;
        global.net = bnn::VariationalNet::mlp(
            dims, mode.deterministic() ? bnn::Mode::deterministic : bnn::Mode::bayesian,
            init_rng, cfg.sigma_init);
        global.round = 0;

        std::vector<fed::ClientState> clients = pop.clients;
        for (int k = 1; k <= cfg.rounds; ++k) {
            if (cfg.candidate_policy == "schedule") {
                const auto candidates =
                    fed::schedule_candidates(cfg.schedule_a, k, cfg.rounds);
                for (auto& c : clients) c.lr_candidates = candidates;
            }
            fed::RoundReport report;
            try {
                auto [next_global, round_report] = fed::run_round(
                    global, clients, pop.prior, mode, 0,
                    cfg.weight_by_size ? fed::Weighting::by_train_size
                                       : fed::Weighting::uniform);
                global = std::move(next_global);
                report = std::move(round_report);
            } catch (const DivergenceError& e) {
                throw DivergenceError("mode " + label + ": " + e.what(), e.client_id,
                                      e.round, e.epoch);
            }

            rows.push_back({run, label, k, "global", "test_accuracy",
                            report.global_test_accuracy});
            rows.push_back({run, label, k, "global", "test_loss",
                            report.global_test_loss});
            for (const auto& rec : report.clients) {
                const std::string scope = "client_" + std::to_string(rec.client_id);
                rows.push_back({run, label, k, scope, "test_accuracy", rec.test_accuracy});
                rows.push_back({run, label, k, scope, "test_loss", rec.test_loss});
                rows.push_back({run, label, k, scope, "train_loss", rec.train_loss});
                rows.push_back({run, label, k, scope, "selected_lr", rec.selected_lr});
                for (std::size_t i = 0; i < rec.meta_losses.size(); ++i)
                    rows.push_back({run, label, k, scope,
                                    "meta_loss_" + std::to_string(i),
                                    rec.meta_losses[i]});
            }
        }
    }

    if (!cfg.out.empty()) {
        fs::create_directories(cfg.out);
        emit_csv(rows, (fs::path(cfg.out) / "metrics.csv").string());
        std::ostringstream snap;
        cfg.save(snap);
        write_text_file((fs::path(cfg.out) / "config.snapshot").string(), snap.str());
        write_text_file((fs::path(cfg.out) / "partition.manifest").string(),
                        data::manifest_string(pop.partition));
        emit_plotdata(rows, (fs::path(cfg.out) / "plot").string());
    }
    return rows;
}

SweepResult sweep(const ExperimentConfig& cfg, const std::vector<double>& fractions,
                  const std::vector<double>& eps_values) {
    cfg.validate();
    if (fractions.empty() || eps_values.empty())
        throw ArgumentError("sweep: grid must not be empty");
    SweepResult result;
    for (const auto& m : cfg.modes) result.mode_labels.push_back(m.label());

    for (std::size_t i = 0; i < fractions.size(); ++i) {
        for (std::size_t j = 0; j < eps_values.size(); ++j) {
            // cells share the run's master seed so comparisons are paired and
            // the single-cell sweep reproduces the plain run exactly
            ExperimentConfig cell_cfg = cfg;
            cell_cfg.data_fraction = fractions[i];
            cell_cfg.noise_eps = eps_values[j];
            cell_cfg.out.clear();
            const auto rows = run_experiment(cell_cfg);

            SweepCell cell;
            cell.fraction = fractions[i];
            cell.epsilon = eps_values[j];
            for (const auto& label : result.mode_labels) {
                double acc = 0.0;
                for (const auto& row : rows)
                    if (row.mode == label && row.round == cfg.rounds &&
                        row.scope == "global" && row.metric == "test_accuracy")
                        acc = row.value;
                cell.final_accuracy.push_back(acc);
            }
            result.cells.push_back(std::move(cell));
        }
    }

    if (!cfg.out.empty()) {
        fs::create_directories(cfg.out);
        emit_sweep_csv(result, (fs::path(cfg.out) / "sweep.csv").string());
    }
    return result;
}

std::string csv_string(const std::vector<MetricsRow>& rows) {
    std::string out = "run,mode,round,scope,metric,value\n";
    for (const auto& r : rows) {
        out += r.run;
        out += ',';
        out += r.mode;
        out += ',';
        out += std::to_string(r.round);
        out += ',';
        out += r.scope;
        out += ',';
        out += r.metric;
        out += ',';
        out += fmt_value(r.value);
        out += '\n';
    }
    return out;
}

void emit_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    write_text_file(path, csv_string(rows));
}

std::vector<MetricsRow> parse_csv(const std::string& text) {
    std::vector<MetricsRow> rows;
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != "run,mode,round,scope,metric,value")
        throw ParseError("metrics CSV: bad header");
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::size_t start = 0;
        for (int i = 0; i < 5; ++i) {
            const auto pos = line.find(',', start);
            if (pos == std::string::npos)
                throw ParseError("metrics CSV line " + std::to_string(line_no) +
                                 ": expected 6 fields");
            f.push_back(line.substr(start, pos - start));
            start = pos + 1;
        }
        f.push_back(line.substr(start));
        MetricsRow r;
        r.run = f[0];
        r.mode = f[1];
        r.round = std::stoi(f[2]);
        r.scope = f[3];
        r.metric = f[4];
        r.value = std::stod(f[5]);
        rows.push_back(std::move(r));
    }
    return rows;
}

void emit_plotdata(const std::vector<MetricsRow>& rows, const std::string& dir) {
    fs::create_directories(dir);
    // (mode, metric) -> lines, global scope only
    std::vector<std::pair<std::string, std::string>> files; // (filename, content)
    for (const auto& r : rows) {
        if (r.scope != "global") continue;
        const std::string fname = sanitize(r.mode) + "_" + sanitize(r.metric) + ".dat";
        auto it = std::find_if(files.begin(), files.end(),
                               [&](const auto& p) { return p.first == fname; });
        if (it == files.end()) {
            files.emplace_back(fname, "");
            it = files.end() - 1;
        }
        it->second += std::to_string(r.round) + " " + fmt_value(r.value) + "\n";
    }
    for (const auto& [fname, content] : files)
        write_text_file((fs::path(dir) / fname).string(), content);
}

void emit_sweep_csv(const SweepResult& result, const std::string& path) {
    std::string out = "fraction,epsilon";
    for (const auto& label : result.mode_labels) out += "," + label;
    out += "\n";
    for (const auto& cell : result.cells) {
        out += fmt_value(cell.fraction);
        out += ',';
        out += fmt_value(cell.epsilon);
        for (double acc : cell.final_accuracy) {
            out += ',';
            out += fmt_value(acc);
        }
        out += '\n';
    }
    write_text_file(path, out);
}

} // namespace fedbayes::expt
