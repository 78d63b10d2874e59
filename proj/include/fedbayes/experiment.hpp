#ifndef FEDBAYES_EXPERIMENT_HPP
#define FEDBAYES_EXPERIMENT_HPP

#include <string>
#include <vector>

#include "fedbayes/config.hpp"
#include "fedbayes/fedcore.hpp"

namespace fedbayes::expt {

struct MetricsRow {
    std::string run;
    std::string mode;
    int round = 0;
    std::string scope;  // "global" or "client_<n>"
    std::string metric; // test_accuracy | test_loss | train_loss | selected_lr | meta_loss_<i>
    double value = 0.0;

    bool operator==(const MetricsRow&) const = default;
};

// accuracy = fraction of samples whose predictive argmax (first index on
// ties) equals the label; mean_loss = mean cross-entropy of the averaged
// predictive distribution.
fed::EvalResult evaluate(const bnn::VariationalNet& net, const data::Dataset& ds,
                         int n_mc);

// The federated population built from a config: shared data artifacts for
// every mode of a run.
struct Population {
    data::Dataset dataset; // after |D| subsampling and noise injection
    data::Partition partition;
    std::vector<fed::ClientState> clients;
    bnn::Prior prior;
};

Population build_population(const ExperimentConfig& cfg);

// Runs K rounds in every configured mode from shared seeds, evaluating the
// global net each round on the union of client test shards and per-client on
// each client's own test shard. If cfg.out is set, writes metrics.csv,
// config.snapshot, partition.manifest and plot/<mode>_<metric>.dat there.
std::vector<MetricsRow> run_experiment(const ExperimentConfig& cfg);

struct SweepCell {
    double fraction = 1.0;
    double epsilon = 0.0;
    std::vector<double> final_accuracy; // one per mode, config order
};

struct SweepResult {
    std::vector<std::string> mode_labels;
    std::vector<SweepCell> cells; // fractions outer, epsilons inner
};

// |D| x epsilon grid; each cell runs the full experiment with a cell-derived
// seed. If cfg.out is set, writes sweep.csv there.
SweepResult sweep(const ExperimentConfig& cfg, const std::vector<double>& fractions,
                  const std::vector<double>& eps_values);

// Fixed header `run,mode,round,scope,metric,value`, 17-significant-digit
// floats, LF line endings.
void emit_csv(const std::vector<MetricsRow>& rows, const std::string& path);
std::string csv_string(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> parse_csv(const std::string& text);

// Two-column (round, value) files per (mode, global metric) under dir.
void emit_plotdata(const std::vector<MetricsRow>& rows, const std::string& dir);

void emit_sweep_csv(const SweepResult& result, const std::string& path);

} // namespace fedbayes::expt

#endif
