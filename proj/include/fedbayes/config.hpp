#ifndef FEDBAYES_CONFIG_HPP
#define FEDBAYES_CONFIG_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fedbayes/fedcore.hpp"

namespace fedbayes::expt {

// Experiment description. Serialized as a flat key=value file (schema=1);
// parse(save(cfg)) reproduces cfg exactly.
struct ExperimentConfig {
    int schema = 1;
    std::string run_id; // empty: derived from the master seed

    // dataset source
    std::string dataset = "synth"; // synth | idx | csv
    int synth_classes = 10;
    int synth_dim = 20;
    int synth_per_class = 600;
    double synth_spread = 0.35;
    std::string idx_images;
    std::string idx_labels;
    std::string csv_path;
    int csv_classes = 0;

    // corruption knobs
    double data_fraction = 1.0;
    std::string noise_mode = "feature_gauss"; // feature_gauss | label_flip
    double noise_eps = 0.0;

    // partitioning
    std::string partition = "dirichlet"; // dirichlet | step
    double dirichlet_alpha = 0.5;
    int step_major = 2;
    int step_major_per = 1960;
    int step_minor_per = 10;

    // federation
    int n_clients = 5;
    int rounds = 20;
    int local_epochs = 5;
    int t_temp = 1;
    int batch_size = 16;
    std::vector<double> lr_candidates{1e-4, 1e-3, 1e-2};
    std::string candidate_policy = "fixed"; // fixed | schedule
    double schedule_a = 0.1;
    bool meta_overlap = false;   // literal reading: temp training may see the meta shard
    bool weight_by_size = false; // size-weighted aggregation instead of the uniform mean

    // model
    std::vector<std::size_t> hidden{64, 32};
    double sigma_init = 0.05;
    double prior_mu0 = 0.0;
    double prior_sigma0 = 1.0;
    double kl_scale = 0.0; // <= 0: auto (1 / minibatches per epoch)
    int n_mc_train = 1;
    int n_mc_eval = 10;

    std::uint64_t master_seed = 42;
    std::vector<fed::RunMode> modes{fed::RunMode::parse("meta_bayfl"),
                                    fed::RunMode::parse("bayfl_fixed@0.01"),
                                    fed::RunMode::parse("fedavg_det@0.01")};
    std::string out; // output directory; empty writes nothing

    void validate() const;
    std::string resolved_run_id() const;

    // key=value form, keys in canonical order
    std::vector<std::pair<std::string, std::string>> to_kv() const;
    void set(const std::string& key, const std::string& value);
    static const std::vector<std::string>& known_keys();

    void save(std::ostream& os) const;
    static ExperimentConfig parse(std::istream& is);
    static ExperimentConfig load_file(const std::string& path);

    bool operator==(const ExperimentConfig&) const;
};

} // namespace fedbayes::expt

#endif
