#ifndef FEDBAYES_FEDCORE_HPP
#define FEDBAYES_FEDCORE_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "fedbayes/bnn.hpp"
#include "fedbayes/data.hpp"
#include "fedbayes/rng.hpp"

namespace fedbayes::fed {

// The server's model plus the round counter.
struct GlobalModel {
    bnn::VariationalNet net;
    int round = 0;
};

// Everything a client needs to run one round. Pure data; the per-round
// randomness is derived from (seed_root, round, id, purpose), so the same
// state always produces the same local computation.
struct ClientState {
    int id = 0;
    data::ClientShards shards;
    std::vector<double> lr_candidates;
    int t_temp = 1;       // epochs per temporary (candidate) training burst
    int local_epochs = 1; // T
    int batch_size = 32;
    double kl_scale = 0.0; // <= 0 means auto: 1 / (minibatches per epoch)
    int n_mc_train = 1;
    int n_mc_eval = 10;
    num::SeedPath seed_root;

    void validate() const;
};

// Outcome of the per-round learning-rate meta-selection.
struct LrSelection {
    std::vector<double> losses; // meta-shard loss per candidate, +inf if diverged
    int best_index = 0;
    double best_lr = 0.0;
};

struct ClientRoundRecord {
    int client_id = 0;
    double selected_lr = 0.0;
    std::vector<double> meta_losses; // empty outside meta mode
    double train_loss = 0.0;         // predictive cross-entropy on the train shard
    double test_accuracy = 0.0;
    double test_loss = 0.0;
};

struct RoundReport {
    int round = 0;
    std::vector<ClientRoundRecord> clients;
    double global_test_accuracy = 0.0; // on the union of client test shards
    double global_test_loss = 0.0;
};

enum class Algo { meta_bayfl, bayfl_fixed, fedavg_det };

// A runnable protocol variant: the meta algorithm, or a fixed-lr Bayesian /
// deterministic baseline. Parsed from "meta_bayfl", "bayfl_fixed@0.001",
// "fedavg_det@0.01".
struct RunMode {
    Algo algo = Algo::meta_bayfl;
    double fixed_lr = 0.0;

    std::string label() const;
    static RunMode parse(const std::string& text);
    bool deterministic() const { return algo == Algo::fedavg_det; }
};

// argmin of the loss list (first index on exact ties). Exposed separately so
// the selection rule can be exercised on synthetic loss vectors.
LrSelection select_from_losses(const std::vector<double>& losses,
                               const std::vector<double>& candidates);

// For each candidate lr, clone the global net, train t_temp epochs on the
// train shard (same batch order and same noise stream for every candidate),
// then score mean predictive cross-entropy on the meta shard. Candidates that
// diverge score +inf; if all diverge, throws DivergenceError.
LrSelection meta_select_lr(const ClientState& client, const GlobalModel& global,
                           const bnn::Prior& prior);

// T epochs of minibatch descent on the negative ELBO, starting from a clone
// of the global net. Throws DivergenceError (with client/round/epoch) if the
// loss goes non-finite.
bnn::VariationalNet local_train(const ClientState& client, const GlobalModel& global,
                                double lr, const bnn::Prior& prior);

enum class Weighting { uniform, by_train_size };

// Elementwise mean of the clients' parameters (both mu and rho tensors),
// computed as x0 + sum_n w_n (x_n - x0) in ascending client order so that
// identical inputs aggregate to themselves bit-for-bit. by_train_size weights
// by sizes / sum(sizes); uniform weights are 1/N.
bnn::VariationalNet aggregate(const std::vector<bnn::VariationalNet>& locals,
                              Weighting weighting,
                              const std::vector<std::size_t>& sizes = {});

struct EvalResult {
    double accuracy = 0.0;
    double mean_loss = 0.0;
};

// accuracy = fraction whose predictive argmax (first index on ties) equals
// the label; mean_loss = mean cross-entropy of the averaged predictive
// distribution. Pure function of (net, ds, n_mc): the evaluation noise stream
// is fixed.
EvalResult evaluate_model(const bnn::VariationalNet& net, const data::Dataset& ds,
                          int n_mc);

// One broadcast / local-train / aggregate cycle. Per-client computation is a
// pure function of (global, client), so sequential and parallel schedules are
// bit-identical; results are joined in ascending client order. n_threads 0
// consults FEDBAYES_THREADS, then hardware concurrency. Aggregation is the
// uniform mean unless the size-weighted extension is requested.
std::pair<GlobalModel, RoundReport> run_round(const GlobalModel& global,
                                              const std::vector<ClientState>& clients,
                                              const bnn::Prior& prior,
                                              const RunMode& mode,
                                              int n_threads = 0,
                                              Weighting weighting = Weighting::uniform);

enum class ScheduleKind { constant, inv_sqrt_horizon, inv_round, inv_sqrt_round };

// Step-size schedules: a, a/sqrt(K), a/k, a/sqrt(k).
double lr_schedule(ScheduleKind kind, double a, int k, int horizon);

// Candidate set from the three decaying schedules at round k, duplicates
// removed in order.
std::vector<double> schedule_candidates(double a, int k, int horizon);

// Checkpoint = net container + round counter.
void save_checkpoint(const GlobalModel& gm, std::ostream& os);
GlobalModel load_checkpoint(std::istream& is);

} // namespace fedbayes::fed

#endif
