#include "fedbayes/fedcore.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "fedbayes/errors.hpp"
#include "fedbayes/serialize.hpp"

namespace fedbayes::fed {

using bnn::VariationalNet;
using num::Rng;
using num::SeedPath;

void ClientState::validate() const {
    if (lr_candidates.empty())
        throw ArgumentError("client " + std::to_string(id) + ": no lr candidates");
    for (std::size_t i = 0; i < lr_candidates.size(); ++i) {
        if (!(lr_candidates[i] > 0.0))
            throw ArgumentError("client " + std::to_string(id) +
                                ": lr candidates must be positive");
        for (std::size_t j = i + 1; j < lr_candidates.size(); ++j)
            if (lr_candidates[i] == lr_candidates[j])
                throw ArgumentError("client " + std::to_string(id) +
                                    ": duplicate lr candidate");
    }
    if (t_temp < 1) throw ArgumentError("t_temp must be >= 1");
    if (local_epochs < 1) throw ArgumentError("local_epochs must be >= 1");
    if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    if (n_mc_train < 1 || n_mc_eval < 1) throw ArgumentError("n_mc must be >= 1");
}

std::string RunMode::label() const {
    switch (algo) {
    case Algo::meta_bayfl: return "meta_bayfl";
    case Algo::bayfl_fixed: {
        std::ostringstream oss;
        oss << "bayfl_fixed@" << fixed_lr;
        return oss.str();
    }
    case Algo::fedavg_det: {
        std::ostringstream oss;
        oss << "fedavg_det@" << fixed_lr;
        return oss.str();
    }
    }
    return "?";
}

RunMode RunMode::parse(const std::string& text) {
    RunMode m;
    const auto at = text.find('@');
    const std::string head = text.substr(0, at);
    if (head == "meta_bayfl") {
        if (at != std::string::npos)
            throw ParseError("meta_bayfl takes no fixed lr: '" + text + "'");
        m.algo = Algo::meta_bayfl;
        return m;
    }
    if (head == "bayfl_fixed")
        m.algo = Algo::bayfl_fixed;
    else if (head == "fedavg_det")
        m.algo = Algo::fedavg_det;
    else
        throw ParseError("unknown mode '" + text + "'");
    if (at == std::string::npos)
        throw ParseError("mode '" + head + "' needs a fixed lr, e.g. '" + head + "@0.001'");
    try {
        m.fixed_lr = std::stod(text.substr(at + 1));
    } catch (const std::exception&) {
        throw ParseError("bad lr in mode '" + text + "'");
    }
    if (!(m.fixed_lr > 0.0)) throw ParseError("mode lr must be positive: '" + text + "'");
    return m;
}

namespace {

// auto apportionment: the per-batch nll is a batch mean, so 1/n_train makes
// the summed per-epoch loss proportional to the full negative ELBO
double resolve_kl_scale(const ClientState& client, std::size_t train_size) {
    if (client.kl_scale > 0.0) return client.kl_scale;
    return 1.0 / static_cast<double>(train_size);
}

// Minibatch SGD on the negative ELBO. `epochs` epochs over the train shard;
// batch order comes from order_rng (shared between temporary and final
// training so candidate probes replay the real schedule), per-batch noise
// streams from noise_base.
void train_epochs(VariationalNet& net, const ClientState& client,
                  const bnn::Prior& prior, double lr, int epochs,
                  const SeedPath& noise_base, Rng order_rng, int round) {
    const data::Dataset& train = client.shards.train;
    const std::size_t n = train.size();
    const auto bs = static_cast<std::size_t>(client.batch_size);
    const double kl_scale = resolve_kl_scale(client, n);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<num::Tensor1> bx(n);
    std::vector<int> by(n);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        order_rng.shuffle(order);
        for (std::size_t i = 0; i < n; ++i) {
            bx[i] = train.features[order[i]];
            by[i] = train.labels[order[i]];
        }
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < n; start += bs, ++batch_index) {
            const std::size_t len = std::min(bs, n - start);
            bnn::Minibatch mb{{bx.data() + start, len}, {by.data() + start, len}};
            Rng noise_rng(noise_base.child(static_cast<std::uint64_t>(epoch))
                              .child(batch_index));
            auto back = bnn::elbo_backward(net, mb, prior, client.n_mc_train,
                                           kl_scale, noise_rng);
            if (!std::isfinite(back.breakdown.loss)) {
                std::ostringstream oss;
                oss << "training diverged: client " << client.id << ", round " << round
                    << ", epoch " << epoch + 1 << " (loss not finite)";
                throw DivergenceError(oss.str(), client.id, round, epoch + 1);
            }
            bnn::sgd_step(net, back.grads, lr);
        }
        if (!bnn::all_finite(net)) {
            std::ostringstream oss;
            oss << "training diverged: client " << client.id << ", round " << round
                << ", epoch " << epoch + 1 << " (parameters not finite)";
            throw DivergenceError(oss.str(), client.id, round, epoch + 1);
        }
    }
}

// All evaluations share one fixed noise stream so evaluation is a pure
// function of (net, dataset, n_mc) and paired across rounds and candidates.
constexpr std::uint64_t kEvalSeed = 0x4556414CU; // "EVAL"

} // namespace

LrSelection select_from_losses(const std::vector<double>& losses,
                               const std::vector<double>& candidates) {
    if (losses.empty() || losses.size() != candidates.size())
        throw ArgumentError("select_from_losses: losses/candidates size mismatch");
    int best = -1;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        if (!std::isfinite(losses[i])) continue;
        if (best < 0 || losses[i] < losses[static_cast<std::size_t>(best)])
            best = static_cast<int>(i);
    }
    if (best < 0)
        throw DivergenceError("every lr candidate diverged", -1, -1, -1);
    LrSelection sel;
    sel.losses = losses;
    sel.best_index = best;
    sel.best_lr = candidates[static_cast<std::size_t>(best)];
    return sel;
}

LrSelection meta_select_lr(const ClientState& client, const GlobalModel& global,
                           const bnn::Prior& prior) {
    client.validate();
    const auto round = static_cast<std::uint64_t>(global.round);
    const auto cid = static_cast<std::uint64_t>(client.id);
    // every candidate replays the same batch order and the same noise draws,
    // so the probes differ only in the learning rate
    const SeedPath noise_base =
        client.seed_root.child(round, cid, num::purpose::temp_train);
    const SeedPath order_path =
        client.seed_root.child(round, cid, num::purpose::batch_order);

    std::vector<double> losses;
    losses.reserve(client.lr_candidates.size());
    for (double lr : client.lr_candidates) {
        VariationalNet probe = global.net;
        double loss;
        try {
            train_epochs(probe, client, prior, lr, client.t_temp, noise_base,
                         Rng(order_path), global.round);
            loss = evaluate_model(probe, client.shards.meta, client.n_mc_eval).mean_loss;
        } catch (const DivergenceError&) {
            loss = std::numeric_limits<double>::infinity();
        }
        if (!std::isfinite(loss)) loss = std::numeric_limits<double>::infinity();
        losses.push_back(loss);
    }
    try {
        return select_from_losses(losses, client.lr_candidates);
    } catch (const DivergenceError&) {
        std::ostringstream oss;
        oss << "meta_select_lr: every candidate diverged for client " << client.id
            << " at round " << global.round;
        throw DivergenceError(oss.str(), client.id, global.round, -1);
    }
}

VariationalNet local_train(const ClientState& client, const GlobalModel& global,
                           double lr, const bnn::Prior& prior) {
    client.validate();
    if (!(lr > 0.0)) throw ArgumentError("local_train needs lr > 0");
    const auto round = static_cast<std::uint64_t>(global.round);
    const auto cid = static_cast<std::uint64_t>(client.id);
    VariationalNet net = global.net; // w_{n,k} = w_{g,k}
    train_epochs(net, client, prior, lr, client.local_epochs,
                 client.seed_root.child(round, cid, num::purpose::train),
                 Rng(client.seed_root.child(round, cid, num::purpose::batch_order)),
                 global.round);
    return net;
}

VariationalNet aggregate(const std::vector<VariationalNet>& locals,
                         Weighting weighting,
                         const std::vector<std::size_t>& sizes) {
    if (locals.empty()) throw AggregationError("aggregate: no local models");
    for (std::size_t n = 1; n < locals.size(); ++n) {
        if (!locals[0].same_shape(locals[n]) || locals[0].mode != locals[n].mode)
            throw AggregationError("aggregate: client " + std::to_string(n) +
                                   " has a mismatched model shape");
    }
    std::vector<double> w(locals.size(), 1.0 / static_cast<double>(locals.size()));
    if (weighting == Weighting::by_train_size) {
        if (sizes.size() != locals.size())
            throw AggregationError("aggregate: sizes do not match client count");
        double total = 0.0;
        for (std::size_t s : sizes) total += static_cast<double>(s);
        if (!(total > 0.0)) throw AggregationError("aggregate: zero total size");
        for (std::size_t n = 0; n < sizes.size(); ++n)
            w[n] = static_cast<double>(sizes[n]) / total;
    }

    // mean anchored at client 0: out = x0 + sum_n w_n (x_n - x0), summed in
    // ascending client order. Identical inputs aggregate to themselves exactly
    // and the N=1 case is the identity.
    VariationalNet out = locals[0];
    auto mean_tensor = [&](auto member) {
        for (std::size_t l = 0; l < out.layers.size(); ++l) {
            auto& o = out.layers[l].*member;
            const auto& base = locals[0].layers[l].*member;
            for (std::size_t i = 0; i < o.v.size(); ++i) {
                double acc = 0.0;
                for (std::size_t n = 0; n < locals.size(); ++n)
                    acc += w[n] * ((locals[n].layers[l].*member).v[i] - base.v[i]);
                o.v[i] = base.v[i] + acc;
            }
        }
    };
    mean_tensor(&bnn::VariationalLayer::mu_W);
    mean_tensor(&bnn::VariationalLayer::rho_W);
    mean_tensor(&bnn::VariationalLayer::mu_b);
    mean_tensor(&bnn::VariationalLayer::rho_b);
    return out;
}

EvalResult evaluate_model(const bnn::VariationalNet& net, const data::Dataset& ds,
                          int n_mc) {
    if (ds.size() == 0) throw ArgumentError("evaluate_model: empty dataset");
    if (n_mc < 1) throw ArgumentError("evaluate_model: n_mc must be >= 1");
    const int draws = net.mode == bnn::Mode::deterministic ? 1 : n_mc;
    Rng rng{SeedPath(kEvalSeed)};
    std::vector<bnn::RealizedWeights> nets;
    nets.reserve(static_cast<std::size_t>(draws));
    for (int s = 0; s < draws; ++s) nets.push_back(bnn::sample_weights(net, rng));

    std::size_t correct = 0;
    double loss = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        num::Tensor1 mean(net.output_dim());
        for (const auto& w : nets) {
            num::Tensor1 p = num::softmax(bnn::forward_logits(w, ds.features[i]));
            for (std::size_t c = 0; c < mean.len(); ++c) mean[c] += p[c];
        }
        for (double& v : mean.v) v /= static_cast<double>(draws);
        std::size_t arg = 0;
        for (std::size_t c = 1; c < mean.len(); ++c)
            if (mean[c] > mean[arg]) arg = c; // first index wins ties
        if (static_cast<int>(arg) == ds.labels[i]) ++correct;
        loss -= std::log(std::max(mean[static_cast<std::size_t>(ds.labels[i])], 1e-300));
    }
    EvalResult r;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
    r.mean_loss = loss / static_cast<double>(ds.size());
    return r;
}

namespace {

int resolve_threads(int n_threads) {
    if (n_threads > 0) return n_threads;
    if (const char* env = std::getenv("FEDBAYES_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

struct ClientResult {
    VariationalNet net;
    ClientRoundRecord rec;
};

ClientResult run_client(const GlobalModel& global, const ClientState& client,
                        const bnn::Prior& prior, const RunMode& mode) {
    ClientResult out;
    double lr;
    if (mode.algo == Algo::meta_bayfl) {
        LrSelection sel = meta_select_lr(client, global, prior);
        lr = sel.best_lr;
        out.rec.meta_losses = std::move(sel.losses);
    } else {
        lr = mode.fixed_lr;
    }
    out.net = local_train(client, global, lr, prior);
    out.rec.client_id = client.id;
    out.rec.selected_lr = lr;
    out.rec.train_loss =
        evaluate_model(out.net, client.shards.train, client.n_mc_eval).mean_loss;
    const EvalResult test = evaluate_model(out.net, client.shards.test, client.n_mc_eval);
    out.rec.test_accuracy = test.accuracy;
    out.rec.test_loss = test.mean_loss;
    return out;
}

} // namespace

std::pair<GlobalModel, RoundReport> run_round(const GlobalModel& global,
                                              const std::vector<ClientState>& clients,
                                              const bnn::Prior& prior,
                                              const RunMode& mode, int n_threads,
                                              Weighting weighting) {
    if (clients.empty()) throw ArgumentError("run_round: no clients");
    const bool want_det = mode.deterministic();
    if (want_det != (global.net.mode == bnn::Mode::deterministic))
        throw ContractError("run_round: mode '" + mode.label() +
                            "' does not match the global net's mode");
    for (std::size_t n = 0; n < clients.size(); ++n)
        if (clients[n].id != static_cast<int>(n))
            throw ArgumentError("run_round: clients must be ordered by ascending id");

    const std::size_t n_clients = clients.size();
    std::vector<ClientResult> results(n_clients);
    std::vector<std::exception_ptr> errors(n_clients);

    const int threads = std::min<int>(resolve_threads(n_threads),
                                      static_cast<int>(n_clients));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n_clients; ++i) {
            try {
                results[i] = run_client(global, clients[i], prior, mode);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n_clients) return;
                try {
                    results[i] = run_client(global, clients[i], prior, mode);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    // abort on the lowest-id failure; no partial aggregation
    for (std::size_t i = 0; i < n_clients; ++i)
        if (errors[i]) std::rethrow_exception(errors[i]);

    std::vector<VariationalNet> locals;
    locals.reserve(n_clients);
    for (auto& r : results) locals.push_back(std::move(r.net));
    std::vector<std::size_t> sizes;
    if (weighting == Weighting::by_train_size)
        for (const auto& c : clients) sizes.push_back(c.shards.train.size());

    GlobalModel next_global;
    next_global.net = aggregate(locals, weighting, sizes);
    next_global.round = global.round + 1;

    RoundReport report;
    report.round = global.round + 1;
    for (auto& r : results) report.clients.push_back(std::move(r.rec));

    data::Dataset union_test;
    union_test.n_classes = clients[0].shards.test.n_classes;
    union_test.name = "union_test";
    for (const auto& c : clients) {
        union_test.features.insert(union_test.features.end(),
                                   c.shards.test.features.begin(),
                                   c.shards.test.features.end());
        union_test.labels.insert(union_test.labels.end(), c.shards.test.labels.begin(),
                                 c.shards.test.labels.end());
    }
    const EvalResult g =
        evaluate_model(next_global.net, union_test, clients[0].n_mc_eval);
    report.global_test_accuracy = g.accuracy;
    report.global_test_loss = g.mean_loss;
    return {std::move(next_global), std::move(report)};
}

double lr_schedule(ScheduleKind kind, double a, int k, int horizon) {
    if (!(a > 0.0)) throw ArgumentError("lr_schedule needs a > 0");
    if (k == 0 || horizon == 0) throw ArgumentError("lr_schedule needs k >= 1 and K >= 1");
    if (k < 0 || horizon < 0 || k > horizon)
        throw ArgumentError("lr_schedule needs 1 <= k <= K");
    switch (kind) {
    case ScheduleKind::constant: return a;
    case ScheduleKind::inv_sqrt_horizon: return a / std::sqrt(static_cast<double>(horizon));
    case ScheduleKind::inv_round: return a / static_cast<double>(k);
    case ScheduleKind::inv_sqrt_round: return a / std::sqrt(static_cast<double>(k));
    }
    throw ArgumentError("lr_schedule: unknown kind");
}

std::vector<double> schedule_candidates(double a, int k, int horizon) {
    const double v1 = lr_schedule(ScheduleKind::inv_sqrt_horizon, a, k, horizon);
    const double v2 = lr_schedule(ScheduleKind::inv_round, a, k, horizon);
    const double v3 = lr_schedule(ScheduleKind::inv_sqrt_round, a, k, horizon);
    std::vector<double> out{v1};
    if (v2 != v1) out.push_back(v2);
    if (v3 != v1 && v3 != v2) out.push_back(v3);
    return out;
}

void save_checkpoint(const GlobalModel& gm, std::ostream& os) {
    os.write("FBCP", 4);
    os.put(1); // version
    const auto r = static_cast<std::uint32_t>(gm.round);
    unsigned char buf[4] = {static_cast<unsigned char>(r & 0xFF),
                            static_cast<unsigned char>((r >> 8) & 0xFF),
                            static_cast<unsigned char>((r >> 16) & 0xFF),
                            static_cast<unsigned char>((r >> 24) & 0xFF)};
    os.write(reinterpret_cast<const char*>(buf), 4);
    bnn::save_net(gm.net, os);
    if (!os) throw IoError("failed writing checkpoint");
}

GlobalModel load_checkpoint(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "FBCP")
        throw FormatError("bad checkpoint magic, expected FBCP");
    const int version = is.get();
    if (version != 1)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    unsigned char buf[4];
    if (!is.read(reinterpret_cast<char*>(buf), 4))
        throw FormatError("checkpoint truncated at round counter");
    GlobalModel gm;
    gm.round = static_cast<int>(static_cast<std::uint32_t>(buf[0]) |
                                (static_cast<std::uint32_t>(buf[1]) << 8) |
                                (static_cast<std::uint32_t>(buf[2]) << 16) |
                                (static_cast<std::uint32_t>(buf[3]) << 24));
    gm.net = bnn::load_net(is);
    return gm;
}

} // namespace fedbayes::fed
