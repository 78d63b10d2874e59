#ifndef FEDBAYES_BNN_HPP
#define FEDBAYES_BNN_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "fedbayes/rng.hpp"
#include "fedbayes/tensor.hpp"

namespace fedbayes::bnn {

enum class Mode { bayesian, deterministic };

// Shared scalar diagonal Gaussian prior over every weight.
struct Prior {
    double mu0 = 0.0;
    double sigma0 = 1.0;
};

// One dense layer's variational parameters. The semantic standard deviation
// is sigma = softplus(rho), strictly positive in bayesian mode. In
// deterministic mode the rho tensors are carried but ignored (sigma == 0).
struct VariationalLayer {
    num::Tensor2 mu_W;
    num::Tensor2 rho_W;
    num::Tensor1 mu_b;
    num::Tensor1 rho_b;

    std::size_t fan_in() const { return mu_W.cols; }
    std::size_t fan_out() const { return mu_W.rows; }
};

// Mean-field Gaussian MLP: ReLU on hidden layers, identity logits on the
// output layer. The federated unit of exchange.
struct VariationalNet {
    std::vector<VariationalLayer> layers;
    Mode mode = Mode::bayesian;

    // mu ~ U[-1/sqrt(fan_in), +1/sqrt(fan_in)], sigma = sigma_init everywhere.
    static VariationalNet mlp(const std::vector<std::size_t>& dims, Mode mode,
                              num::Rng& rng, double sigma_init = 0.05);

    std::size_t input_dim() const { return layers.front().fan_in(); }
    std::size_t output_dim() const { return layers.back().fan_out(); }
    std::size_t n_params() const;
    bool same_shape(const VariationalNet& other) const;
};

// Standard-normal draws, one per parameter (all zero in deterministic mode).
struct NoiseDraw {
    struct Layer {
        num::Tensor2 eps_W;
        num::Tensor1 eps_b;
    };
    std::vector<Layer> layers;
};

// A point realization w = mu + softplus(rho) * eps, with the eps retained
// for the matching backward pass.
struct RealizedWeights {
    struct Layer {
        num::Tensor2 W;
        num::Tensor1 b;
        num::Tensor2 eps_W;
        num::Tensor1 eps_b;
    };
    std::vector<Layer> layers;
};

NoiseDraw sample_noise(const VariationalNet& net, num::Rng& rng);
RealizedWeights realize(const VariationalNet& net, const NoiseDraw& noise);
RealizedWeights sample_weights(const VariationalNet& net, num::Rng& rng);

// Logits of one input under fixed realized weights.
num::Tensor1 forward_logits(const RealizedWeights& w, const num::Tensor1& x);

// Total closed-form KL(q || p) over all parameters:
//   sum_j ln(sigma0/sigma_j) + (sigma_j^2 + (mu_j - mu0)^2) / (2 sigma0^2) - 1/2.
// Throws ContractError in deterministic mode (undefined for a point mass).
double kl_diag_gauss(const VariationalNet& net, const Prior& prior);

struct ElboBreakdown {
    double nll = 0.0;      // Monte-Carlo estimate of -E_q[log p(batch|theta)], per-batch mean
    double kl = 0.0;       // KL(q || p), zero in deterministic mode
    double kl_scale = 0.0;
    double loss = 0.0;     // nll + kl_scale * kl; descent on this ascends the ELBO
};

// Contiguous minibatch view into a dataset's feature/label storage.
struct Minibatch {
    std::span<const num::Tensor1> x;
    std::span<const int> y;
    std::size_t size() const { return x.size(); }
};

// Per-layer gradients of the loss w.r.t. (mu, rho).
struct Gradients {
    struct Layer {
        num::Tensor2 mu_W;
        num::Tensor2 rho_W;
        num::Tensor1 mu_b;
        num::Tensor1 rho_b;
    };
    std::vector<Layer> layers;
};

struct BackwardResult {
    ElboBreakdown breakdown;
    Gradients grads;
};

// Loss with caller-frozen noise; the pair below samples the noise itself.
// n_mc is the number of draws; deterministic mode forces a single zero draw.
ElboBreakdown elbo_loss_frozen(const VariationalNet& net, const Minibatch& mb,
                               const Prior& prior,
                               const std::vector<NoiseDraw>& draws,
                               double kl_scale);
BackwardResult elbo_backward_frozen(const VariationalNet& net, const Minibatch& mb,
                                    const Prior& prior,
                                    const std::vector<NoiseDraw>& draws,
                                    double kl_scale);

// rng is taken by value: the caller's stream is not advanced, and passing the
// same snapshot to elbo_loss and elbo_backward reproduces identical draws.
ElboBreakdown elbo_loss(const VariationalNet& net, const Minibatch& mb,
                        const Prior& prior, int n_mc, double kl_scale,
                        num::Rng rng);
BackwardResult elbo_backward(const VariationalNet& net, const Minibatch& mb,
                             const Prior& prior, int n_mc, double kl_scale,
                             num::Rng rng);

// p <- p - lr * dloss/dp for every parameter.
void sgd_step(VariationalNet& net, const Gradients& grads, double lr);

// Posterior-predictive class probabilities: mean over n_mc weight samples of
// softmax(logits). Deterministic mode forces n_mc = 1.
num::Tensor1 predict(const VariationalNet& net, const num::Tensor1& x, int n_mc,
                     num::Rng rng);

bool all_finite(const VariationalNet& net);

} // namespace fedbayes::bnn

#endif
