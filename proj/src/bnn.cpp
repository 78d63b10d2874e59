#include "fedbayes/bnn.hpp"

#include <cmath>
#include <sstream>

#include "fedbayes/errors.hpp"

namespace fedbayes::bnn {

using num::Tensor1;
using num::Tensor2;

VariationalNet VariationalNet::mlp(const std::vector<std::size_t>& dims, Mode mode,
                                   num::Rng& rng, double sigma_init) {
    if (dims.size() < 2) throw ArgumentError("mlp needs at least input and output dims");
    if (sigma_init <= 0.0) throw ArgumentError("mlp sigma_init must be positive");
    const double rho_init = num::softplus_inv(sigma_init);
    VariationalNet net;
    net.mode = mode;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t fan_in = dims[l];
        const std::size_t fan_out = dims[l + 1];
        if (fan_in == 0 || fan_out == 0) throw ArgumentError("mlp dims must be positive");
        VariationalLayer layer;
        layer.mu_W = Tensor2(fan_out, fan_in);
        layer.rho_W = Tensor2(fan_out, fan_in, rho_init);
        layer.mu_b = Tensor1(fan_out);
        layer.rho_b = Tensor1(fan_out, rho_init);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& w : layer.mu_W.v) w = (2.0 * rng.uniform() - 1.0) * bound;
        for (double& b : layer.mu_b.v) b = (2.0 * rng.uniform() - 1.0) * bound;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

std::size_t VariationalNet::n_params() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.mu_W.v.size() + l.mu_b.len();
    return n;
}

bool VariationalNet::same_shape(const VariationalNet& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].mu_W.rows != other.layers[l].mu_W.rows ||
            layers[l].mu_W.cols != other.layers[l].mu_W.cols)
            return false;
    }
    return true;
}

NoiseDraw sample_noise(const VariationalNet& net, num::Rng& rng) {
    NoiseDraw noise;
    noise.layers.reserve(net.layers.size());
    for (const auto& l : net.layers) {
        NoiseDraw::Layer nl;
        nl.eps_W = Tensor2(l.mu_W.rows, l.mu_W.cols);
        nl.eps_b = Tensor1(l.mu_b.len());
        if (net.mode == Mode::bayesian) {
            for (double& e : nl.eps_W.v) e = rng.normal();
            for (double& e : nl.eps_b.v) e = rng.normal();
        }
        noise.layers.push_back(std::move(nl));
    }
    return noise;
}

RealizedWeights realize(const VariationalNet& net, const NoiseDraw& noise) {
    if (noise.layers.size() != net.layers.size())
        throw DimensionError("realize: noise draw does not match net layer count");
    RealizedWeights rw;
    rw.layers.reserve(net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& vl = net.layers[l];
        const auto& nl = noise.layers[l];
        RealizedWeights::Layer out;
        out.W = vl.mu_W;
        out.b = vl.mu_b;
        out.eps_W = nl.eps_W;
        out.eps_b = nl.eps_b;
        if (net.mode == Mode::bayesian) {
            for (std::size_t i = 0; i < out.W.v.size(); ++i)
                out.W.v[i] += num::softplus(vl.rho_W.v[i]) * nl.eps_W.v[i];
            for (std::size_t i = 0; i < out.b.len(); ++i)
                out.b[i] += num::softplus(vl.rho_b[i]) * nl.eps_b[i];
        }
        rw.layers.push_back(std::move(out));
    }
    return rw;
}

RealizedWeights sample_weights(const VariationalNet& net, num::Rng& rng) {
    return realize(net, sample_noise(net, rng));
}

Tensor1 forward_logits(const RealizedWeights& w, const Tensor1& x) {
    Tensor1 a = x;
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        a = num::affine(w.layers[l].W, w.layers[l].b, a);
        if (l + 1 < w.layers.size())
            for (double& v : a.v) v = v > 0.0 ? v : 0.0;
    }
    return a;
}

double kl_diag_gauss(const VariationalNet& net, const Prior& prior) {
    if (net.mode == Mode::deterministic)
        throw ContractError("kl_diag_gauss is undefined for a deterministic (point-mass) net");
    if (!(prior.sigma0 > 0.0)) throw ArgumentError("prior sigma0 must be positive");
    const double mu0 = prior.mu0;
    const double s0 = prior.sigma0;
    const double inv_2s0sq = 1.0 / (2.0 * s0 * s0);
    const double log_s0 = std::log(s0);
    double kl = 0.0;
    auto accum = [&](double mu, double rho) {
        const double sigma = num::softplus(rho);
        const double dm = mu - mu0;
        kl += log_s0 - std::log(sigma) + (sigma * sigma + dm * dm) * inv_2s0sq - 0.5;
    };
    for (const auto& l : net.layers) {
        for (std::size_t i = 0; i < l.mu_W.v.size(); ++i) accum(l.mu_W.v[i], l.rho_W.v[i]);
        for (std::size_t i = 0; i < l.mu_b.len(); ++i) accum(l.mu_b[i], l.rho_b[i]);
    }
    return kl;
}

namespace {

void check_batch(const Minibatch& mb, int n_mc) {
    if (mb.size() == 0) throw ArgumentError("elbo: empty batch");
    if (mb.x.size() != mb.y.size())
        throw DimensionError("elbo: feature/label counts differ");
    if (n_mc < 1) throw ArgumentError("elbo: n_mc must be >= 1");
}

// mean over the batch of softmax cross-entropy under one weight realization
double nll_of_draw(const RealizedWeights& w, const Minibatch& mb) {
    double total = 0.0;
    for (std::size_t i = 0; i < mb.size(); ++i) {
        Tensor1 logits = forward_logits(w, mb.x[i]);
        total += num::softmax_xent(logits, mb.y[i]).loss;
    }
    return total / static_cast<double>(mb.size());
}

std::vector<NoiseDraw> draw_noise(const VariationalNet& net, int n_mc, num::Rng& rng) {
    const int draws = net.mode == Mode::deterministic ? 1 : n_mc;
    std::vector<NoiseDraw> out;
    out.reserve(static_cast<std::size_t>(draws));
    for (int s = 0; s < draws; ++s) out.push_back(sample_noise(net, rng));
    return out;
}

Gradients zero_grads(const VariationalNet& net) {
    Gradients g;
    g.layers.reserve(net.layers.size());
    for (const auto& l : net.layers) {
        Gradients::Layer gl;
        gl.mu_W = Tensor2(l.mu_W.rows, l.mu_W.cols);
        gl.rho_W = Tensor2(l.rho_W.rows, l.rho_W.cols);
        gl.mu_b = Tensor1(l.mu_b.len());
        gl.rho_b = Tensor1(l.rho_b.len());
        g.layers.push_back(std::move(gl));
    }
    return g;
}

} // namespace

ElboBreakdown elbo_loss_frozen(const VariationalNet& net, const Minibatch& mb,
                               const Prior& prior,
                               const std::vector<NoiseDraw>& draws,
                               double kl_scale) {
    check_batch(mb, static_cast<int>(draws.size()));
    double nll = 0.0;
    for (const auto& noise : draws) nll += nll_of_draw(realize(net, noise), mb);
    nll /= static_cast<double>(draws.size());
    ElboBreakdown out;
    out.nll = nll;
    out.kl = net.mode == Mode::deterministic ? 0.0 : kl_diag_gauss(net, prior);
    out.kl_scale = kl_scale;
    out.loss = out.nll + kl_scale * out.kl;
    return out;
}

ElboBreakdown elbo_loss(const VariationalNet& net, const Minibatch& mb,
                        const Prior& prior, int n_mc, double kl_scale,
                        num::Rng rng) {
    check_batch(mb, n_mc);
    return elbo_loss_frozen(net, mb, prior, draw_noise(net, n_mc, rng), kl_scale);
}

BackwardResult elbo_backward_frozen(const VariationalNet& net, const Minibatch& mb,
                                    const Prior& prior,
                                    const std::vector<NoiseDraw>& draws,
                                    double kl_scale) {
    check_batch(mb, static_cast<int>(draws.size()));
    const std::size_t n_layers = net.layers.size();
    const double batch_scale = 1.0 / static_cast<double>(mb.size());
    const double mc_scale = 1.0 / static_cast<double>(draws.size());

    Gradients grads = zero_grads(net);
    double nll = 0.0;

    // caches reused across samples
    std::vector<Tensor1> act(n_layers + 1);   // act[l] = input of layer l
    std::vector<Tensor1> pre(n_layers);       // pre-activation of layer l

    for (const auto& noise : draws) {
        const RealizedWeights w = realize(net, noise);
        Gradients path = zero_grads(net); // d(mean batch nll)/d(realized w)

        for (std::size_t i = 0; i < mb.size(); ++i) {
            act[0] = mb.x[i];
            for (std::size_t l = 0; l < n_layers; ++l) {
                pre[l] = num::affine(w.layers[l].W, w.layers[l].b, act[l]);
                if (l + 1 < n_layers) {
                    act[l + 1] = pre[l];
                    for (double& v : act[l + 1].v) v = v > 0.0 ? v : 0.0;
                }
            }
            auto xent = num::softmax_xent(pre[n_layers - 1], mb.y[i]);
            nll += xent.loss * batch_scale * mc_scale;

            Tensor1 delta = std::move(xent.grad);
            for (std::size_t l = n_layers; l-- > 0;) {
                auto& pl = path.layers[l];
                const Tensor1& in = act[l];
                for (std::size_t r = 0; r < pl.mu_W.rows; ++r) {
                    const double d = delta[r] * batch_scale;
                    double* gw = pl.mu_W.row(r);
                    for (std::size_t c = 0; c < pl.mu_W.cols; ++c) gw[c] += d * in[c];
                    pl.mu_b[r] += d;
                }
                if (l > 0) {
                    const Tensor2& W = w.layers[l].W;
                    Tensor1 next(W.cols);
                    for (std::size_t r = 0; r < W.rows; ++r) {
                        const double d = delta[r];
                        const double* wr = W.row(r);
                        for (std::size_t c = 0; c < W.cols; ++c) next[c] += wr[c] * d;
                    }
                    // relu' on the previous pre-activation (0 at the kink)
                    for (std::size_t c = 0; c < next.len(); ++c)
                        if (pre[l - 1][c] <= 0.0) next[c] = 0.0;
                    delta = std::move(next);
                }
            }
        }

        // pathwise chain: dmu += dw, drho += dw * eps * softplus'(rho)
        for (std::size_t l = 0; l < n_layers; ++l) {
            auto& g = grads.layers[l];
            const auto& p = path.layers[l];
            const auto& vl = net.layers[l];
            const auto& wl = w.layers[l];
            for (std::size_t i = 0; i < g.mu_W.v.size(); ++i) {
                const double dw = p.mu_W.v[i] * mc_scale;
                g.mu_W.v[i] += dw;
                if (net.mode == Mode::bayesian)
                    g.rho_W.v[i] += dw * wl.eps_W.v[i] * num::softplus_deriv(vl.rho_W.v[i]);
            }
            for (std::size_t i = 0; i < g.mu_b.len(); ++i) {
                const double db = p.mu_b[i] * mc_scale;
                g.mu_b[i] += db;
                if (net.mode == Mode::bayesian)
                    g.rho_b[i] += db * wl.eps_b[i] * num::softplus_deriv(vl.rho_b[i]);
            }
        }
    }

    BackwardResult out;
    out.breakdown.nll = nll;
    out.breakdown.kl = 0.0;
    out.breakdown.kl_scale = kl_scale;

    if (net.mode == Mode::bayesian) {
        out.breakdown.kl = kl_diag_gauss(net, prior);
        const double inv_s0sq = 1.0 / (prior.sigma0 * prior.sigma0);
        for (std::size_t l = 0; l < n_layers; ++l) {
            auto& g = grads.layers[l];
            const auto& vl = net.layers[l];
            auto add_kl = [&](double mu, double rho, double& gmu, double& grho) {
                gmu += kl_scale * (mu - prior.mu0) * inv_s0sq;
                const double sigma = num::softplus(rho);
                grho += kl_scale * (sigma * inv_s0sq - 1.0 / sigma) *
                        num::softplus_deriv(rho);
            };
            for (std::size_t i = 0; i < g.mu_W.v.size(); ++i)
                add_kl(vl.mu_W.v[i], vl.rho_W.v[i], g.mu_W.v[i], g.rho_W.v[i]);
            for (std::size_t i = 0; i < g.mu_b.len(); ++i)
                add_kl(vl.mu_b[i], vl.rho_b[i], g.mu_b[i], g.rho_b[i]);
        }
    }

    out.breakdown.loss = out.breakdown.nll + kl_scale * out.breakdown.kl;
    out.grads = std::move(grads);
    return out;
}

BackwardResult elbo_backward(const VariationalNet& net, const Minibatch& mb,
                             const Prior& prior, int n_mc, double kl_scale,
                             num::Rng rng) {
    check_batch(mb, n_mc);
    return elbo_backward_frozen(net, mb, prior, draw_noise(net, n_mc, rng), kl_scale);
}

void sgd_step(VariationalNet& net, const Gradients& grads, double lr) {
    if (!(lr >= 0.0)) throw ArgumentError("sgd_step lr must be >= 0");
    if (grads.layers.size() != net.layers.size())
        throw DimensionError("sgd_step: gradient layer count does not match net");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& vl = net.layers[l];
        const auto& g = grads.layers[l];
        if (g.mu_W.rows != vl.mu_W.rows || g.mu_W.cols != vl.mu_W.cols) {
            std::ostringstream oss;
            oss << "sgd_step: layer " << l << " gradient is " << g.mu_W.rows << "x"
                << g.mu_W.cols << ", net is " << vl.mu_W.rows << "x" << vl.mu_W.cols;
            throw DimensionError(oss.str());
        }
        for (std::size_t i = 0; i < vl.mu_W.v.size(); ++i) {
            vl.mu_W.v[i] -= lr * g.mu_W.v[i];
            vl.rho_W.v[i] -= lr * g.rho_W.v[i];
        }
        for (std::size_t i = 0; i < vl.mu_b.len(); ++i) {
            vl.mu_b[i] -= lr * g.mu_b[i];
            vl.rho_b[i] -= lr * g.rho_b[i];
        }
    }
}

Tensor1 predict(const VariationalNet& net, const Tensor1& x, int n_mc,
                num::Rng rng) {
    if (n_mc < 1) throw ArgumentError("predict: n_mc must be >= 1");
    const int draws = net.mode == Mode::deterministic ? 1 : n_mc;
    Tensor1 mean(net.output_dim());
    for (int s = 0; s < draws; ++s) {
        const RealizedWeights w = sample_weights(net, rng);
        Tensor1 p = num::softmax(forward_logits(w, x));
        for (std::size_t i = 0; i < mean.len(); ++i) mean[i] += p[i];
    }
    for (double& v : mean.v) v /= static_cast<double>(draws);
    return mean;
}

bool all_finite(const VariationalNet& net) {
    for (const auto& l : net.layers) {
        for (double v : l.mu_W.v)
            if (!std::isfinite(v)) return false;
        for (double v : l.rho_W.v)
            if (!std::isfinite(v)) return false;
        for (double v : l.mu_b.v)
            if (!std::isfinite(v)) return false;
        for (double v : l.rho_b.v)
            if (!std::isfinite(v)) return false;
    }
    return true;
}

} // namespace fedbayes::bnn
