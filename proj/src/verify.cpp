#include "fedbayes/verify.hpp"

#include <cmath>

#include "fedbayes/errors.hpp"

namespace fedbayes::verify {

using bnn::VariationalNet;
using num::Rng;
using num::SeedPath;
using num::Tensor1;

double kl_numeric_1d(double mu_q, double sigma_q, double mu0, double sigma0,
                     double half_width, int intervals) {
    if (!(sigma_q > 0.0) || !(sigma0 > 0.0))
        throw ArgumentError("kl_numeric_1d needs positive sigmas");
    if (intervals % 2 != 0) ++intervals;
    const double lo = mu_q - half_width * sigma_q;
    const double hi = mu_q + half_width * sigma_q;
    const double h = (hi - lo) / intervals;
    const double log_ratio = std::log(sigma0 / sigma_q);
    auto integrand = [&](double x) {
        const double zq = (x - mu_q) / sigma_q;
        const double zp = (x - mu0) / sigma0;
        const double q = std::exp(-0.5 * zq * zq) / (sigma_q * std::sqrt(2.0 * M_PI));
        return q * (log_ratio - 0.5 * zq * zq + 0.5 * zp * zp);
    };
    double sum = integrand(lo) + integrand(hi);
    for (int i = 1; i < intervals; ++i)
        sum += integrand(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return sum * h / 3.0;
}

KlCheckReport kl_check(std::uint64_t seed, int n_cases) {
    Rng rng(SeedPath(seed, {0x4B4C}));
    KlCheckReport report;
    report.n_cases = n_cases;
    for (int c = 0; c < n_cases; ++c) {
        const double mu_q = -3.0 + 6.0 * rng.uniform();
        const double sigma_q = 0.1 + 2.9 * rng.uniform();
        const double mu0 = -1.0 + 2.0 * rng.uniform();
        const double sigma0 = 0.3 + 1.7 * rng.uniform();

        // 1x1 net whose bias matches the prior exactly, so the net total KL is
        // the weight's per-parameter KL
        VariationalNet net;
        net.mode = bnn::Mode::bayesian;
        bnn::VariationalLayer layer;
        layer.mu_W = num::Tensor2(1, 1, mu_q);
        layer.rho_W = num::Tensor2(1, 1, num::softplus_inv(sigma_q));
        layer.mu_b = Tensor1(1, mu0);
        layer.rho_b = Tensor1(1, num::softplus_inv(sigma0));
        net.layers.push_back(std::move(layer));

        const double closed = bnn::kl_diag_gauss(net, bnn::Prior{mu0, sigma0});
        const double numeric = kl_numeric_1d(mu_q, sigma_q, mu0, sigma0);
        report.max_abs_error = std::max(report.max_abs_error, std::abs(closed - numeric));
    }
    return report;
}

Tensor1 flatten_params(const VariationalNet& net) {
    std::vector<double> flat;
    for (const auto& l : net.layers) {
        flat.insert(flat.end(), l.mu_W.v.begin(), l.mu_W.v.end());
        flat.insert(flat.end(), l.mu_b.v.begin(), l.mu_b.v.end());
        flat.insert(flat.end(), l.rho_W.v.begin(), l.rho_W.v.end());
        flat.insert(flat.end(), l.rho_b.v.begin(), l.rho_b.v.end());
    }
    Tensor1 out;
    out.v = std::move(flat);
    return out;
}

void unflatten_params(VariationalNet& net, const Tensor1& flat) {
    std::size_t k = 0;
    for (auto& l : net.layers) {
        for (double& v : l.mu_W.v) v = flat[k++];
        for (double& v : l.mu_b.v) v = flat[k++];
        for (double& v : l.rho_W.v) v = flat[k++];
        for (double& v : l.rho_b.v) v = flat[k++];
    }
    if (k != flat.len()) throw DimensionError("unflatten_params: length mismatch");
}

Tensor1 flatten_grads(const bnn::Gradients& grads) {
    std::vector<double> flat;
    for (const auto& l : grads.layers) {
        flat.insert(flat.end(), l.mu_W.v.begin(), l.mu_W.v.end());
        flat.insert(flat.end(), l.mu_b.v.begin(), l.mu_b.v.end());
        flat.insert(flat.end(), l.rho_W.v.begin(), l.rho_W.v.end());
        flat.insert(flat.end(), l.rho_b.v.begin(), l.rho_b.v.end());
    }
    Tensor1 out;
    out.v = std::move(flat);
    return out;
}

GradCheckReport gradient_check(std::uint64_t seed, int n_nets) {
    GradCheckReport report;
    for (int t = 0; t < n_nets; ++t) {
        Rng rng(SeedPath(seed, {0x4744, static_cast<std::uint64_t>(t)}));
        const std::size_t d_in = 2 + rng.uniform_index(3);
        const std::size_t d_hidden = 2 + rng.uniform_index(4);
        const std::size_t d_out = 2 + rng.uniform_index(3);
        VariationalNet net =
            VariationalNet::mlp({d_in, d_hidden, d_out}, bnn::Mode::bayesian, rng, 0.3);
        // perturb rho so the sigmas are not all equal
        for (auto& l : net.layers) {
            for (double& r : l.rho_W.v) r += 0.5 * (rng.uniform() - 0.5);
            for (double& r : l.rho_b.v) r += 0.5 * (rng.uniform() - 0.5);
        }

        const std::size_t batch = 3 + rng.uniform_index(3);
        std::vector<Tensor1> xs(batch);
        std::vector<int> ys(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            xs[i] = Tensor1(d_in);
            for (double& v : xs[i].v) v = rng.uniform();
            ys[i] = static_cast<int>(rng.uniform_index(d_out));
        }
        const bnn::Minibatch mb{{xs.data(), xs.size()}, {ys.data(), ys.size()}};

        const bnn::Prior prior{0.1, 0.5 + 1.5 * rng.uniform()};
        const double kl_scale = 0.2 + rng.uniform();
        std::vector<bnn::NoiseDraw> draws;
        for (int s = 0; s < 2; ++s) draws.push_back(bnn::sample_noise(net, rng));

        const auto analytic =
            bnn::elbo_backward_frozen(net, mb, prior, draws, kl_scale);
        const Tensor1 analytic_flat = flatten_grads(analytic.grads);

        VariationalNet probe = net;
        auto f = [&](const Tensor1& flat) {
            unflatten_params(probe, flat);
            return bnn::elbo_loss_frozen(probe, mb, prior, draws, kl_scale).loss;
        };
        const Tensor1 fd = num::finite_diff_grad(f, flatten_params(net), 1e-5);

        for (std::size_t i = 0; i < fd.len(); ++i) {
            const double scale = std::max(std::abs(fd[i]), std::abs(analytic_flat[i]));
            if (scale <= 1e-6) continue;
            const double rel = std::abs(fd[i] - analytic_flat[i]) / scale;
            report.max_rel_error = std::max(report.max_rel_error, rel);
            ++report.n_coords;
        }
    }
    return report;
}

} // namespace fedbayes::verify
