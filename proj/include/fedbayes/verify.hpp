#ifndef FEDBAYES_VERIFY_HPP
#define FEDBAYES_VERIFY_HPP

#include <cstdint>

#include "fedbayes/bnn.hpp"

namespace fedbayes::verify {

// Numeric KL(q||p) for one parameter: Simpson integration of q ln(q/p) over
// [mu_q - half_width*sigma_q, mu_q + half_width*sigma_q]. Independent of the
// closed form it checks.
double kl_numeric_1d(double mu_q, double sigma_q, double mu0, double sigma0,
                     double half_width = 12.0, int intervals = 20000);

struct KlCheckReport {
    double max_abs_error = 0.0;
    int n_cases = 0;
};

// Randomized diagonal-Gaussian cases: closed-form kl_diag_gauss against the
// per-parameter integral.
KlCheckReport kl_check(std::uint64_t seed, int n_cases);

struct GradCheckReport {
    double max_rel_error = 0.0;
    int n_coords = 0; // coordinates compared (|fd| above the floor)
};

// Random tiny nets and batches, frozen noise: elbo_backward against central
// finite differences on every mu and rho coordinate.
GradCheckReport gradient_check(std::uint64_t seed, int n_nets);

// Flat (mu..., rho...) parameter vector helpers used by the checks and tests.
num::Tensor1 flatten_params(const bnn::VariationalNet& net);
void unflatten_params(bnn::VariationalNet& net, const num::Tensor1& flat);
num::Tensor1 flatten_grads(const bnn::Gradients& grads);

} // namespace fedbayes::verify

#endif
