#include "fedbayes/tensor.hpp"

#include <cmath>
#include <sstream>

#include "fedbayes/errors.hpp"

namespace fedbayes::num {

Tensor1 affine(const Tensor2& W, const Tensor1& b, const Tensor1& x) {
    if (W.cols != x.len() || b.len() != W.rows) {
        std::ostringstream oss;
        oss << "affine shape mismatch: W is " << W.rows << "x" << W.cols
            << ", b has length " << b.len() << ", x has length " << x.len();
        throw DimensionError(oss.str());
    }
    Tensor1 out(W.rows);
    for (std::size_t r = 0; r < W.rows; ++r) {
        const double* wr = W.row(r);
        double acc = b[r];
        for (std::size_t c = 0; c < W.cols; ++c) acc += wr[c] * x[c];
        out[r] = acc;
    }
    return out;
}

Tensor1 softmax(const Tensor1& logits) {
    Tensor1 out(logits.len());
    double mx = logits[0];
    for (std::size_t i = 1; i < logits.len(); ++i)
        if (logits[i] > mx) mx = logits[i];
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.len(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (std::size_t i = 0; i < logits.len(); ++i) out[i] /= sum;
    return out;
}

XentResult softmax_xent(const Tensor1& logits, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.len()) {
        std::ostringstream oss;
        oss << "softmax_xent label " << label << " out of range for "
            << logits.len() << " logits";
        throw IndexError(oss.str());
    }
    // max-subtraction keeps exp() in range and the log exact
    double mx = logits[0];
    for (std::size_t i = 1; i < logits.len(); ++i)
        if (logits[i] > mx) mx = logits[i];
    double sum = 0.0;
    Tensor1 grad(logits.len());
    for (std::size_t i = 0; i < logits.len(); ++i) {
        grad[i] = std::exp(logits[i] - mx);
        sum += grad[i];
    }
    double loss = std::log(sum) - (logits[static_cast<std::size_t>(label)] - mx);
    for (std::size_t i = 0; i < logits.len(); ++i) grad[i] /= sum;
    grad[static_cast<std::size_t>(label)] -= 1.0;
    return {loss, std::move(grad)};
}

double softplus(double x) {
    if (x > 30.0) return x;
    return std::log1p(std::exp(x));
}

double softplus_deriv(double x) {
    if (x > 30.0) return 1.0;
    if (x < -30.0) return std::exp(x);
    return 1.0 / (1.0 + std::exp(-x));
}

double softplus_inv(double y) {
    if (y <= 0.0) throw ArgumentError("softplus_inv requires y > 0");
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

Tensor1 finite_diff_grad(const std::function<double(const Tensor1&)>& f,
                         const Tensor1& x, double h) {
    if (h <= 0.0) throw ArgumentError("finite_diff_grad requires h > 0");
    Tensor1 grad(x.len());
    Tensor1 probe = x;
    for (std::size_t i = 0; i < x.len(); ++i) {
        const double xi = x[i];
        probe[i] = xi + h;
        double fp = f(probe);
        probe[i] = xi - h;
        double fm = f(probe);
        probe[i] = xi;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            std::ostringstream oss;
            oss << "finite_diff_grad: non-finite evaluation at coordinate " << i;
            throw NumericError(oss.str());
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

} // namespace fedbayes::num
