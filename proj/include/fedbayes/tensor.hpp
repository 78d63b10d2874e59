#ifndef FEDBAYES_TENSOR_HPP
#define FEDBAYES_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <vector>

namespace fedbayes::num {

// Dense 1-D tensor of doubles. Everything in this project is 64-bit float;
// gradient-check tolerances of 1e-4 are not reliable in 32-bit.
struct Tensor1 {
    std::vector<double> v;

    Tensor1() = default;
    explicit Tensor1(std::size_t n, double fill = 0.0) : v(n, fill) {}
    Tensor1(std::initializer_list<double> init) : v(init) {}

    std::size_t len() const { return v.size(); }
    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }

    double* data() { return v.data(); }
    const double* data() const { return v.data(); }

    bool operator==(const Tensor1&) const = default;
};

// Dense row-major 2-D tensor.
struct Tensor2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Tensor2() = default;
    Tensor2(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), v(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }

    const double* row(std::size_t r) const { return v.data() + r * cols; }
    double* row(std::size_t r) { return v.data() + r * cols; }

    bool operator==(const Tensor2&) const = default;
};

// out[r] = sum_c W[r,c] * x[c] + b[r].
// Throws DimensionError naming both shapes on mismatch.
Tensor1 affine(const Tensor2& W, const Tensor1& b, const Tensor1& x);

Tensor1 softmax(const Tensor1& logits);

struct XentResult {
    double loss;
    Tensor1 grad; // softmax(logits) - onehot(label); components sum to 0
};

// Numerically stabilized softmax cross-entropy for one sample.
// Throws IndexError if label is out of range.
XentResult softmax_xent(const Tensor1& logits, int label);

// ln(1 + e^x), overflow-safe: returns x for x > 30.
double softplus(double x);
// d/dx softplus(x) = logistic(x), in (0,1).
double softplus_deriv(double x);
// Inverse of softplus for y > 0.
double softplus_inv(double y);

// Central-difference gradient, (f(x+h e_i) - f(x-h e_i)) / (2h) per coordinate.
// This is the oracle the analytic backward passes are checked against.
// Throws NumericError identifying the coordinate if f evaluates non-finite.
Tensor1 finite_diff_grad(const std::function<double(const Tensor1&)>& f,
                         const Tensor1& x, double h);

} // namespace fedbayes::num

#endif
