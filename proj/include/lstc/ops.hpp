#pragma once

#include <utility>

#include "lstc/matrix.hpp"

namespace lstc {

// A trainable tensor: value plus accumulated gradient of identical shape.
struct Param {
    Matrix value;
    Matrix grad;

    Param() = default;
    explicit Param(Matrix v) : value(std::move(v)), grad(value.rows(), value.cols()) {}

    void zero_grad() {
        for (double& g : grad.data()) g = 0.0;
    }
};

// Row-wise softmax with per-row max subtraction. Zero columns with nonzero
// rows is an error (softmax over empty support); zero rows pass through.
Matrix softmax_rows(const Matrix& m);

Matrix relu(const Matrix& m);
Matrix sigmoid(const Matrix& m);

// x: n x p, w: p x q, bias: 1 x q broadcast over rows.
Matrix linear(const Matrix& x, const Matrix& w, const Matrix& bias);

// Row-wise layer norm with biased variance and eps inside the root.
Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, double eps);

namespace ops {

// Stateful ops: forward records what backward needs; backward returns
// vector-Jacobian products. Backward before forward throws StateError.

class MatMul {
public:
    Matrix forward(const Matrix& a, const Matrix& b);
    // (grad_a, grad_b)
    std::pair<Matrix, Matrix> backward(const Matrix& upstream) const;

private:
    Matrix a_, b_;
    bool ran_ = false;
};

class SoftmaxRows {
public:
    Matrix forward(const Matrix& x);
    Matrix backward(const Matrix& upstream) const;
    const Matrix& output() const { return out_; }

private:
    Matrix out_;
    bool ran_ = false;
};

class Linear {
public:
    struct Grads {
        Matrix x, w, bias;
    };
    Matrix forward(const Matrix& x, const Matrix& w, const Matrix& bias);
    Grads backward(const Matrix& upstream) const;

private:
    Matrix x_, w_;
    bool ran_ = false;
};

class LayerNorm {
public:
    struct Grads {
        Matrix x, gamma, beta;
    };
    Matrix forward(const Matrix& x, const Matrix& gamma, const Matrix& beta, double eps);
    Grads backward(const Matrix& upstream) const;

private:
    Matrix xhat_, gamma_;
    std::vector<double> inv_std_;
    bool ran_ = false;
};

class Relu {
public:
    Matrix forward(const Matrix& x);
    Matrix backward(const Matrix& upstream) const;

private:
    Matrix x_;
    bool ran_ = false;
};

class EwiseMul {
public:
    Matrix forward(const Matrix& a, const Matrix& b);
    std::pair<Matrix, Matrix> backward(const Matrix& upstream) const;

private:
    Matrix a_, b_;
    bool ran_ = false;
};

class ConcatCols {
public:
    Matrix forward(const Matrix& a, const Matrix& b);
    std::pair<Matrix, Matrix> backward(const Matrix& upstream) const;

private:
    std::size_t a_cols_ = 0, b_cols_ = 0;
    bool ran_ = false;
};

class Sigmoid {
public:
    Matrix forward(const Matrix& x);
    Matrix backward(const Matrix& upstream) const;
    const Matrix& output() const { return out_; }

private:
    Matrix out_;
    bool ran_ = false;
};

} // namespace ops
} // namespace lstc
