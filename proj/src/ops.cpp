#include "lstc/ops.hpp"

#include <algorithm>
#include <cmath>

namespace lstc {

Matrix softmax_rows(const Matrix& m) {
    if (m.cols() == 0 && m.rows() > 0) {
        throw DimensionError("softmax_rows: empty support (matrix has zero columns)");
    }
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto in = m.row(i);
        auto o = out.row(i);
        double mx = in[0];
        for (double v : in) mx = std::max(mx, v);
        double sum = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        for (double& v : o) v /= sum;
    }
    return out;
}

Matrix relu(const Matrix& m) {
    Matrix out = m;
    for (double& v : out.data()) v = std::max(v, 0.0);
    return out;
}

Matrix sigmoid(const Matrix& m) {
    Matrix out = m;
    for (double& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
    return out;
}

Matrix linear(const Matrix& x, const Matrix& w, const Matrix& bias) {
    if (bias.rows() != 1 || bias.cols() != w.cols()) {
        throw DimensionError("linear: bias must be 1x" + std::to_string(w.cols()) + ", got " +
                             bias.shape_str());
    }
    Matrix out = matmul(x, w);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bias(0, j);
    }
    return out;
}

Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, double eps) {
    if (x.cols() == 0) throw DimensionError("layer_norm: zero feature dimension");
    if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");
    if (gamma.rows() != 1 || gamma.cols() != x.cols() || beta.rows() != 1 ||
        beta.cols() != x.cols()) {
        throw DimensionError("layer_norm: gamma/beta must be 1x" + std::to_string(x.cols()));
    }
    Matrix out(x.rows(), x.cols());
    const double d = static_cast<double>(x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto in = x.row(i);
        double mean = 0.0;
        for (double v : in) mean += v;
        mean /= d;
        double var = 0.0;
        for (double v : in) var += (v - mean) * (v - mean);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        auto o = out.row(i);
        for (std::size_t j = 0; j < in.size(); ++j) {
            o[j] = gamma(0, j) * ((in[j] - mean) * inv) + beta(0, j);
        }
    }
    return out;
}

namespace ops {

namespace {
void require_ran(bool ran, const char* op) {
    if (!ran) throw StateError(std::string(op) + ": backward called before forward");
}
} // namespace

Matrix MatMul::forward(const Matrix& a, const Matrix& b) {
    a_ = a;
    b_ = b;
    ran_ = true;
    return matmul(a, b);
}

std::pair<Matrix, Matrix> MatMul::backward(const Matrix& upstream) const {
    require_ran(ran_, "MatMul");
    return {matmul(upstream, transpose(b_)), matmul(transpose(a_), upstream)};
}

Matrix SoftmaxRows::forward(const Matrix& x) {
    out_ = softmax_rows(x);
    ran_ = true;
    return out_;
}

Matrix SoftmaxRows::backward(const Matrix& upstream) const {
    require_ran(ran_, "SoftmaxRows");
    // dx_ij = p_ij * (g_ij - sum_k g_ik p_ik)
    Matrix dx(out_.rows(), out_.cols());
    for (std::size_t i = 0; i < out_.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < out_.cols(); ++j) dot += upstream(i, j) * out_(i, j);
        for (std::size_t j = 0; j < out_.cols(); ++j) {
            dx(i, j) = out_(i, j) * (upstream(i, j) - dot);
        }
    }
    return dx;
}

Matrix Linear::forward(const Matrix& x, const Matrix& w, const Matrix& bias) {
    x_ = x;
    w_ = w;
    ran_ = true;
    return linear(x, w, bias);
}

Linear::Grads Linear::backward(const Matrix& upstream) const {
    require_ran(ran_, "Linear");
    Grads g;
    g.x = matmul(upstream, transpose(w_));
    g.w = matmul(transpose(x_), upstream);
    g.bias = Matrix(1, w_.cols());
    for (std::size_t i = 0; i < upstream.rows(); ++i) {
        for (std::size_t j = 0; j < upstream.cols(); ++j) g.bias(0, j) += upstream(i, j);
    }
    return g;
}

Matrix LayerNorm::forward(const Matrix& x, const Matrix& gamma, const Matrix& beta, double eps) {
    Matrix out = layer_norm(x, gamma, beta, eps);
    const double d = static_cast<double>(x.cols());
    xhat_ = Matrix(x.rows(), x.cols());
    inv_std_.assign(x.rows(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto in = x.row(i);
        double mean = 0.0;
        for (double v : in) mean += v;
        mean /= d;
        double var = 0.0;
        for (double v : in) var += (v - mean) * (v - mean);
        var /= d;
        inv_std_[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < in.size(); ++j) xhat_(i, j) = (in[j] - mean) * inv_std_[i];
    }
    gamma_ = gamma;
    ran_ = true;
    return out;
}

LayerNorm::Grads LayerNorm::backward(const Matrix& upstream) const {
    require_ran(ran_, "LayerNorm");
    const std::size_t n = xhat_.rows(), d = xhat_.cols();
    Grads g;
    g.x = Matrix(n, d);
    g.gamma = Matrix(1, d);
    g.beta = Matrix(1, d);
    for (std::size_t i = 0; i < n; ++i) {
        double mean_h = 0.0, mean_hx = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = upstream(i, j) * gamma_(0, j);
            mean_h += h;
            mean_hx += h * xhat_(i, j);
            g.gamma(0, j) += upstream(i, j) * xhat_(i, j);
            g.beta(0, j) += upstream(i, j);
        }
        mean_h /= static_cast<double>(d);
        mean_hx /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double h = upstream(i, j) * gamma_(0, j);
            g.x(i, j) = inv_std_[i] * (h - mean_h - xhat_(i, j) * mean_hx);
        }
    }
    return g;
}

Matrix Relu::forward(const Matrix& x) {
    x_ = x;
    ran_ = true;
    return relu(x);
}

Matrix Relu::backward(const Matrix& upstream) const {
    require_ran(ran_, "Relu");
    Matrix dx = upstream;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        if (x_.data()[i] <= 0.0) dx.data()[i] = 0.0;
    }
    return dx;
}

Matrix EwiseMul::forward(const Matrix& a, const Matrix& b) {
    a_ = a;
    b_ = b;
    ran_ = true;
    return hadamard(a, b);
}

std::pair<Matrix, Matrix> EwiseMul::backward(const Matrix& upstream) const {
    require_ran(ran_, "EwiseMul");
    return {hadamard(upstream, b_), hadamard(upstream, a_)};
}

Matrix ConcatCols::forward(const Matrix& a, const Matrix& b) {
    a_cols_ = a.cols();
    b_cols_ = b.cols();
    ran_ = true;
    return hstack(a, b);
}

std::pair<Matrix, Matrix> ConcatCols::backward(const Matrix& upstream) const {
    require_ran(ran_, "ConcatCols");
    Matrix ga(upstream.rows(), a_cols_);
    Matrix gb(upstream.rows(), b_cols_);
    for (std::size_t i = 0; i < upstream.rows(); ++i) {
        for (std::size_t j = 0; j < a_cols_; ++j) ga(i, j) = upstream(i, j);
        for (std::size_t j = 0; j < b_cols_; ++j) gb(i, j) = upstream(i, a_cols_ + j);
    }
    return {ga, gb};
}

Matrix Sigmoid::forward(const Matrix& x) {
    out_ = sigmoid(x);
    ran_ = true;
    return out_;
}

Matrix Sigmoid::backward(const Matrix& upstream) const {
    require_ran(ran_, "Sigmoid");
    Matrix dx = upstream;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        const double s = out_.data()[i];
        dx.data()[i] *= s * (1.0 - s);
    }
    return dx;
}

} // namespace ops
} // namespace lstc
