#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gfcl {

/// Dense row-major tensor of doubles. Everything in this project is rank 1
/// or rank 2; double precision throughout so finite-difference checks stay
/// meaningful.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_)) {
            throw std::invalid_argument("Tensor: data length does not match shape");
        }
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor vector(std::vector<double> data) {
        const std::size_t n = data.size();
        return Tensor({n}, std::move(data));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
        return Tensor({rows, cols}, std::move(data));
    }

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    static Tensor filled(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool defined() const { return !shape_.empty(); }

    std::size_t rows() const {
        require_rank2("rows");
        return shape_[0];
    }
    std::size_t cols() const {
        require_rank2("cols");
        return shape_[1];
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t r, std::size_t c) {
        require_rank2("at");
        return data_[r * shape_[1] + c];
    }
    double at(std::size_t r, std::size_t c) const {
        require_rank2("at");
        return data_[r * shape_[1] + c];
    }

    const double* row_ptr(std::size_t r) const { return data_.data() + r * shape_[1]; }
    double* row_ptr(std::size_t r) { return data_.data() + r * shape_[1]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (const double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    double norm() const {
        double s = 0.0;
        for (const double v : data_) s += v * v;
        return std::sqrt(s);
    }

    Tensor reshaped(std::vector<std::size_t> shape) const {
        if (count(shape) != data_.size()) {
            throw std::invalid_argument("Tensor::reshaped: element count mismatch");
        }
        return Tensor(std::move(shape), data_);
    }

private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        if (shape.empty()) return 0;
        std::size_t n = 1;
        for (const std::size_t d : shape) n *= d;
        return n;
    }

    void require_rank2(const char* what) const {
        if (shape_.size() != 2) {
            throw std::invalid_argument(std::string("Tensor::") + what + ": rank-2 tensor required");
        }
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

inline bool exactly_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && a.values() == b.values();
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

/// C = A * B
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: incompatible shapes");
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.row_ptr(i);
        double* crow = c.row_ptr(i);
        for (std::size_t t = 0; t < k; ++t) {
            const double av = arow[t];
            if (av == 0.0) continue;
            const double* brow = b.row_ptr(t);
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

/// C = A * B^T
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
        throw std::invalid_argument("matmul_nt: incompatible shapes");
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.row_ptr(i);
        double* crow = c.row_ptr(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b.row_ptr(j);
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) s += arow[t] * brow[t];
            crow[j] = s;
        }
    }
    return c;
}

/// C = A^T * B
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows()) {
        throw std::invalid_argument("matmul_tn: incompatible shapes");
    }
    const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
    Tensor c({m, n});
    for (std::size_t t = 0; t < k; ++t) {
        const double* arow = a.row_ptr(t);
        const double* brow = b.row_ptr(t);
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c.row_ptr(i);
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

inline void axpy(double alpha, const Tensor& x, Tensor& y) {
    if (!x.same_shape(y)) throw std::invalid_argument("axpy: shape mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace gfcl
