#include "gfus/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace gfus {

namespace {

std::size_t checked_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) {
            throw ShapeError("tensor dimension must be positive, got shape " + shape_str(shape));
        }
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

} // namespace

Tensor::Tensor(std::vector<int> shape_, double fill)
    : shape(std::move(shape_)), data(checked_numel(shape), fill) {}

Tensor::Tensor(std::vector<int> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (checked_numel(shape) != data.size()) {
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::scalar(double v) {
    return Tensor({1}, std::vector<double>{v});
}

Tensor Tensor::zeros_like(const Tensor& t) {
    Tensor out;
    out.shape = t.shape;
    out.data.assign(t.data.size(), 0.0);
    return out;
}

int Tensor::rows() const {
    if (rank() != 2) {
        throw ShapeError("expected rank-2 tensor, got shape " + shape_str(shape));
    }
    return shape[0];
}

int Tensor::cols() const {
    if (rank() != 2) {
        throw ShapeError("expected rank-2 tensor, got shape " + shape_str(shape));
    }
    return shape[1];
}

double& Tensor::at(int r, int c) {
    return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) +
                static_cast<std::size_t>(c)];
}

double Tensor::at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) +
                static_cast<std::size_t>(c)];
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            os << 'x';
        }
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor matmul_values(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0]) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape) + " and " +
                         shape_str(b.shape));
    }
    const int m = a.shape[0];
    const int k = a.shape[1];
    const int n = b.shape[1];
    Tensor c({m, n});
    for (int i = 0; i < m; ++i) {
        const double* arow = &a.data[static_cast<std::size_t>(i) * k];
        double* crow = &c.data[static_cast<std::size_t>(i) * n];
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = &b.data[static_cast<std::size_t>(p) * n];
            for (int j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
    return c;
}

Tensor transpose_values(const Tensor& a) {
    const int m = a.rows();
    const int n = a.cols();
    Tensor t({n, m});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            t.data[static_cast<std::size_t>(j) * m + i] = a.data[static_cast<std::size_t>(i) * n + j];
        }
    }
    return t;
}

} // namespace gfus
