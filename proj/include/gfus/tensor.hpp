#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gfus/errors.hpp"

namespace gfus {

/// Dense row-major f64 array. The one value type of the numerics core.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> shape_, double fill = 0.0);
    Tensor(std::vector<int> shape_, std::vector<double> data_);

    static Tensor scalar(double v);
    static Tensor zeros_like(const Tensor& t);

    std::size_t numel() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }

    int rows() const;
    int cols() const;

    double& at(int r, int c);
    double at(int r, int c) const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;
};

std::string shape_str(const std::vector<int>& shape);

// Plain-tensor helpers used outside the autodiff graph.
Tensor matmul_values(const Tensor& a, const Tensor& b);
Tensor transpose_values(const Tensor& a);

} // namespace gfus
