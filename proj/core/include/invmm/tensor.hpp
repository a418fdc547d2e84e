#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace invmm {

/// Dense row-major tensor of 64-bit floats. Shapes are explicit; the only
/// implicit broadcast anywhere in the library is scalar-vs-tensor.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double v);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool is_scalar() const { return data_.size() == 1; }
    std::size_t rank() const { return shape_.size(); }

    /// Extent along dimension `d`.
    std::size_t extent(std::size_t d) const;
    /// Rows/cols of a rank-2 tensor (rank-1 is treated as a single row).
    std::size_t rows() const;
    std::size_t cols() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& vec() const { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double at2(std::size_t r, std::size_t c) const;
    double& at2(std::size_t r, std::size_t c);

    /// Scalar payload; throws ContractError unless size() == 1.
    double item() const;

    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// Plain (non-differentiable) kernels shared by the graph ops and the
// samplers. Shape contracts throw ContractError.
Tensor matmul(const Tensor& a, const Tensor& b);
// C = A * B^T and C = A^T * B; used by matmul's backward pass.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

double dot(const Tensor& a, const Tensor& b);
double sum_all(const Tensor& a);
double l2_norm(const Tensor& a);
double l2_distance(const Tensor& a, const Tensor& b);

std::string shape_to_string(const std::vector<std::size_t>& shape);

} // namespace invmm
