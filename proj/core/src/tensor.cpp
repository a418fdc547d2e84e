#include "invmm/tensor.hpp"

#include <cmath>
#include <sstream>

#include "invmm/errors.hpp"

namespace invmm {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size()) {
        throw ContractError("tensor data length " + std::to_string(data_.size()) +
                            " does not match shape " + shape_to_string(shape_));
    }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
}

std::size_t Tensor::extent(std::size_t d) const {
    if (d >= shape_.size()) throw ContractError("tensor dimension out of range");
    return shape_[d];
}

std::size_t Tensor::rows() const {
    if (shape_.size() == 2) return shape_[0];
    if (shape_.size() == 1) return 1;
    throw ContractError("rows() needs a rank-1 or rank-2 tensor, got " + shape_str());
}

std::size_t Tensor::cols() const {
    if (shape_.size() == 2) return shape_[1];
    if (shape_.size() == 1) return shape_[0];
    throw ContractError("cols() needs a rank-1 or rank-2 tensor, got " + shape_str());
}

double Tensor::at2(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
double& Tensor::at2(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

double Tensor::item() const {
    if (data_.size() != 1) {
        throw ContractError("item() on non-scalar tensor of shape " + shape_str());
    }
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void require_matrix(const Tensor& t, const char* who) {
    if (t.rank() != 2) {
        throw ContractError(std::string(who) + " needs rank-2 operands, got " + t.shape_str());
    }
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.extent(0), k = a.extent(1), k2 = b.extent(0), n = b.extent(1);
    if (k != k2) {
        throw ContractError("matmul inner extents differ: " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor c({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            const double* brow = pb + p * n;
            double* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(0);
    if (k != b.extent(1)) {
        throw ContractError("matmul_nt inner extents differ: " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor c({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double* arow = pa + i * k;
            const double* brow = pb + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            pc[i * n + j] = acc;
        }
    }
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_tn");
    require_matrix(b, "matmul_tn");
    const std::size_t k = a.extent(0), m = a.extent(1), n = b.extent(1);
    if (k != b.extent(0)) {
        throw ContractError("matmul_tn inner extents differ: " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor c({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = pa + p * m;
        const double* brow = pb + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            double* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

namespace {

enum class Ew { add, sub, mul, div };

Tensor elementwise(const Tensor& a, const Tensor& b, Ew op, const char* name) {
    // Equal shapes, or scalar broadcast on either side; nothing else.
    if (!a.same_shape(b) && !a.is_scalar() && !b.is_scalar()) {
        throw ContractError(std::string(name) + " shape mismatch: " + a.shape_str() + " vs " +
                            b.shape_str());
    }
    const Tensor& big = b.is_scalar() && !a.is_scalar() ? a : (a.is_scalar() && !b.is_scalar() ? b : a);
    Tensor out(big.shape());
    const std::size_t n = out.size();
    const bool sa = a.is_scalar() && n != 1;
    const bool sb = b.is_scalar() && n != 1;
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = sa ? pa[0] : pa[i];
        const double y = sb ? pb[0] : pb[i];
        switch (op) {
            case Ew::add: po[i] = x + y; break;
            case Ew::sub: po[i] = x - y; break;
            case Ew::mul: po[i] = x * y; break;
            case Ew::div: po[i] = x / y; break;
        }
    }
    return out;
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, Ew::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, Ew::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, Ew::mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(a, b, Ew::div, "div"); }

Tensor scale(const Tensor& a, double s) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    return out;
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) {
        throw ContractError("dot length mismatch: " + a.shape_str() + " vs " + b.shape_str());
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double sum_all(const Tensor& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
    return acc;
}

double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double l2_distance(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) {
        throw ContractError("l2_distance length mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

} // namespace invmm
