#include "icsl/tensor.hpp"

#include <cmath>
#include <sstream>

#include "icsl/errors.hpp"

namespace icsl {

int64_t numel_of(const Shape& shape) {
    int64_t n = 1;
    for (int d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape)) {
        throw ShapeError("tensor data size " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::full(Shape s, double value) {
    Tensor t(std::move(s));
    t.fill(value);
    return t;
}

double& Tensor::at(int n, int c, int h, int w) {
    const int64_t idx = ((static_cast<int64_t>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w;
    return data[static_cast<size_t>(idx)];
}

double Tensor::at(int n, int c, int h, int w) const {
    const int64_t idx = ((static_cast<int64_t>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w;
    return data[static_cast<size_t>(idx)];
}

void Tensor::fill(double value) {
    for (double& x : data) {
        x = value;
    }
}

bool Tensor::all_finite() const { return first_nonfinite() < 0; }

int64_t Tensor::first_nonfinite() const {
    for (size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i])) {
            return static_cast<int64_t>(i);
        }
    }
    return -1;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    }
}

}  // namespace icsl
