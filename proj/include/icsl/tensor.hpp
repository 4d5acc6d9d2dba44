#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace icsl {

using Shape = std::vector<int>;

int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of doubles. Activations flow as [N, C, H, W],
// per-channel statistics as [N, C], parameters in their natural layout.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(static_cast<size_t>(numel_of(shape)), 0.0) {}
    Tensor(Shape s, std::vector<double> values);

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, double value);

    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(data.size()); }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    // Rank-4 [N,C,H,W] indexing; used on hot paths only through raw
    // pointers, this accessor is for tests and setup code.
    double& at(int n, int c, int h, int w);
    double at(int n, int c, int h, int w) const;

    void fill(double value);
    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;

    // First flat index holding a non-finite value, or -1.
    int64_t first_nonfinite() const;
};

void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace icsl
