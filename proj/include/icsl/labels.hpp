#pragma once

#include <cstdint>
#include <vector>

namespace icsl {

// Integer label image, row-major [H, W].
struct Mask {
    int h = 0;
    int w = 0;
    std::vector<int32_t> v;

    Mask() = default;
    Mask(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0) {}

    int32_t& at(int i, int j) { return v[static_cast<size_t>(i) * w + j]; }
    int32_t at(int i, int j) const { return v[static_cast<size_t>(i) * w + j]; }
};

// Batch of label images, [N, H, W].
struct MaskBatch {
    int n = 0;
    int h = 0;
    int w = 0;
    std::vector<int32_t> v;

    MaskBatch() = default;
    MaskBatch(int n_, int h_, int w_) : n(n_), h(h_), w(w_), v(static_cast<size_t>(n_) * h_ * w_, 0) {}

    int32_t& at(int s, int i, int j) { return v[(static_cast<size_t>(s) * h + i) * w + j]; }
    int32_t at(int s, int i, int j) const { return v[(static_cast<size_t>(s) * h + i) * w + j]; }
};

}  // namespace icsl
