#pragma once

#include "icsl/tensor.hpp"

// Dense compute kernels behind the autograd ops. Every kernel exists twice:
// an OpenMP-parallel version (namespace kernels) and a naive serial
// reference (namespace kernels::serial) used by the equivalence tests and
// the bench_kernels target. The parallel versions partition work so that
// each output element is produced by exactly one thread with a fixed inner
// accumulation order, making results independent of thread count.
namespace icsl::kernels {

// Process-wide dispatch switch; true by default.
void set_parallel(bool enabled);
bool parallel_enabled();

struct ConvSpec {
    int stride = 1;
    int pad = 0;
};

// x: [N,Ci,H,W], w: [Co,Ci,Kh,Kw], b: [Co] -> out: [N,Co,Oh,Ow]
void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec,
                    Tensor& out);
// Accumulates (+=) into dx.
void conv2d_backward_input(const Tensor& gy, const Tensor& w, const ConvSpec& spec, Tensor& dx);
// Accumulates (+=) into dw and db.
void conv2d_backward_params(const Tensor& gy, const Tensor& x, const ConvSpec& spec, Tensor& dw,
                            Tensor& db);

// Bilinear upsampling by an integer factor, half-pixel centers.
void upsample_bilinear_forward(const Tensor& x, int factor, Tensor& out);
void upsample_bilinear_backward(const Tensor& gy, int factor, Tensor& dx);

int conv_out_dim(int in, int kernel, int stride, int pad);

namespace serial {
void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec,
                    Tensor& out);
void conv2d_backward_input(const Tensor& gy, const Tensor& w, const ConvSpec& spec, Tensor& dx);
void conv2d_backward_params(const Tensor& gy, const Tensor& x, const ConvSpec& spec, Tensor& dw,
                            Tensor& db);
void upsample_bilinear_forward(const Tensor& x, int factor, Tensor& out);
void upsample_bilinear_backward(const Tensor& gy, int factor, Tensor& dx);
}  // namespace serial

}  // namespace icsl::kernels
