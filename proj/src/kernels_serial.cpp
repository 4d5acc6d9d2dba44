#include <algorithm>

#include "icsl/kernels.hpp"

// Naive reference kernels. Written as the plainest possible nested loops;
// the optimized OpenMP versions are validated against these.
namespace icsl::kernels::serial {

void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec,
                    Tensor& out) {
    const int N = x.dim(0), Ci = x.dim(1), IH = x.dim(2), IW = x.dim(3);
    const int Co = w.dim(0), KH = w.dim(2), KW = w.dim(3);
    const int OH = out.dim(2), OW = out.dim(3);
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Co; ++co) {
            for (int oh = 0; oh < OH; ++oh) {
                for (int ow = 0; ow < OW; ++ow) {
                    double acc = b[co];
                    for (int ci = 0; ci < Ci; ++ci) {
                        for (int kh = 0; kh < KH; ++kh) {
                            for (int kw = 0; kw < KW; ++kw) {
                                const int ih = oh * spec.stride + kh - spec.pad;
                                const int iw = ow * spec.stride + kw - spec.pad;
                                if (ih < 0 || ih >= IH || iw < 0 || iw >= IW) continue;
                                acc += x.at(n, ci, ih, iw) * w.at(co, ci, kh, kw);
                            }
                        }
                    }
                    out.at(n, co, oh, ow) = acc;
                }
            }
        }
    }
}

void conv2d_backward_input(const Tensor& gy, const Tensor& w, const ConvSpec& spec, Tensor& dx) {
    const int N = dx.dim(0), Ci = dx.dim(1), IH = dx.dim(2), IW = dx.dim(3);
    const int Co = w.dim(0), KH = w.dim(2), KW = w.dim(3);
    const int OH = gy.dim(2), OW = gy.dim(3);
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Co; ++co) {
            for (int oh = 0; oh < OH; ++oh) {
                for (int ow = 0; ow < OW; ++ow) {
                    const double g = gy.at(n, co, oh, ow);
                    for (int ci = 0; ci < Ci; ++ci) {
                        for (int kh = 0; kh < KH; ++kh) {
                            for (int kw = 0; kw < KW; ++kw) {
                                const int ih = oh * spec.stride + kh - spec.pad;
                                const int iw = ow * spec.stride + kw - spec.pad;
                                if (ih < 0 || ih >= IH || iw < 0 || iw >= IW) continue;
                                dx.at(n, ci, ih, iw) += g * w.at(co, ci, kh, kw);
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_params(const Tensor& gy, const Tensor& x, const ConvSpec& spec, Tensor& dw,
                            Tensor& db) {
    const int N = x.dim(0), Ci = x.dim(1), IH = x.dim(2), IW = x.dim(3);
    const int Co = dw.dim(0), KH = dw.dim(2), KW = dw.dim(3);
    const int OH = gy.dim(2), OW = gy.dim(3);
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Co; ++co) {
            for (int oh = 0; oh < OH; ++oh) {
                for (int ow = 0; ow < OW; ++ow) {
                    const double g = gy.at(n, co, oh, ow);
                    db[co] += g;
                    for (int ci = 0; ci < Ci; ++ci) {
                        for (int kh = 0; kh < KH; ++kh) {
                            for (int kw = 0; kw < KW; ++kw) {
                                const int ih = oh * spec.stride + kh - spec.pad;
                                const int iw = ow * spec.stride + kw - spec.pad;
                                if (ih < 0 || ih >= IH || iw < 0 || iw >= IW) continue;
                                dw.at(co, ci, kh, kw) += g * x.at(n, ci, ih, iw);
                            }
                        }
                    }
                }
            }
        }
    }
}

namespace {
void src_coord(int o, int factor, int in, int& lo, int& hi, double& t) {
    double s = (o + 0.5) / factor - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    lo = static_cast<int>(s);
    hi = std::min(lo + 1, in - 1);
    t = s - lo;
}
}  // namespace

void upsample_bilinear_forward(const Tensor& x, int factor, Tensor& out) {
    const int N = x.dim(0), C = x.dim(1), IH = x.dim(2), IW = x.dim(3);
    const int OH = out.dim(2), OW = out.dim(3);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            for (int oh = 0; oh < OH; ++oh) {
                int yl, yh;
                double wy;
                src_coord(oh, factor, IH, yl, yh, wy);
                for (int ow = 0; ow < OW; ++ow) {
                    int xl, xh;
                    double wx;
                    src_coord(ow, factor, IW, xl, xh, wx);
                    const double top =
                        x.at(n, c, yl, xl) + wx * (x.at(n, c, yl, xh) - x.at(n, c, yl, xl));
                    const double bot =
                        x.at(n, c, yh, xl) + wx * (x.at(n, c, yh, xh) - x.at(n, c, yh, xl));
                    out.at(n, c, oh, ow) = top + wy * (bot - top);
                }
            }
        }
    }
}

void upsample_bilinear_backward(const Tensor& gy, int factor, Tensor& dx) {
    const int N = dx.dim(0), C = dx.dim(1), IH = dx.dim(2), IW = dx.dim(3);
    const int OH = gy.dim(2), OW = gy.dim(3);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            for (int oh = 0; oh < OH; ++oh) {
                int yl, yh;
                double wy;
                src_coord(oh, factor, IH, yl, yh, wy);
                for (int ow = 0; ow < OW; ++ow) {
                    int xl, xh;
                    double wx;
                    src_coord(ow, factor, IW, xl, xh, wx);
                    const double g = gy.at(n, c, oh, ow);
                    dx.at(n, c, yl, xl) += (1 - wy) * (1 - wx) * g;
                    dx.at(n, c, yl, xh) += (1 - wy) * wx * g;
                    dx.at(n, c, yh, xl) += wy * (1 - wx) * g;
                    dx.at(n, c, yh, xh) += wy * wx * g;
                }
            }
        }
    }
}

}  // namespace icsl::kernels::serial
