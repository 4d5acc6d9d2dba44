#include "icsl/kernels.hpp"

#include <algorithm>
#include <atomic>

#include "icsl/errors.hpp"

namespace icsl::kernels {

namespace {
std::atomic<bool> g_parallel{true};

struct UpsampleTable {
    // For each output coordinate: low source index, high source index, weight
    // of the high neighbor. Half-pixel centers, clamped at the borders.
    std::vector<int> lo, hi;
    std::vector<double> t;
};

UpsampleTable make_table(int in, int factor) {
    const int out = in * factor;
    UpsampleTable tab;
    tab.lo.resize(static_cast<size_t>(out));
    tab.hi.resize(static_cast<size_t>(out));
    tab.t.resize(static_cast<size_t>(out));
    for (int o = 0; o < out; ++o) {
        double s = (o + 0.5) / factor - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(in - 1));
        const int lo = static_cast<int>(s);
        const int hi = std::min(lo + 1, in - 1);
        tab.lo[static_cast<size_t>(o)] = lo;
        tab.hi[static_cast<size_t>(o)] = hi;
        tab.t[static_cast<size_t>(o)] = s - lo;
    }
    return tab;
}
}  // namespace

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

int conv_out_dim(int in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec,
                    Tensor& out) {
    const int N = x.dim(0), Ci = x.dim(1), IH = x.dim(2), IW = x.dim(3);
    const int Co = w.dim(0), KH = w.dim(2), KW = w.dim(3);
    const int OH = out.dim(2), OW = out.dim(3);
    const int s = spec.stride, p = spec.pad;
    const double* xp = x.ptr();
    const double* wp = w.ptr();
    const double* bp = b.ptr();
    double* op = out.ptr();
    const bool par = g_parallel.load();

#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Co; ++co) {
            double* obase = op + (static_cast<int64_t>(n) * Co + co) * OH * OW;
            std::fill(obase, obase + static_cast<int64_t>(OH) * OW, bp[co]);
            for (int ci = 0; ci < Ci; ++ci) {
                const double* xbase = xp + (static_cast<int64_t>(n) * Ci + ci) * IH * IW;
                const double* wbase = wp + ((static_cast<int64_t>(co) * Ci + ci) * KH) * KW;
                for (int kh = 0; kh < KH; ++kh) {
                    for (int kw = 0; kw < KW; ++kw) {
                        const double wv = wbase[kh * KW + kw];
                        // Valid output column range for this tap.
                        int ow_lo = 0, ow_hi = OW;
                        while (ow_lo < OW && ow_lo * s + kw - p < 0) ++ow_lo;
                        while (ow_hi > ow_lo && (ow_hi - 1) * s + kw - p >= IW) --ow_hi;
                        for (int oh = 0; oh < OH; ++oh) {
                            const int ih = oh * s + kh - p;
                            if (ih < 0 || ih >= IH) continue;
                            const double* xrow = xbase + static_cast<int64_t>(ih) * IW + (kw - p);
                            double* orow = obase + static_cast<int64_t>(oh) * OW;
                            for (int ow = ow_lo; ow < ow_hi; ++ow) {
                                orow[ow] += wv * xrow[ow * s];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_input(const Tensor& gy, const Tensor& w, const ConvSpec& spec, Tensor& dx) {
    const int N = dx.dim(0), Ci = dx.dim(1), IH = dx.dim(2), IW = dx.dim(3);
    const int Co = w.dim(0), KH = w.dim(2), KW = w.dim(3);
    const int OH = gy.dim(2), OW = gy.dim(3);
    const int s = spec.stride, p = spec.pad;
    const double* gp = gy.ptr();
    const double* wp = w.ptr();
    double* dp = dx.ptr();
    const bool par = g_parallel.load();

#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int n = 0; n < N; ++n) {
        for (int ci = 0; ci < Ci; ++ci) {
            double* dbase = dp + (static_cast<int64_t>(n) * Ci + ci) * IH * IW;
            for (int co = 0; co < Co; ++co) {
                const double* gbase = gp + (static_cast<int64_t>(n) * Co + co) * OH * OW;
                const double* wbase = wp + ((static_cast<int64_t>(co) * Ci + ci) * KH) * KW;
                for (int kh = 0; kh < KH; ++kh) {
                    for (int kw = 0; kw < KW; ++kw) {
                        const double wv = wbase[kh * KW + kw];
                        int ow_lo = 0, ow_hi = OW;
                        while (ow_lo < OW && ow_lo * s + kw - p < 0) ++ow_lo;
                        while (ow_hi > ow_lo && (ow_hi - 1) * s + kw - p >= IW) --ow_hi;
                        for (int oh = 0; oh < OH; ++oh) {
                            const int ih = oh * s + kh - p;
                            if (ih < 0 || ih >= IH) continue;
                            const double* grow = gbase + static_cast<int64_t>(oh) * OW;
                            double* drow = dbase + static_cast<int64_t>(ih) * IW + (kw - p);
                            for (int ow = ow_lo; ow < ow_hi; ++ow) {
                                drow[ow * s] += wv * grow[ow];
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
    const int s = spec.stride, p = spec.pad;
    const double* gp = gy.ptr();
    const double* xp = x.ptr();
    double* dwp = dw.ptr();
    double* dbp = db.ptr();
    const bool par = g_parallel.load();

#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int co = 0; co < Co; ++co) {
        for (int ci = 0; ci < Ci; ++ci) {
            double* dwbase = dwp + ((static_cast<int64_t>(co) * Ci + ci) * KH) * KW;
            for (int kh = 0; kh < KH; ++kh) {
                for (int kw = 0; kw < KW; ++kw) {
                    int ow_lo = 0, ow_hi = OW;
                    while (ow_lo < OW && ow_lo * s + kw - p < 0) ++ow_lo;
                    while (ow_hi > ow_lo && (ow_hi - 1) * s + kw - p >= IW) --ow_hi;
                    double acc = 0.0;
                    for (int n = 0; n < N; ++n) {
                        const double* gbase = gp + (static_cast<int64_t>(n) * Co + co) * OH * OW;
                        const double* xbase = xp + (static_cast<int64_t>(n) * Ci + ci) * IH * IW;
                        for (int oh = 0; oh < OH; ++oh) {
                            const int ih = oh * s + kh - p;
                            if (ih < 0 || ih >= IH) continue;
                            const double* grow = gbase + static_cast<int64_t>(oh) * OW;
                            const double* xrow = xbase + static_cast<int64_t>(ih) * IW + (kw - p);
                            for (int ow = ow_lo; ow < ow_hi; ++ow) {
                                acc += grow[ow] * xrow[ow * s];
                            }
                        }
                    }
                    dwbase[kh * KW + kw] += acc;
                }
            }
        }
    }

#pragma omp parallel for schedule(static) if (par)
    for (int co = 0; co < Co; ++co) {
        double acc = 0.0;
        for (int n = 0; n < N; ++n) {
            const double* gbase = gp + (static_cast<int64_t>(n) * Co + co) * OH * OW;
            for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i) {
                acc += gbase[i];
            }
        }
        dbp[co] += acc;
    }
}

void upsample_bilinear_forward(const Tensor& x, int factor, Tensor& out) {
    const int N = x.dim(0), C = x.dim(1), IH = x.dim(2), IW = x.dim(3);
    const int OH = out.dim(2), OW = out.dim(3);
    const UpsampleTable ty = make_table(IH, factor);
    const UpsampleTable tx = make_table(IW, factor);
    const double* xp = x.ptr();
    double* op = out.ptr();
    const bool par = g_parallel.load();

#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double* xbase = xp + (static_cast<int64_t>(n) * C + c) * IH * IW;
            double* obase = op + (static_cast<int64_t>(n) * C + c) * OH * OW;
            for (int oh = 0; oh < OH; ++oh) {
                const double* r0 = xbase + static_cast<int64_t>(ty.lo[oh]) * IW;
                const double* r1 = xbase + static_cast<int64_t>(ty.hi[oh]) * IW;
                const double wy = ty.t[oh];
                double* orow = obase + static_cast<int64_t>(oh) * OW;
                for (int ow = 0; ow < OW; ++ow) {
                    const int xl = tx.lo[ow], xh = tx.hi[ow];
                    const double wx = tx.t[ow];
                    const double top = r0[xl] + wx * (r0[xh] - r0[xl]);
                    const double bot = r1[xl] + wx * (r1[xh] - r1[xl]);
                    orow[ow] = top + wy * (bot - top);
                }
            }
        }
    }
}

void upsample_bilinear_backward(const Tensor& gy, int factor, Tensor& dx) {
    const int N = dx.dim(0), C = dx.dim(1), IH = dx.dim(2), IW = dx.dim(3);
    const int OH = gy.dim(2), OW = gy.dim(3);
    const UpsampleTable ty = make_table(IH, factor);
    const UpsampleTable tx = make_table(IW, factor);
    const double* gp = gy.ptr();
    double* dp = dx.ptr();
    const bool par = g_parallel.load();

#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double* gbase = gp + (static_cast<int64_t>(n) * C + c) * OH * OW;
            double* dbase = dp + (static_cast<int64_t>(n) * C + c) * IH * IW;
            for (int oh = 0; oh < OH; ++oh) {
                const int yl = ty.lo[oh], yh = ty.hi[oh];
                const double wy = ty.t[oh];
                const double* grow = gbase + static_cast<int64_t>(oh) * OW;
                for (int ow = 0; ow < OW; ++ow) {
                    const int xl = tx.lo[ow], xh = tx.hi[ow];
                    const double wx = tx.t[ow];
                    const double g = grow[ow];
                    dbase[static_cast<int64_t>(yl) * IW + xl] += (1 - wy) * (1 - wx) * g;
                    dbase[static_cast<int64_t>(yl) * IW + xh] += (1 - wy) * wx * g;
                    dbase[static_cast<int64_t>(yh) * IW + xl] += wy * (1 - wx) * g;
                    dbase[static_cast<int64_t>(yh) * IW + xh] += wy * wx * g;
                }
            }
        }
    }
}

}  // namespace icsl::kernels
