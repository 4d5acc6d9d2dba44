#include "icsl/ops.hpp"

#include <algorithm>
#include <cmath>

#include "icsl/errors.hpp"

namespace icsl::ops {

namespace {

void check_rank4(const Variable& x, const char* what) {
    if (x.value().rank() != 4) {
        throw ShapeError(std::string(what) + ": expected rank-4 input, got " +
                         shape_str(x.value().shape));
    }
}

int64_t batch_stride(const Tensor& t) { return t.numel() / t.dim(0); }

}  // namespace

Variable add(const Variable& a, const Variable& b) {
    check_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    const double* bp = b.value().ptr();
    for (int64_t i = 0; i < out.numel(); ++i) {
        out[i] += bp[i];
    }
    return make_op(std::move(out), {a, b}, [](Node& self) {
        const Tensor& g = self.grad;
        for (int k = 0; k < 2; ++k) {
            if (!self.parents[k]->requires_grad) continue;
            Tensor& pg = self.parents[k]->ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) {
                pg[i] += g[i];
            }
        }
    }, "add");
}

Variable sub(const Variable& a, const Variable& b) {
    check_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    const double* bp = b.value().ptr();
    for (int64_t i = 0; i < out.numel(); ++i) {
        out[i] -= bp[i];
    }
    return make_op(std::move(out), {a, b}, [](Node& self) {
        const Tensor& g = self.grad;
        if (self.parents[0]->requires_grad) {
            Tensor& pg = self.parents[0]->ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) pg[i] += g[i];
        }
        if (self.parents[1]->requires_grad) {
            Tensor& pg = self.parents[1]->ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) pg[i] -= g[i];
        }
    }, "sub");
}

Variable mul(const Variable& a, const Variable& b) {
    check_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    const double* bp = b.value().ptr();
    for (int64_t i = 0; i < out.numel(); ++i) {
        out[i] *= bp[i];
    }
    return make_op(std::move(out), {a, b}, [](Node& self) {
        const Tensor& g = self.grad;
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        if (self.parents[0]->requires_grad) {
            Tensor& pg = self.parents[0]->ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) pg[i] += g[i] * bv[i];
        }
        if (self.parents[1]->requires_grad) {
            Tensor& pg = self.parents[1]->ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) pg[i] += g[i] * av[i];
        }
    }, "mul");
}

Variable scale(const Variable& a, double k) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) {
        out[i] *= k;
    }
    return make_op(std::move(out), {a}, [k](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        const Tensor& g = self.grad;
        for (int64_t i = 0; i < g.numel(); ++i) pg[i] += k * g[i];
    }, "scale");
}

Variable relu(const Variable& a) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) {
        out[i] = out[i] > 0.0 ? out[i] : 0.0;
    }
    return make_op(std::move(out), {a}, [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        const Tensor& g = self.grad;
        const Tensor& x = self.parents[0]->value;
        for (int64_t i = 0; i < g.numel(); ++i) {
            if (x[i] > 0.0) pg[i] += g[i];
        }
    }, "relu");
}

Variable sigmoid(const Variable& a) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) {
        out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    }
    return make_op(std::move(out), {a}, [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        const Tensor& g = self.grad;
        const Tensor& y = self.value;
        for (int64_t i = 0; i < g.numel(); ++i) {
            pg[i] += g[i] * y[i] * (1.0 - y[i]);
        }
    }, "sigmoid");
}

Variable sum(const Variable& a) {
    double s = 0.0;
    for (int64_t i = 0; i < a.value().numel(); ++i) {
        s += a.value()[i];
    }
    return make_op(Tensor({1}, {s}), {a}, [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        const double g = self.grad[0];
        for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += g;
    }, "sum");
}

Variable mean(const Variable& a) {
    const double inv = 1.0 / static_cast<double>(a.value().numel());
    return scale(sum(a), inv);
}

Variable reshape(const Variable& a, Shape new_shape) {
    if (numel_of(new_shape) != a.value().numel()) {
        throw ShapeError("reshape: numel mismatch " + shape_str(a.value().shape) + " -> " +
                         shape_str(new_shape));
    }
    Tensor out(std::move(new_shape), a.value().data);
    return make_op(std::move(out), {a}, [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        const Tensor& g = self.grad;
        for (int64_t i = 0; i < g.numel(); ++i) pg[i] += g[i];
    }, "reshape");
}

Variable concat_batch(const Variable& a, const Variable& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != bv.rank() || av.rank() < 1) {
        throw ShapeError("concat_batch: rank mismatch");
    }
    for (int i = 1; i < av.rank(); ++i) {
        if (av.dim(i) != bv.dim(i)) {
            throw ShapeError("concat_batch: trailing dims differ: " + shape_str(av.shape) +
                             " vs " + shape_str(bv.shape));
        }
    }
    Shape oshape = av.shape;
    oshape[0] = av.dim(0) + bv.dim(0);
    Tensor out(oshape);
    std::copy(av.data.begin(), av.data.end(), out.data.begin());
    std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.numel());
    return make_op(std::move(out), {a, b}, [](Node& self) {
        const Tensor& g = self.grad;
        const int64_t na = self.parents[0]->value.numel();
        if (self.parents[0]->requires_grad) {
            Tensor& pg = self.parents[0]->ensure_grad();
            for (int64_t i = 0; i < na; ++i) pg[i] += g[i];
        }
        if (self.parents[1]->requires_grad) {
            Tensor& pg = self.parents[1]->ensure_grad();
            for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += g[na + i];
        }
    }, "concat_batch");
}

Variable slice_batch(const Variable& a, int from, int count) {
    const Tensor& av = a.value();
    if (from < 0 || count < 0 || from + count > av.dim(0)) {
        throw ShapeError("slice_batch: range [" + std::to_string(from) + "," +
                         std::to_string(from + count) + ") out of batch " +
                         std::to_string(av.dim(0)));
    }
    const int64_t stride = batch_stride(av);
    Shape oshape = av.shape;
    oshape[0] = count;
    Tensor out(oshape);
    std::copy(av.data.begin() + from * stride, av.data.begin() + (from + count) * stride,
              out.data.begin());
    return make_op(std::move(out), {a}, [from, stride](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        const Tensor& g = self.grad;
        const int64_t off = from * stride;
        for (int64_t i = 0; i < g.numel(); ++i) pg[off + i] += g[i];
    }, "slice_batch");
}

Variable concat_channels(const Variable& a, const Variable& b) {
    check_rank4(a, "concat_channels");
    check_rank4(b, "concat_channels");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3)) {
        throw ShapeError("concat_channels: incompatible shapes " + shape_str(av.shape) + " vs " +
                         shape_str(bv.shape));
    }
    const int N = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), H = av.dim(2), W = av.dim(3);
    const int64_t hw = static_cast<int64_t>(H) * W;
    Tensor out({N, Ca + Cb, H, W});
    for (int n = 0; n < N; ++n) {
        std::copy_n(av.ptr() + n * Ca * hw, Ca * hw, out.ptr() + static_cast<int64_t>(n) * (Ca + Cb) * hw);
        std::copy_n(bv.ptr() + n * Cb * hw, Cb * hw,
                    out.ptr() + static_cast<int64_t>(n) * (Ca + Cb) * hw + Ca * hw);
    }
    return make_op(std::move(out), {a, b}, [N, Ca, Cb, hw](Node& self) {
        const Tensor& g = self.grad;
        if (self.parents[0]->requires_grad) {
            Tensor& pg = self.parents[0]->ensure_grad();
            for (int n = 0; n < N; ++n) {
                const double* gp = g.ptr() + static_cast<int64_t>(n) * (Ca + Cb) * hw;
                double* pp = pg.ptr() + static_cast<int64_t>(n) * Ca * hw;
                for (int64_t i = 0; i < Ca * hw; ++i) pp[i] += gp[i];
            }
        }
        if (self.parents[1]->requires_grad) {
            Tensor& pg = self.parents[1]->ensure_grad();
            for (int n = 0; n < N; ++n) {
                const double* gp = g.ptr() + static_cast<int64_t>(n) * (Ca + Cb) * hw + Ca * hw;
                double* pp = pg.ptr() + static_cast<int64_t>(n) * Cb * hw;
                for (int64_t i = 0; i < Cb * hw; ++i) pp[i] += gp[i];
            }
        }
    }, "concat_channels");
}

Variable conv2d(const Variable& x, const Variable& w, const Variable& b,
                const kernels::ConvSpec& spec) {
    check_rank4(x, "conv2d");
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    if (wv.rank() != 4 || wv.dim(1) != xv.dim(1)) {
        throw ShapeError("conv2d: weight " + shape_str(wv.shape) + " incompatible with input " +
                         shape_str(xv.shape));
    }
    if (b.value().numel() != wv.dim(0)) {
        throw ShapeError("conv2d: bias size mismatch");
    }
    const int oh = kernels::conv_out_dim(xv.dim(2), wv.dim(2), spec.stride, spec.pad);
    const int ow = kernels::conv_out_dim(xv.dim(3), wv.dim(3), spec.stride, spec.pad);
    if (oh < 1 || ow < 1) {
        throw ShapeError("conv2d: output would be empty for input " + shape_str(xv.shape));
    }
    Tensor out({xv.dim(0), wv.dim(0), oh, ow});
    kernels::conv2d_forward(xv, wv, b.value(), spec, out);
    return make_op(std::move(out), {x, w, b}, [spec](Node& self) {
        const Tensor& g = self.grad;
        Node& xn = *self.parents[0];
        Node& wn = *self.parents[1];
        Node& bn = *self.parents[2];
        if (xn.requires_grad) {
            kernels::conv2d_backward_input(g, wn.value, spec, xn.ensure_grad());
        }
        if (wn.requires_grad || bn.requires_grad) {
            kernels::conv2d_backward_params(g, xn.value, spec, wn.ensure_grad(), bn.ensure_grad());
        }
    }, "conv2d");
}

Variable upsample_bilinear(const Variable& x, int factor) {
    check_rank4(x, "upsample_bilinear");
    if (factor < 1) {
        throw ShapeError("upsample_bilinear: factor must be >= 1");
    }
    const Tensor& xv = x.value();
    Tensor out({xv.dim(0), xv.dim(1), xv.dim(2) * factor, xv.dim(3) * factor});
    kernels::upsample_bilinear_forward(xv, factor, out);
    return make_op(std::move(out), {x}, [factor](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        kernels::upsample_bilinear_backward(self.grad, factor, self.parents[0]->ensure_grad());
    }, "upsample_bilinear");
}

Variable global_avg_pool(const Variable& x) {
    check_rank4(x, "global_avg_pool");
    const Tensor& xv = x.value();
    const int N = xv.dim(0), C = xv.dim(1);
    const int64_t hw = static_cast<int64_t>(xv.dim(2)) * xv.dim(3);
    Tensor out({N, C});
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double* p = xv.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
            double s = 0.0;
            for (int64_t i = 0; i < hw; ++i) s += p[i];
            out[static_cast<int64_t>(n) * C + c] = s / static_cast<double>(hw);
        }
    }
    return make_op(std::move(out), {x}, [N, C, hw](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        const Tensor& g = self.grad;
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                const double gv = g[static_cast<int64_t>(n) * C + c] / static_cast<double>(hw);
                double* p = pg.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
                for (int64_t i = 0; i < hw; ++i) p[i] += gv;
            }
        }
    }, "global_avg_pool");
}

Variable softmax_channels(const Variable& x) {
    check_rank4(x, "softmax_channels");
    const Tensor& xv = x.value();
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int64_t hw = static_cast<int64_t>(H) * W;
    Tensor out(xv.shape);
    const double* xp = xv.ptr();
    double* op = out.ptr();
    const bool par = kernels::parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
    for (int n = 0; n < N; ++n) {
        const double* xb = xp + static_cast<int64_t>(n) * C * hw;
        double* ob = op + static_cast<int64_t>(n) * C * hw;
        for (int64_t i = 0; i < hw; ++i) {
            double mx = xb[i];
            for (int c = 1; c < C; ++c) mx = std::max(mx, xb[c * hw + i]);
            double z = 0.0;
            for (int c = 0; c < C; ++c) {
                const double e = std::exp(xb[c * hw + i] - mx);
                ob[c * hw + i] = e;
                z += e;
            }
            const double inv = 1.0 / z;
            for (int c = 0; c < C; ++c) ob[c * hw + i] *= inv;
        }
    }
    return make_op(std::move(out), {x}, [N, C, hw](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        const Tensor& g = self.grad;
        const Tensor& y = self.value;
        const bool par2 = kernels::parallel_enabled();
#pragma omp parallel for schedule(static) if (par2)
        for (int n = 0; n < N; ++n) {
            const double* yb = y.ptr() + static_cast<int64_t>(n) * C * hw;
            const double* gb = g.ptr() + static_cast<int64_t>(n) * C * hw;
            double* pb = pg.ptr() + static_cast<int64_t>(n) * C * hw;
            for (int64_t i = 0; i < hw; ++i) {
                double dot = 0.0;
                for (int c = 0; c < C; ++c) dot += gb[c * hw + i] * yb[c * hw + i];
                for (int c = 0; c < C; ++c) {
                    pb[c * hw + i] += yb[c * hw + i] * (gb[c * hw + i] - dot);
                }
            }
        }
    }, "softmax_channels");
}

Variable reverse_gradient(const Variable& x, double coefficient) {
    if (coefficient < 0.0) {
        throw NumericError("reverse_gradient: coefficient must be >= 0");
    }
    Tensor out = x.value();
    return make_op(std::move(out), {x}, [coefficient](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        const Tensor& g = self.grad;
        for (int64_t i = 0; i < g.numel(); ++i) pg[i] -= coefficient * g[i];
    }, "reverse_gradient");
}

Variable batchnorm2d(const Variable& x, const Variable& gamma, const Variable& beta,
                     Tensor& running_mean, Tensor& running_var, bool training, double momentum,
                     double eps) {
    check_rank4(x, "batchnorm2d");
    const Tensor& xv = x.value();
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int64_t hw = static_cast<int64_t>(H) * W;
    const int64_t m = static_cast<int64_t>(N) * hw;
    if (gamma.value().numel() != C || beta.value().numel() != C || running_mean.numel() != C ||
        running_var.numel() != C) {
        throw ShapeError("batchnorm2d: parameter size mismatch for C=" + std::to_string(C));
    }

    Tensor mu({C}), invstd({C});
    if (training) {
        const bool par = kernels::parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (int n = 0; n < N; ++n) {
                const double* p = xv.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
                for (int64_t i = 0; i < hw; ++i) s += p[i];
            }
            const double mean_c = s / static_cast<double>(m);
            double v = 0.0;
            for (int n = 0; n < N; ++n) {
                const double* p = xv.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
                for (int64_t i = 0; i < hw; ++i) {
                    const double d = p[i] - mean_c;
                    v += d * d;
                }
            }
            const double var_c = v / static_cast<double>(m);
            mu[c] = mean_c;
            invstd[c] = 1.0 / std::sqrt(var_c + eps);
            running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean_c;
            running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var_c;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mu[c] = running_mean[c];
            invstd[c] = 1.0 / std::sqrt(running_var[c] + eps);
        }
    }

    Tensor out(xv.shape);
    {
        const bool par = kernels::parallel_enabled();
#pragma omp parallel for collapse(2) schedule(static) if (par)
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                const double* p = xv.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
                double* o = out.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
                const double gm = gamma.value()[c], bt = beta.value()[c];
                const double mc = mu[c], is = invstd[c];
                for (int64_t i = 0; i < hw; ++i) {
                    o[i] = gm * (p[i] - mc) * is + bt;
                }
            }
        }
    }

    return make_op(std::move(out), {x, gamma, beta},
                   [N, C, hw, m, mu, invstd, training](Node& self) {
        const Tensor& g = self.grad;
        const Tensor& xval = self.parents[0]->value;
        const Tensor& gam = self.parents[1]->value;
        Node& xn = *self.parents[0];
        Node& gn = *self.parents[1];
        Node& bn = *self.parents[2];
        const bool par = kernels::parallel_enabled();

        if (training) {
            // d_beta, d_gamma, and the batch-statistics chain for dx.
            Tensor gsum({C}), gdotx({C});
            for (int c = 0; c < C; ++c) {
                double sg = 0.0, sgx = 0.0;
                for (int n = 0; n < N; ++n) {
                    const double* gp = g.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
                    const double* xp = xval.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
                    for (int64_t i = 0; i < hw; ++i) {
                        sg += gp[i];
                        sgx += gp[i] * (xp[i] - mu[c]) * invstd[c];
                    }
                }
                gsum[c] = sg;
                gdotx[c] = sgx;
            }
            if (bn.requires_grad) {
                Tensor& pg = bn.ensure_grad();
                for (int c = 0; c < C; ++c) pg[c] += gsum[c];
            }
            if (gn.requires_grad) {
                Tensor& pg = gn.ensure_grad();
                for (int c = 0; c < C; ++c) pg[c] += gdotx[c];
            }
            if (xn.requires_grad) {
                Tensor& pg = xn.ensure_grad();
                const double invm = 1.0 / static_cast<double>(m);
#pragma omp parallel for collapse(2) schedule(static) if (par)
                for (int n = 0; n < N; ++n) {
                    for (int c = 0; c < C; ++c) {
                        const double* gp = g.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
                        const double* xp = xval.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
                        double* pp = pg.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
                        const double k = gam[c] * invstd[c];
                        for (int64_t i = 0; i < hw; ++i) {
                            const double xhat = (xp[i] - mu[c]) * invstd[c];
                            pp[i] += k * (gp[i] - gsum[c] * invm - xhat * gdotx[c] * invm);
                        }
                    }
                }
            }
        } else {
            if (bn.requires_grad || gn.requires_grad) {
                Tensor gsum({C}), gdotx({C});
                for (int c = 0; c < C; ++c) {
                    double sg = 0.0, sgx = 0.0;
                    for (int n = 0; n < N; ++n) {
                        const double* gp = g.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
                        const double* xp = xval.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
                        for (int64_t i = 0; i < hw; ++i) {
                            sg += gp[i];
                            sgx += gp[i] * (xp[i] - mu[c]) * invstd[c];
                        }
                    }
                    gsum[c] = sg;
                    gdotx[c] = sgx;
                }
                if (bn.requires_grad) {
                    Tensor& pg = bn.ensure_grad();
                    for (int c = 0; c < C; ++c) pg[c] += gsum[c];
                }
                if (gn.requires_grad) {
                    Tensor& pg = gn.ensure_grad();
                    for (int c = 0; c < C; ++c) pg[c] += gdotx[c];
                }
            }
            if (xn.requires_grad) {
                Tensor& pg = xn.ensure_grad();
#pragma omp parallel for collapse(2) schedule(static) if (par)
                for (int n = 0; n < N; ++n) {
                    for (int c = 0; c < C; ++c) {
                        const double* gp = g.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
                        double* pp = pg.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
                        const double k = gam[c] * invstd[c];
                        for (int64_t i = 0; i < hw; ++i) pp[i] += k * gp[i];
                    }
                }
            }
        }
    }, "batchnorm2d");
}

Variable channel_mean(const Variable& x) {
    check_rank4(x, "channel_mean");
    const Tensor& xv = x.value();
    const int N = xv.dim(0), C = xv.dim(1);
    const int64_t hw = static_cast<int64_t>(xv.dim(2)) * xv.dim(3);
    Tensor out({N, C});
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double* p = xv.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
            double s = 0.0;
            for (int64_t i = 0; i < hw; ++i) s += p[i];
            out[static_cast<int64_t>(n) * C + c] = s / static_cast<double>(hw);
        }
    }
    return make_op(std::move(out), {x}, [N, C, hw](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        const Tensor& g = self.grad;
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                const double gv = g[static_cast<int64_t>(n) * C + c] / static_cast<double>(hw);
                double* p = pg.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
                for (int64_t i = 0; i < hw; ++i) p[i] += gv;
            }
        }
    }, "channel_mean");
}

Variable channel_std(const Variable& x, double eps) {
    check_rank4(x, "channel_std");
    if (eps < 0.0) {
        throw NumericError("channel_std: eps must be >= 0");
    }
    const Tensor& xv = x.value();
    const int N = xv.dim(0), C = xv.dim(1);
    const int64_t hw = static_cast<int64_t>(xv.dim(2)) * xv.dim(3);
    Tensor out({N, C});
    Tensor mu({N, C});
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double* p = xv.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
            double s = 0.0;
            for (int64_t i = 0; i < hw; ++i) s += p[i];
            const double mean_c = s / static_cast<double>(hw);
            double v = 0.0;
            for (int64_t i = 0; i < hw; ++i) {
                const double d = p[i] - mean_c;
                v += d * d;
            }
            mu[static_cast<int64_t>(n) * C + c] = mean_c;
            out[static_cast<int64_t>(n) * C + c] = std::sqrt(v / static_cast<double>(hw) + eps);
        }
    }
    return make_op(std::move(out), {x}, [N, C, hw, mu](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        const Tensor& g = self.grad;
        const Tensor& sigma = self.value;
        const Tensor& xval = self.parents[0]->value;
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                const int64_t nc = static_cast<int64_t>(n) * C + c;
                const double k = g[nc] / (static_cast<double>(hw) * sigma[nc]);
                const double* p = xval.ptr() + nc * hw;
                double* pp = pg.ptr() + nc * hw;
                for (int64_t i = 0; i < hw; ++i) {
                    pp[i] += k * (p[i] - mu[nc]);
                }
            }
        }
    }, "channel_std");
}

Variable gather_rows(const Variable& s, const std::vector<int>& index) {
    const Tensor& sv = s.value();
    if (sv.rank() != 2) {
        throw ShapeError("gather_rows: expected rank-2 stats, got " + shape_str(sv.shape));
    }
    const int N = static_cast<int>(index.size());
    const int C = sv.dim(1);
    for (int i : index) {
        if (i < 0 || i >= sv.dim(0)) {
            throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range");
        }
    }
    Tensor out({N, C});
    for (int n = 0; n < N; ++n) {
        std::copy_n(sv.ptr() + static_cast<int64_t>(index[static_cast<size_t>(n)]) * C, C,
                    out.ptr() + static_cast<int64_t>(n) * C);
    }
    return make_op(std::move(out), {s}, [index, C](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        const Tensor& g = self.grad;
        for (size_t n = 0; n < index.size(); ++n) {
            const double* gp = g.ptr() + static_cast<int64_t>(n) * C;
            double* pp = pg.ptr() + static_cast<int64_t>(index[n]) * C;
            for (int c = 0; c < C; ++c) pp[c] += gp[c];
        }
    }, "gather_rows");
}

Variable lerp_rows(const Variable& a, const Variable& b, const std::vector<double>& lambda) {
    check_same_shape(a.value(), b.value(), "lerp_rows");
    const Tensor& av = a.value();
    if (av.rank() != 2 || static_cast<int>(lambda.size()) != av.dim(0)) {
        throw ShapeError("lerp_rows: need one lambda per row of " + shape_str(av.shape));
    }
    const int N = av.dim(0), C = av.dim(1);
    Tensor out({N, C});
    for (int n = 0; n < N; ++n) {
        const double l = lambda[static_cast<size_t>(n)];
        for (int c = 0; c < C; ++c) {
            const int64_t i = static_cast<int64_t>(n) * C + c;
            out[i] = l * av[i] + (1.0 - l) * b.value()[i];
        }
    }
    return make_op(std::move(out), {a, b}, [lambda, N, C](Node& self) {
        const Tensor& g = self.grad;
        if (self.parents[0]->requires_grad) {
            Tensor& pg = self.parents[0]->ensure_grad();
            for (int n = 0; n < N; ++n) {
                for (int c = 0; c < C; ++c) {
                    const int64_t i = static_cast<int64_t>(n) * C + c;
                    pg[i] += lambda[static_cast<size_t>(n)] * g[i];
                }
            }
        }
        if (self.parents[1]->requires_grad) {
            Tensor& pg = self.parents[1]->ensure_grad();
            for (int n = 0; n < N; ++n) {
                for (int c = 0; c < C; ++c) {
                    const int64_t i = static_cast<int64_t>(n) * C + c;
                    pg[i] += (1.0 - lambda[static_cast<size_t>(n)]) * g[i];
                }
            }
        }
    }, "lerp_rows");
}

Variable channel_affine_restyle(const Variable& x, const Variable& mu, const Variable& sigma,
                                const Variable& mu_hat, const Variable& sigma_hat) {
    check_rank4(x, "channel_affine_restyle");
    const Tensor& xv = x.value();
    const int N = xv.dim(0), C = xv.dim(1);
    const int64_t hw = static_cast<int64_t>(xv.dim(2)) * xv.dim(3);
    const Shape stats_shape{N, C};
    for (const Variable* s : {&mu, &sigma, &mu_hat, &sigma_hat}) {
        if (s->value().shape != stats_shape) {
            throw ShapeError("channel_affine_restyle: stats must be " + shape_str(stats_shape) +
                             ", got " + shape_str(s->value().shape));
        }
    }
    for (int64_t i = 0; i < sigma.value().numel(); ++i) {
        if (!(sigma.value()[i] > 0.0)) {
            throw NumericError("channel_affine_restyle: own sigma must be > 0 (index " +
                               std::to_string(i) + ")");
        }
    }
    Tensor out(xv.shape);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const int64_t nc = static_cast<int64_t>(n) * C + c;
            const double m = mu.value()[nc], s = sigma.value()[nc];
            const double mh = mu_hat.value()[nc], sh = sigma_hat.value()[nc];
            const double r = sh / s;
            const double* p = xv.ptr() + nc * hw;
            double* o = out.ptr() + nc * hw;
            for (int64_t i = 0; i < hw; ++i) {
                o[i] = r * (p[i] - m) + mh;
            }
        }
    }
    return make_op(std::move(out), {x, mu, sigma, mu_hat, sigma_hat},
                   [N, C, hw](Node& self) {
        const Tensor& g = self.grad;
        const Tensor& xval = self.parents[0]->value;
        const Tensor& muv = self.parents[1]->value;
        const Tensor& sigv = self.parents[2]->value;
        const Tensor& shv = self.parents[4]->value;
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                const int64_t nc = static_cast<int64_t>(n) * C + c;
                const double m = muv[nc], s = sigv[nc], sh = shv[nc];
                const double r = sh / s;
                const double* gp = g.ptr() + nc * hw;
                const double* xp = xval.ptr() + nc * hw;
                double gsum = 0.0, gdotc = 0.0;  // sums of g and g*(x - mu)
                for (int64_t i = 0; i < hw; ++i) {
                    gsum += gp[i];
                    gdotc += gp[i] * (xp[i] - m);
                }
                if (self.parents[0]->requires_grad) {
                    double* pp = self.parents[0]->ensure_grad().ptr() + nc * hw;
                    for (int64_t i = 0; i < hw; ++i) pp[i] += r * gp[i];
                }
                if (self.parents[1]->requires_grad) {
                    self.parents[1]->ensure_grad()[nc] += -r * gsum;
                }
                if (self.parents[2]->requires_grad) {
                    self.parents[2]->ensure_grad()[nc] += -(sh / (s * s)) * gdotc;
                }
                if (self.parents[3]->requires_grad) {
                    self.parents[3]->ensure_grad()[nc] += gsum;
                }
                if (self.parents[4]->requires_grad) {
                    self.parents[4]->ensure_grad()[nc] += gdotc / s;
                }
            }
        }
    }, "channel_affine_restyle");
}

Variable cross_entropy_mean(const Variable& p, const MaskBatch& labels) {
    check_rank4(p, "cross_entropy_mean");
    const Tensor& pv = p.value();
    const int N = pv.dim(0), C = pv.dim(1), H = pv.dim(2), W = pv.dim(3);
    if (labels.n != N || labels.h != H || labels.w != W) {
        throw ShapeError("cross_entropy_mean: labels [" + std::to_string(labels.n) + "," +
                         std::to_string(labels.h) + "," + std::to_string(labels.w) +
                         "] do not match predictions " + shape_str(pv.shape));
    }
    const int64_t hw = static_cast<int64_t>(H) * W;
    const int64_t m = static_cast<int64_t>(N) * hw;
    double loss = 0.0;
    for (int n = 0; n < N; ++n) {
        for (int64_t i = 0; i < hw; ++i) {
            const int32_t y = labels.v[static_cast<size_t>(n) * hw + static_cast<size_t>(i)];
            if (y < 0 || y >= C) {
                throw DataError("cross_entropy_mean: label " + std::to_string(y) +
                                " out of range [0," + std::to_string(C) + ") at sample " +
                                std::to_string(n) + ", pixel (" + std::to_string(i / W) + "," +
                                std::to_string(i % W) + ")");
            }
            const double pr = pv[(static_cast<int64_t>(n) * C + y) * hw + i];
            loss -= std::log(std::max(pr, prob_clamp));
        }
    }
    loss /= static_cast<double>(m);
    MaskBatch lab = labels;
    return make_op(Tensor({1}, {loss}), {p}, [lab, N, C, hw, m](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& pg = self.parents[0]->ensure_grad();
        const Tensor& pval = self.parents[0]->value;
        const double g = self.grad[0] / static_cast<double>(m);
        for (int n = 0; n < N; ++n) {
            for (int64_t i = 0; i < hw; ++i) {
                const int32_t y = lab.v[static_cast<size_t>(n) * hw + static_cast<size_t>(i)];
                const int64_t idx = (static_cast<int64_t>(n) * C + y) * hw + i;
                const double pr = pval[idx];
                if (pr > prob_clamp) {
                    pg[idx] -= g / pr;
                }
            }
        }
    }, "cross_entropy_mean");
}

Variable consistency(const Variable& p, const Variable& p_hat, ConsistNorm norm) {
    check_same_shape(p.value(), p_hat.value(), "consistency");
    const Tensor& a = p.value();
    const Tensor& b = p_hat.value();
    const int N = a.dim(0);
    const int64_t stride = a.numel() / N;
    const double entries = static_cast<double>(stride);

    std::vector<double> snorm(static_cast<size_t>(N));  // ||d_n||_2 per sample
    double loss = 0.0;
    for (int n = 0; n < N; ++n) {
        const double* pa = a.ptr() + n * stride;
        const double* pb = b.ptr() + n * stride;
        double s = 0.0;
        for (int64_t i = 0; i < stride; ++i) {
            const double d = pa[i] - pb[i];
            s += d * d;
        }
        snorm[static_cast<size_t>(n)] = std::sqrt(s);
        switch (norm) {
            case ConsistNorm::rms: loss += std::sqrt(s / entries); break;
            case ConsistNorm::l2_sum: loss += std::sqrt(s); break;
            case ConsistNorm::mse: loss += s / entries; break;
        }
    }
    loss /= static_cast<double>(N);

    return make_op(Tensor({1}, {loss}), {p, p_hat}, [N, stride, entries, norm, snorm](Node& self) {
        const Tensor& a2 = self.parents[0]->value;
        const Tensor& b2 = self.parents[1]->value;
        const double g = self.grad[0];
        for (int n = 0; n < N; ++n) {
            const double nrm = snorm[static_cast<size_t>(n)];
            double k = 0.0;  // dL/dd = k * d
            switch (norm) {
                case ConsistNorm::rms:
                    k = nrm > 0.0 ? 1.0 / (N * std::sqrt(entries) * nrm) : 0.0;
                    break;
                case ConsistNorm::l2_sum:
                    k = nrm > 0.0 ? 1.0 / (N * nrm) : 0.0;
                    break;
                case ConsistNorm::mse:
                    k = 2.0 / (N * entries);
                    break;
            }
            k *= g;
            const double* pa = a2.ptr() + n * stride;
            const double* pb = b2.ptr() + n * stride;
            if (self.parents[0]->requires_grad) {
                double* pg = self.parents[0]->ensure_grad().ptr() + n * stride;
                for (int64_t i = 0; i < stride; ++i) pg[i] += k * (pa[i] - pb[i]);
            }
            if (self.parents[1]->requires_grad) {
                double* pg = self.parents[1]->ensure_grad().ptr() + n * stride;
                for (int64_t i = 0; i < stride; ++i) pg[i] -= k * (pa[i] - pb[i]);
            }
        }
    }, "consistency");
}

Variable adversarial_bce(const Variable& p_c, const Variable& p_hat_c) {
    const Tensor& a = p_c.value();
    const Tensor& b = p_hat_c.value();
    if (a.numel() != b.numel()) {
        throw ShapeError("adversarial_bce: score count mismatch");
    }
    const int64_t N = a.numel();
    const double hi = 1.0 - prob_clamp;
    double loss = 0.0;
    for (int64_t i = 0; i < N; ++i) {
        loss -= std::log(std::clamp(a[i], prob_clamp, hi));
        loss -= std::log(std::clamp(1.0 - b[i], prob_clamp, hi));
    }
    loss /= static_cast<double>(N);
    return make_op(Tensor({1}, {loss}), {p_c, p_hat_c}, [N, hi](Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        const double g = self.grad[0] / static_cast<double>(N);
        if (self.parents[0]->requires_grad) {
            Tensor& pg = self.parents[0]->ensure_grad();
            for (int64_t i = 0; i < N; ++i) {
                if (av[i] > prob_clamp && av[i] < hi) {
                    pg[i] -= g / av[i];
                }
            }
        }
        if (self.parents[1]->requires_grad) {
            Tensor& pg = self.parents[1]->ensure_grad();
            for (int64_t i = 0; i < N; ++i) {
                const double q = 1.0 - bv[i];
                if (q > prob_clamp && q < hi) {
                    pg[i] += g / q;
                }
            }
        }
    }, "adversarial_bce");
}

}  // namespace icsl::ops
