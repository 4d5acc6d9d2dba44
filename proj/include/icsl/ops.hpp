#pragma once

#include <vector>

#include "icsl/autograd.hpp"
#include "icsl/kernels.hpp"
#include "icsl/labels.hpp"

namespace icsl::ops {

// Elementwise.
Variable add(const Variable& a, const Variable& b);
Variable sub(const Variable& a, const Variable& b);
Variable mul(const Variable& a, const Variable& b);
Variable scale(const Variable& a, double k);
Variable relu(const Variable& a);
Variable sigmoid(const Variable& a);

// Reductions.
Variable sum(const Variable& a);
Variable mean(const Variable& a);

// Shape.
Variable reshape(const Variable& a, Shape new_shape);
Variable concat_batch(const Variable& a, const Variable& b);
Variable slice_batch(const Variable& a, int from, int count);
Variable concat_channels(const Variable& a, const Variable& b);

// Convolution and friends ([N,C,H,W] activations).
Variable conv2d(const Variable& x, const Variable& w, const Variable& b,
                const kernels::ConvSpec& spec);
Variable upsample_bilinear(const Variable& x, int factor);
Variable global_avg_pool(const Variable& x);  // -> [N,C]
Variable softmax_channels(const Variable& x);

// Identity forward, gradient scaled by -coefficient on the way back.
Variable reverse_gradient(const Variable& x, double coefficient);

// Batch normalization over [N,C,H,W] with per-channel affine parameters.
// In training mode the batch statistics (biased variance) are used and the
// running buffers are updated in place; in eval mode the running buffers are
// used and receive no gradient.
Variable batchnorm2d(const Variable& x, const Variable& gamma, const Variable& beta,
                     Tensor& running_mean, Tensor& running_var, bool training, double momentum,
                     double eps);

// Per-sample, per-channel spatial statistics -> [N,C].
Variable channel_mean(const Variable& x);
Variable channel_std(const Variable& x, double eps);

// Row gather/mix over [N,C] statistics.
Variable gather_rows(const Variable& s, const std::vector<int>& index);
Variable lerp_rows(const Variable& a, const Variable& b, const std::vector<double>& lambda);

// out[n,c,h,w] = sigma_hat[n,c] * (x - mu[n,c]) / sigma[n,c] + mu_hat[n,c]
Variable channel_affine_restyle(const Variable& x, const Variable& mu, const Variable& sigma,
                                const Variable& mu_hat, const Variable& sigma_hat);

// Losses (scalar outputs). Log arguments are clamped below at prob_clamp.
inline constexpr double prob_clamp = 1e-12;

// Mean over batch and pixels of -log p[label].
Variable cross_entropy_mean(const Variable& p, const MaskBatch& labels);

enum class ConsistNorm { rms, l2_sum, mse };
Variable consistency(const Variable& p, const Variable& p_hat, ConsistNorm norm);

// -(1/N) sum log(p_c) - (1/N) sum log(1 - p_hat_c); inputs are [N] scores.
Variable adversarial_bce(const Variable& p_c, const Variable& p_hat_c);

}  // namespace icsl::ops
