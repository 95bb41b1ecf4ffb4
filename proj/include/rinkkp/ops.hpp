#pragma once

#include <vector>

#include "rinkkp/tensor.hpp"

namespace rinkkp {

// Cross-correlation over [B,Cin,H,W] with kernel [Cout,Cin,k,k] (k odd) and
// bias [Cout]. Output spatial extents follow floor((H + 2p - k)/s) + 1.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                      int stride, int padding);

// Accumulates kernel/bias gradients and returns the input gradient.
Tensor conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& kernel,
                       int stride, int padding, Tensor& grad_kernel, Tensor& grad_bias);

struct BatchNormCache {
    Tensor xhat;                  // normalized input, same dims as input
    std::vector<double> invstd;   // per channel
    bool train_mode = true;
};

// Per-channel batch normalization over [B,C,H,W]. Train mode normalizes by
// batch statistics (biased variance) and folds them into the running stats
// as new = (1-momentum)*running + momentum*batch; eval mode uses the running
// stats. Requires B*H*W >= 2 in train mode.
Tensor batch_norm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                          Tensor& running_mean, Tensor& running_var,
                          bool train_mode, double momentum, double eps,
                          BatchNormCache* cache);

Tensor batch_norm_backward(const Tensor& grad_out, const BatchNormCache& cache,
                           const Tensor& gamma, Tensor& grad_gamma, Tensor& grad_beta);

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& grad_out, const Tensor& input);

Tensor sigmoid_forward(const Tensor& input);
// Takes the forward *output*; d/dx sigmoid = y*(1-y).
Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& output);

// Bilinear upsample with half-pixel centers (align-corners=false). Shrinking
// is rejected; this artifact only ever upsamples.
Tensor upsample_bilinear_forward(const Tensor& input, int out_h, int out_w);
Tensor upsample_bilinear_backward(const Tensor& grad_out, int in_h, int in_w);

// Channel-axis concatenation in argument order; all parts share B, H, W.
Tensor concat_channels(const std::vector<const Tensor*>& parts);
// Splits the upstream gradient back into per-part slices.
std::vector<Tensor> concat_channels_backward(const Tensor& grad_out,
                                             const std::vector<int>& channel_counts);

}  // namespace rinkkp
