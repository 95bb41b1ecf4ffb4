#include "rinkkp/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace rinkkp {

void glorot_uniform_init(Tensor& kernel, Rng& rng) {
    const int cout = kernel.dims[0], cin = kernel.dims[1];
    const int k2 = kernel.dims[2] * kernel.dims[3];
    const double bound = std::sqrt(6.0 / static_cast<double>((cin + cout) * k2));
    for (double& v : kernel.data) {
        v = rng.uniform(-bound, bound);
    }
}

ConvLayer::ConvLayer(int in_ch, int out_ch, int k, int stride_, int padding_, Rng& rng)
    : kernel(Tensor({out_ch, in_ch, k, k})), bias(Tensor({out_ch})), stride(stride_), padding(padding_) {
    glorot_uniform_init(kernel.value, rng);
}

Tensor ConvLayer::forward(const Tensor& x) const {
    return conv2d_forward(x, kernel.value, bias.value, stride, padding);
}

Tensor ConvLayer::backward(const Tensor& grad_out, const Tensor& input) {
    return conv2d_backward(grad_out, input, kernel.value, stride, padding, kernel.grad, bias.grad);
}

BatchNorm2d::BatchNorm2d(int channels)
    : gamma(Tensor::full({channels}, 1.0)),
      beta(Tensor({channels})),
      running_mean(Tensor({channels})),
      running_var(Tensor::full({channels}, 1.0)) {}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode, BatchNormCache* cache) {
    return batch_norm_forward(x, gamma.value, beta.value, running_mean, running_var,
                              mode == Mode::train, momentum, eps, cache);
}

Tensor BatchNorm2d::backward(const Tensor& grad_out, const BatchNormCache& cache) {
    return batch_norm_backward(grad_out, cache, gamma.value, gamma.grad, beta.grad);
}

ConvBlock::ConvBlock(int in_ch, int out_ch, int stride, Rng& rng)
    : conv(in_ch, out_ch, 3, stride, 1, rng), bn(out_ch) {}

Tensor ConvBlock::forward(const Tensor& x, Mode mode, ConvBlockCache* cache) {
    Tensor conv_out = conv.forward(x);
    Tensor bn_out = bn.forward(conv_out, mode, cache ? &cache->bn : nullptr);
    Tensor out = relu_forward(bn_out);
    if (cache) {
        cache->input = x;
        cache->bn_in = std::move(conv_out);
        cache->bn_out = std::move(bn_out);
    }
    return out;
}

Tensor ConvBlock::backward(const Tensor& grad_out, const ConvBlockCache& cache) {
    Tensor g = relu_backward(grad_out, cache.bn_out);
    g = bn.backward(g, cache.bn);
    return conv.backward(g, cache.input);
}

}  // namespace rinkkp
