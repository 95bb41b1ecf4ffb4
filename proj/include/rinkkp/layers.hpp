#pragma once

#include "rinkkp/ops.hpp"
#include "rinkkp/rng.hpp"
#include "rinkkp/tensor.hpp"

namespace rinkkp {

enum class Mode { train, eval };

struct ConvLayer {
    ParamTensor kernel;  // [Cout,Cin,k,k]
    ParamTensor bias;    // [Cout]
    int stride = 1;
    int padding = 0;

    ConvLayer(int in_ch, int out_ch, int k, int stride, int padding, Rng& rng);

    Tensor forward(const Tensor& x) const;
    // Accumulates into kernel.grad / bias.grad, returns the input gradient.
    Tensor backward(const Tensor& grad_out, const Tensor& input);
};

struct BatchNorm2d {
    ParamTensor gamma;  // [C], init 1
    ParamTensor beta;   // [C], init 0
    Tensor running_mean;
    Tensor running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    explicit BatchNorm2d(int channels);

    Tensor forward(const Tensor& x, Mode mode, BatchNormCache* cache);
    Tensor backward(const Tensor& grad_out, const BatchNormCache& cache);
};

struct ConvBlockCache {
    Tensor input;
    Tensor bn_in;   // conv output
    Tensor bn_out;  // ReLU input
    BatchNormCache bn;
};

// 3x3 convolution -> batch normalization -> ReLU.
struct ConvBlock {
    ConvLayer conv;
    BatchNorm2d bn;

    ConvBlock(int in_ch, int out_ch, int stride, Rng& rng);

    Tensor forward(const Tensor& x, Mode mode, ConvBlockCache* cache);
    Tensor backward(const Tensor& grad_out, const ConvBlockCache& cache);

    int out_channels() const { return conv.kernel.value.dims[0]; }
};

void glorot_uniform_init(Tensor& kernel, Rng& rng);

}  // namespace rinkkp
