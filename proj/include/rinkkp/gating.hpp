#pragma once

#include <vector>

#include "rinkkp/layers.hpp"

namespace rinkkp {

// Static per-channel gate: out = input * sigmoid(gamma), one learned gamma
// per channel, independent of the input contents at inference.
struct GateBlock {
    ParamTensor gamma;  // [1,C,1,1], init 0 so the gate starts at 0.5

    explicit GateBlock(int channels);

    int channels() const { return gamma.value.dims[1]; }
    // sigmoid(gamma) as a C-vector.
    std::vector<double> gate_vector() const;

    Tensor forward(const Tensor& input) const;
    // Accumulates the gamma gradient, returns the input gradient.
    Tensor backward(const Tensor& grad_out, const Tensor& input);
};

struct FusionCache {
    std::vector<int> part_channels;
    int prev_h = 0;  // pre-upsample extents; 0 when the stage has no prev
    int prev_w = 0;
    Tensor concat_in;  // concatenated tensor fed to the gate (gated stages only)
    ConvBlockCache conv;
};

// ConvBlock(GateBlock(Up(prev) ⊕ f ⊕ c)). prev is absent at the bottleneck
// stage, where the gate sees (f ⊕ c). Concatenation order is frozen as
// (upsampled prev, pyramid feature, context feature).
struct GatedFusionStage {
    GateBlock gate;
    ConvBlock conv;

    // prev_ch == 0 builds the bottleneck variant.
    GatedFusionStage(int prev_ch, int f_ch, int c_ch, int out_ch, Rng& rng);

    Tensor forward(const Tensor* prev, const Tensor& f, const Tensor& c, Mode mode, FusionCache* cache);

    struct Grads {
        Tensor prev;  // empty when the stage has no prev
        Tensor f;
        Tensor c;
    };
    Grads backward(const Tensor& grad_out, const FusionCache& cache);
};

// ConvBlock(Up(prev) ⊕ f) for stages without a matching context feature.
struct PlainFusionStage {
    ConvBlock conv;

    PlainFusionStage(int prev_ch, int f_ch, int out_ch, Rng& rng);

    Tensor forward(const Tensor& prev, const Tensor& f, Mode mode, FusionCache* cache);

    struct Grads {
        Tensor prev;
        Tensor f;
    };
    Grads backward(const Tensor& grad_out, const FusionCache& cache);
};

struct HeadCache {
    Tensor input;
    Tensor upsampled;
};

// Bilinear upsample to the input-image resolution, then a 1x1 convolution
// down to a single channel of heatmap logits.
struct PredictionHead {
    ConvLayer conv1x1;

    PredictionHead(int in_ch, Rng& rng);

    Tensor forward(const Tensor& features, int out_h, int out_w, HeadCache* cache) const;
    Tensor backward(const Tensor& grad_logits, const HeadCache& cache);
};

}  // namespace rinkkp
