#include "rinkkp/gating.hpp"

#include <cmath>
#include <stdexcept>

namespace rinkkp {

GateBlock::GateBlock(int channels) : gamma(Tensor({1, channels, 1, 1})) {}

std::vector<double> GateBlock::gate_vector() const {
    std::vector<double> g(static_cast<std::size_t>(channels()));
    for (int c = 0; c < channels(); ++c) {
        const double v = gamma.value.data[c];
        g[c] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    return g;
}

Tensor GateBlock::forward(const Tensor& input) const {
    if (input.ndim() != 4 || input.channels() != channels()) {
        throw std::runtime_error("GateBlock: input " + dims_str(input.dims) + " does not carry " +
                                 std::to_string(channels()) + " channels");
    }
    const std::vector<double> g = gate_vector();
    const int b = input.batch(), c = input.channels();
    const std::int64_t plane = static_cast<std::int64_t>(input.height()) * input.width();
    Tensor out(input.dims);
    for (int n = 0; n < b; ++n) {
        for (int ch = 0; ch < c; ++ch) {
            const double gv = g[ch];
            const double* p = input.data.data() + input.offset4(n, ch, 0, 0);
            double* o = out.data.data() + out.offset4(n, ch, 0, 0);
            for (std::int64_t i = 0; i < plane; ++i) o[i] = p[i] * gv;
        }
    }
    ensure_finite(out, "gate_forward");
    return out;
}

Tensor GateBlock::backward(const Tensor& grad_out, const Tensor& input) {
    const std::vector<double> g = gate_vector();
    const int b = input.batch(), c = input.channels();
    const std::int64_t plane = static_cast<std::int64_t>(input.height()) * input.width();
    Tensor grad_input(input.dims);
    for (int ch = 0; ch < c; ++ch) {
        const double gv = g[ch];
        const double dgate = gv * (1.0 - gv);  // d sigmoid / d gamma
        double acc = 0.0;
        for (int n = 0; n < b; ++n) {
            const double* go = grad_out.data.data() + grad_out.offset4(n, ch, 0, 0);
            const double* p = input.data.data() + input.offset4(n, ch, 0, 0);
            double* gi = grad_input.data.data() + grad_input.offset4(n, ch, 0, 0);
            for (std::int64_t i = 0; i < plane; ++i) {
                gi[i] = go[i] * gv;
                acc += go[i] * p[i];
            }
        }
        gamma.grad.data[ch] += acc * dgate;
    }
    return grad_input;
}

GatedFusionStage::GatedFusionStage(int prev_ch, int f_ch, int c_ch, int out_ch, Rng& rng)
    : gate(prev_ch + f_ch + c_ch), conv(prev_ch + f_ch + c_ch, out_ch, 1, rng) {}

Tensor GatedFusionStage::forward(const Tensor* prev, const Tensor& f, const Tensor& c,
                                 Mode mode, FusionCache* cache) {
    if (f.height() != c.height() || f.width() != c.width() || f.batch() != c.batch()) {
        throw std::runtime_error("gated fusion: pyramid feature " + dims_str(f.dims) +
                                 " and context feature " + dims_str(c.dims) + " do not align");
    }
    Tensor up;
    std::vector<const Tensor*> parts;
    std::vector<int> part_channels;
    if (prev) {
        up = upsample_bilinear_forward(*prev, f.height(), f.width());
        parts.push_back(&up);
        part_channels.push_back(up.channels());
    }
    parts.push_back(&f);
    parts.push_back(&c);
    part_channels.push_back(f.channels());
    part_channels.push_back(c.channels());

    Tensor cat = concat_channels(parts);
    Tensor gated = gate.forward(cat);
    Tensor out = conv.forward(gated, mode, cache ? &cache->conv : nullptr);
    if (cache) {
        cache->part_channels = std::move(part_channels);
        cache->prev_h = prev ? prev->height() : 0;
        cache->prev_w = prev ? prev->width() : 0;
        cache->concat_in = std::move(cat);
    }
    return out;
}

GatedFusionStage::Grads GatedFusionStage::backward(const Tensor& grad_out, const FusionCache& cache) {
    Tensor g = conv.backward(grad_out, cache.conv);
    g = gate.backward(g, cache.concat_in);
    std::vector<Tensor> parts = concat_channels_backward(g, cache.part_channels);
    Grads grads;
    std::size_t k = 0;
    if (cache.prev_h > 0) {
        grads.prev = upsample_bilinear_backward(parts[k++], cache.prev_h, cache.prev_w);
    }
    grads.f = std::move(parts[k++]);
    grads.c = std::move(parts[k]);
    return grads;
}

PlainFusionStage::PlainFusionStage(int prev_ch, int f_ch, int out_ch, Rng& rng)
    : conv(prev_ch + f_ch, out_ch, 1, rng) {}

Tensor PlainFusionStage::forward(const Tensor& prev, const Tensor& f, Mode mode, FusionCache* cache) {
    Tensor up = upsample_bilinear_forward(prev, f.height(), f.width());
    Tensor cat = concat_channels({&up, &f});
    Tensor out = conv.forward(cat, mode, cache ? &cache->conv : nullptr);
    if (cache) {
        cache->part_channels = {up.channels(), f.channels()};
        cache->prev_h = prev.height();
        cache->prev_w = prev.width();
    }
    return out;
}

PlainFusionStage::Grads PlainFusionStage::backward(const Tensor& grad_out, const FusionCache& cache) {
    Tensor g = conv.backward(grad_out, cache.conv);
    std::vector<Tensor> parts = concat_channels_backward(g, cache.part_channels);
    Grads grads;
    grads.prev = upsample_bilinear_backward(parts[0], cache.prev_h, cache.prev_w);
    grads.f = std::move(parts[1]);
    return grads;
}

PredictionHead::PredictionHead(int in_ch, Rng& rng) : conv1x1(in_ch, 1, 1, 1, 0, rng) {}

Tensor PredictionHead::forward(const Tensor& features, int out_h, int out_w, HeadCache* cache) const {
    Tensor up = upsample_bilinear_forward(features, out_h, out_w);
    Tensor logits = conv1x1.forward(up);
    if (cache) {
        cache->input = features;
        cache->upsampled = std::move(up);
    }
    return logits;
}

Tensor PredictionHead::backward(const Tensor& grad_logits, const HeadCache& cache) {
    Tensor g = conv1x1.backward(grad_logits, cache.upsampled);
    return upsample_bilinear_backward(g, cache.input.height(), cache.input.width());
}

}  // namespace rinkkp
