#include "rinkkp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rinkkp {

namespace {

void require_4d(const Tensor& t, const char* what) {
    if (t.ndim() != 4) {
        throw std::runtime_error(std::string(what) + ": expected 4-D tensor, got " + dims_str(t.dims));
    }
}

// Copies [B,C,H,W] into a zero-padded contiguous buffer [B,C,H+2p,W+2p].
std::vector<double> pad_input(const Tensor& x, int padding) {
    const int b = x.batch(), c = x.channels(), h = x.height(), w = x.width();
    const int hp = h + 2 * padding, wp = w + 2 * padding;
    std::vector<double> out(static_cast<std::size_t>(b) * c * hp * wp, 0.0);
    for (int n = 0; n < b; ++n) {
        for (int ch = 0; ch < c; ++ch) {
            const double* src = x.data.data() + x.offset4(n, ch, 0, 0);
            double* dst = out.data() + ((static_cast<std::int64_t>(n) * c + ch) * hp + padding) * wp + padding;
            for (int y = 0; y < h; ++y) {
                std::copy(src, src + w, dst);
                src += w;
                dst += wp;
            }
        }
    }
    return out;
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                      int stride, int padding) {
    require_4d(input, "conv2d");
    require_4d(kernel, "conv2d kernel");
    const int b = input.batch(), cin = input.channels(), h = input.height(), w = input.width();
    const int cout = kernel.dims[0], kcin = kernel.dims[1], kh = kernel.dims[2], kw = kernel.dims[3];
    if (kcin != cin) {
        std::ostringstream msg;
        msg << "conv2d: input has " << cin << " channels but kernel " << dims_str(kernel.dims)
            << " expects " << kcin;
        throw std::runtime_error(msg.str());
    }
    if (kh != kw || kh % 2 == 0) {
        throw std::runtime_error("conv2d: kernel must be square with odd extent, got " + dims_str(kernel.dims));
    }
    if (bias.ndim() != 1 || bias.dims[0] != cout) {
        throw std::runtime_error("conv2d: bias must be [Cout]=" + std::to_string(cout) + ", got " + dims_str(bias.dims));
    }
    if (stride < 1 || padding < 0) {
        throw std::runtime_error("conv2d: stride must be >= 1 and padding >= 0");
    }
    const int oh = (h + 2 * padding - kh) / stride + 1;
    const int ow = (w + 2 * padding - kw) / stride + 1;
    if (h + 2 * padding < kh || w + 2 * padding < kw || oh < 1 || ow < 1) {
        throw std::runtime_error("conv2d: output would be empty for input " + dims_str(input.dims) +
                                 " kernel " + dims_str(kernel.dims));
    }

    const std::vector<double> padded = padding > 0 ? pad_input(input, padding) : std::vector<double>{};
    const double* xdata = padding > 0 ? padded.data() : input.data.data();
    const int hp = h + 2 * padding, wp = w + 2 * padding;

    Tensor out({b, cout, oh, ow});
    for (int n = 0; n < b; ++n) {
        for (int co = 0; co < cout; ++co) {
            const double bias_v = bias.data[co];
            double* orow = out.data.data() + out.offset4(n, co, 0, 0);
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = bias_v;
                    const int iy0 = oy * stride, ix0 = ox * stride;
                    for (int ci = 0; ci < cin; ++ci) {
                        const double* xplane = xdata + (static_cast<std::int64_t>(n) * cin + ci) * hp * wp;
                        const double* kplane = kernel.data.data() + kernel.offset4(co, ci, 0, 0);
                        for (int ky = 0; ky < kh; ++ky) {
                            const double* xr = xplane + static_cast<std::int64_t>(iy0 + ky) * wp + ix0;
                            const double* kr = kplane + static_cast<std::int64_t>(ky) * kw;
                            for (int kx = 0; kx < kw; ++kx) {
                                acc += xr[kx] * kr[kx];
                            }
                        }
                    }
                    orow[static_cast<std::int64_t>(oy) * ow + ox] = acc;
                }
            }
        }
    }
    ensure_finite(out, "conv2d");
    return out;
}

Tensor conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& kernel,
                       int stride, int padding, Tensor& grad_kernel, Tensor& grad_bias) {
    const int b = input.batch(), cin = input.channels(), h = input.height(), w = input.width();
    const int cout = kernel.dims[0], kh = kernel.dims[2], kw = kernel.dims[3];
    const int oh = grad_out.height(), ow = grad_out.width();
    if (!grad_kernel.same_dims(kernel)) {
        throw std::runtime_error("conv2d backward: grad_kernel dims mismatch");
    }
    const int hp = h + 2 * padding, wp = w + 2 * padding;

    const std::vector<double> padded = padding > 0 ? pad_input(input, padding) : std::vector<double>{};
    const double* xdata = padding > 0 ? padded.data() : input.data.data();
    std::vector<double> dx_pad(static_cast<std::size_t>(b) * cin * hp * wp, 0.0);

    for (int n = 0; n < b; ++n) {
        for (int co = 0; co < cout; ++co) {
            const double* grow = grad_out.data.data() + grad_out.offset4(n, co, 0, 0);
            double gbias = 0.0;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    const double g = grow[static_cast<std::int64_t>(oy) * ow + ox];
                    gbias += g;
                    if (g == 0.0) continue;
                    const int iy0 = oy * stride, ix0 = ox * stride;
                    for (int ci = 0; ci < cin; ++ci) {
                        const double* xplane = xdata + (static_cast<std::int64_t>(n) * cin + ci) * hp * wp;
                        double* dxplane = dx_pad.data() + (static_cast<std::int64_t>(n) * cin + ci) * hp * wp;
                        const double* kplane = kernel.data.data() + kernel.offset4(co, ci, 0, 0);
                        double* gkplane = grad_kernel.data.data() + grad_kernel.offset4(co, ci, 0, 0);
                        for (int ky = 0; ky < kh; ++ky) {
                            const std::int64_t xoff = static_cast<std::int64_t>(iy0 + ky) * wp + ix0;
                            const double* xr = xplane + xoff;
                            double* dxr = dxplane + xoff;
                            const double* kr = kplane + static_cast<std::int64_t>(ky) * kw;
                            double* gkr = gkplane + static_cast<std::int64_t>(ky) * kw;
                            for (int kx = 0; kx < kw; ++kx) {
                                gkr[kx] += g * xr[kx];
                                dxr[kx] += g * kr[kx];
                            }
                        }
                    }
                }
            }
            grad_bias.data[co] += gbias;
        }
    }

    Tensor grad_input(input.dims);
    for (int n = 0; n < b; ++n) {
        for (int ci = 0; ci < cin; ++ci) {
            const double* src = dx_pad.data() + ((static_cast<std::int64_t>(n) * cin + ci) * hp + padding) * wp + padding;
            double* dst = grad_input.data.data() + grad_input.offset4(n, ci, 0, 0);
            for (int y = 0; y < h; ++y) {
                std::copy(src, src + w, dst);
                src += wp;
                dst += w;
            }
        }
    }
    ensure_finite(grad_input, "conv2d backward");
    return grad_input;
}

Tensor batch_norm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                          Tensor& running_mean, Tensor& running_var,
                          bool train_mode, double momentum, double eps,
                          BatchNormCache* cache) {
    require_4d(input, "batch_norm");
    const int b = input.batch(), c = input.channels(), h = input.height(), w = input.width();
    const std::int64_t m = static_cast<std::int64_t>(b) * h * w;
    if (gamma.size() != c || beta.size() != c || running_mean.size() != c || running_var.size() != c) {
        throw std::runtime_error("batch_norm: per-channel parameter size mismatch for " + dims_str(input.dims));
    }
    if (train_mode && m < 2) {
        throw std::runtime_error("batch_norm: train mode needs B*H*W >= 2, got " + std::to_string(m));
    }

    std::vector<double> mean(c, 0.0), var(c, 0.0);
    if (train_mode) {
        for (int ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (int n = 0; n < b; ++n) {
                const double* p = input.data.data() + input.offset4(n, ch, 0, 0);
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) acc += p[i];
            }
            mean[ch] = acc / static_cast<double>(m);
        }
        for (int ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (int n = 0; n < b; ++n) {
                const double* p = input.data.data() + input.offset4(n, ch, 0, 0);
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
                    const double d = p[i] - mean[ch];
                    acc += d * d;
                }
            }
            var[ch] = acc / static_cast<double>(m);
        }
        for (int ch = 0; ch < c; ++ch) {
            running_mean.data[ch] = (1.0 - momentum) * running_mean.data[ch] + momentum * mean[ch];
            running_var.data[ch] = (1.0 - momentum) * running_var.data[ch] + momentum * var[ch];
        }
    } else {
        mean.assign(running_mean.data.begin(), running_mean.data.end());
        var.assign(running_var.data.begin(), running_var.data.end());
    }

    std::vector<double> invstd(c);
    for (int ch = 0; ch < c; ++ch) {
        invstd[ch] = 1.0 / std::sqrt(var[ch] + eps);
    }

    Tensor out(input.dims);
    Tensor xhat(input.dims);
    for (int n = 0; n < b; ++n) {
        for (int ch = 0; ch < c; ++ch) {
            const double mu = mean[ch], is = invstd[ch];
            const double g = gamma.data[ch], be = beta.data[ch];
            const double* p = input.data.data() + input.offset4(n, ch, 0, 0);
            double* xh = xhat.data.data() + xhat.offset4(n, ch, 0, 0);
            double* o = out.data.data() + out.offset4(n, ch, 0, 0);
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
                const double xn = (p[i] - mu) * is;
                xh[i] = xn;
                o[i] = xn * g + be;
            }
        }
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->invstd = std::move(invstd);
        cache->train_mode = train_mode;
    }
    ensure_finite(out, "batch_norm");
    return out;
}

Tensor batch_norm_backward(const Tensor& grad_out, const BatchNormCache& cache,
                           const Tensor& gamma, Tensor& grad_gamma, Tensor& grad_beta) {
    const Tensor& xhat = cache.xhat;
    const int b = xhat.batch(), c = xhat.channels(), h = xhat.height(), w = xhat.width();
    const double m = static_cast<double>(static_cast<std::int64_t>(b) * h * w);

    std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
    for (int n = 0; n < b; ++n) {
        for (int ch = 0; ch < c; ++ch) {
            const double* g = grad_out.data.data() + grad_out.offset4(n, ch, 0, 0);
            const double* xh = xhat.data.data() + xhat.offset4(n, ch, 0, 0);
            double s1 = 0.0, s2 = 0.0;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
                s1 += g[i];
                s2 += g[i] * xh[i];
            }
            sum_dy[ch] += s1;
            sum_dy_xhat[ch] += s2;
        }
    }
    for (int ch = 0; ch < c; ++ch) {
        grad_beta.data[ch] += sum_dy[ch];
        grad_gamma.data[ch] += sum_dy_xhat[ch];
    }

    Tensor grad_input(xhat.dims);
    for (int n = 0; n < b; ++n) {
        for (int ch = 0; ch < c; ++ch) {
            const double g = gamma.data[ch], is = cache.invstd[ch];
            const double sdy = sum_dy[ch], sdyx = sum_dy_xhat[ch];
            const double* go = grad_out.data.data() + grad_out.offset4(n, ch, 0, 0);
            const double* xh = xhat.data.data() + xhat.offset4(n, ch, 0, 0);
            double* gi = grad_input.data.data() + grad_input.offset4(n, ch, 0, 0);
            if (cache.train_mode) {
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
                    gi[i] = (g * is / m) * (m * go[i] - sdy - xh[i] * sdyx);
                }
            } else {
                // Eval mode: mean/var are constants, so the map is affine.
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
                    gi[i] = g * is * go[i];
                }
            }
        }
    }
    ensure_finite(grad_input, "batch_norm backward");
    return grad_input;
}

Tensor relu_forward(const Tensor& input) {
    Tensor out(input.dims);
    for (std::int64_t i = 0; i < input.size(); ++i) {
        out.data[i] = input.data[i] > 0.0 ? input.data[i] : 0.0;
    }
    return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
    Tensor grad_input(input.dims);
    for (std::int64_t i = 0; i < input.size(); ++i) {
        grad_input.data[i] = input.data[i] > 0.0 ? grad_out.data[i] : 0.0;
    }
    return grad_input;
}

Tensor sigmoid_forward(const Tensor& input) {
    Tensor out(input.dims);
    for (std::int64_t i = 0; i < input.size(); ++i) {
        const double x = input.data[i];
        // Split by sign to avoid overflow in exp for large |x|.
        out.data[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                               : std::exp(x) / (1.0 + std::exp(x));
    }
    ensure_finite(out, "sigmoid");
    return out;
}

Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& output) {
    Tensor grad_input(output.dims);
    for (std::int64_t i = 0; i < output.size(); ++i) {
        const double y = output.data[i];
        grad_input.data[i] = grad_out.data[i] * y * (1.0 - y);
    }
    return grad_input;
}

namespace {

struct LerpAxis {
    std::vector<int> i0, i1;
    std::vector<double> w1;  // weight on i1; weight on i0 is 1 - w1
};

// Half-pixel-center source coordinates, clamped at the borders.
LerpAxis make_axis(int in_n, int out_n) {
    LerpAxis ax;
    ax.i0.resize(out_n);
    ax.i1.resize(out_n);
    ax.w1.resize(out_n);
    const double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
    for (int o = 0; o < out_n; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        if (src < 0.0) src = 0.0;
        int lo = static_cast<int>(src);
        if (lo > in_n - 1) lo = in_n - 1;
        const int hi = std::min(lo + 1, in_n - 1);
        ax.i0[o] = lo;
        ax.i1[o] = hi;
        ax.w1[o] = src - lo;
    }
    return ax;
}

}  // namespace

Tensor upsample_bilinear_forward(const Tensor& input, int out_h, int out_w) {
    require_4d(input, "upsample_bilinear");
    const int b = input.batch(), c = input.channels(), h = input.height(), w = input.width();
    if (out_h < h || out_w < w) {
        std::ostringstream msg;
        msg << "upsample_bilinear: target " << out_h << "x" << out_w << " shrinks input " << h << "x" << w;
        throw std::runtime_error(msg.str());
    }
    const LerpAxis ay = make_axis(h, out_h);
    const LerpAxis axx = make_axis(w, out_w);

    Tensor out({b, c, out_h, out_w});
    for (int n = 0; n < b; ++n) {
        for (int ch = 0; ch < c; ++ch) {
            const double* p = input.data.data() + input.offset4(n, ch, 0, 0);
            double* o = out.data.data() + out.offset4(n, ch, 0, 0);
            for (int oy = 0; oy < out_h; ++oy) {
                const double wy1 = ay.w1[oy], wy0 = 1.0 - wy1;
                const double* r0 = p + static_cast<std::int64_t>(ay.i0[oy]) * w;
                const double* r1 = p + static_cast<std::int64_t>(ay.i1[oy]) * w;
                for (int ox = 0; ox < out_w; ++ox) {
                    const double wx1 = axx.w1[ox], wx0 = 1.0 - wx1;
                    const int x0 = axx.i0[ox], x1 = axx.i1[ox];
                    o[static_cast<std::int64_t>(oy) * out_w + ox] =
                        wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) + wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
                }
            }
        }
    }
    ensure_finite(out, "upsample_bilinear");
    return out;
}

Tensor upsample_bilinear_backward(const Tensor& grad_out, int in_h, int in_w) {
    require_4d(grad_out, "upsample_bilinear backward");
    const int b = grad_out.batch(), c = grad_out.channels();
    const int out_h = grad_out.height(), out_w = grad_out.width();
    const LerpAxis ay = make_axis(in_h, out_h);
    const LerpAxis axx = make_axis(in_w, out_w);

    Tensor grad_input({b, c, in_h, in_w});
    for (int n = 0; n < b; ++n) {
        for (int ch = 0; ch < c; ++ch) {
            const double* g = grad_out.data.data() + grad_out.offset4(n, ch, 0, 0);
            double* gi = grad_input.data.data() + grad_input.offset4(n, ch, 0, 0);
            for (int oy = 0; oy < out_h; ++oy) {
                const double wy1 = ay.w1[oy], wy0 = 1.0 - wy1;
                double* r0 = gi + static_cast<std::int64_t>(ay.i0[oy]) * in_w;
                double* r1 = gi + static_cast<std::int64_t>(ay.i1[oy]) * in_w;
                for (int ox = 0; ox < out_w; ++ox) {
                    const double gv = g[static_cast<std::int64_t>(oy) * out_w + ox];
                    const double wx1 = axx.w1[ox], wx0 = 1.0 - wx1;
                    const int x0 = axx.i0[ox], x1 = axx.i1[ox];
                    r0[x0] += gv * wy0 * wx0;
                    r0[x1] += gv * wy0 * wx1;
                    r1[x0] += gv * wy1 * wx0;
                    r1[x1] += gv * wy1 * wx1;
                }
            }
        }
    }
    return grad_input;
}

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
    if (parts.empty()) {
        throw std::runtime_error("concat_channels: no inputs");
    }
    const Tensor& first = *parts.front();
    require_4d(first, "concat_channels");
    int total_c = 0;
    for (const Tensor* t : parts) {
        require_4d(*t, "concat_channels");
        if (t->batch() != first.batch() || t->height() != first.height() || t->width() != first.width()) {
            throw std::runtime_error("concat_channels: batch/spatial mismatch between " +
                                     dims_str(first.dims) + " and " + dims_str(t->dims));
        }
        total_c += t->channels();
    }
    const int b = first.batch(), h = first.height(), w = first.width();
    Tensor out({b, total_c, h, w});
    for (int n = 0; n < b; ++n) {
        int c_off = 0;
        for (const Tensor* t : parts) {
            const int c = t->channels();
            const double* src = t->data.data() + t->offset4(n, 0, 0, 0);
            double* dst = out.data.data() + out.offset4(n, c_off, 0, 0);
            std::copy(src, src + static_cast<std::int64_t>(c) * h * w, dst);
            c_off += c;
        }
    }
    return out;
}

std::vector<Tensor> concat_channels_backward(const Tensor& grad_out,
                                             const std::vector<int>& channel_counts) {
    const int b = grad_out.batch(), h = grad_out.height(), w = grad_out.width();
    int total = 0;
    for (int c : channel_counts) total += c;
    if (total != grad_out.channels()) {
        throw std::runtime_error("concat_channels backward: channel counts do not sum to " +
                                 std::to_string(grad_out.channels()));
    }
    std::vector<Tensor> grads;
    grads.reserve(channel_counts.size());
    for (int c : channel_counts) {
        grads.emplace_back(std::vector<int>{b, c, h, w});
    }
    for (int n = 0; n < b; ++n) {
        int c_off = 0;
        for (std::size_t k = 0; k < channel_counts.size(); ++k) {
            const int c = channel_counts[k];
            const double* src = grad_out.data.data() + grad_out.offset4(n, c_off, 0, 0);
            double* dst = grads[k].data.data() + grads[k].offset4(n, 0, 0, 0);
            std::copy(src, src + static_cast<std::int64_t>(c) * h * w, dst);
            c_off += c;
        }
    }
    return grads;
}

}  // namespace rinkkp
