#include "rinkkp/heatmap.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rinkkp {

HeatmapLabel gaussian_label(double mu_x, double mu_y, double sigma, int h, int w) {
    if (!(sigma > 0.0)) {
        throw std::runtime_error("gaussian_label: sigma must be > 0");
    }
    if (!(mu_x >= 0.0 && mu_x < w && mu_y >= 0.0 && mu_y < h)) {
        std::ostringstream msg;
        msg << "gaussian_label: center (" << mu_x << "," << mu_y << ") outside " << w << "x" << h << " grid";
        throw std::runtime_error(msg.str());
    }
    HeatmapLabel label;
    label.mu_x = mu_x;
    label.mu_y = mu_y;
    label.sigma = sigma;
    label.grid = Tensor({1, 1, h, w});
    const double denom = 2.0 * sigma * sigma;
    double* g = label.grid.data.data();
    for (int y = 0; y < h; ++y) {
        const double dy = y - mu_y;
        for (int x = 0; x < w; ++x) {
            const double dx = x - mu_x;
            g[static_cast<std::int64_t>(y) * w + x] = std::exp(-(dx * dx + dy * dy) / denom);
        }
    }
    return label;
}

HeatmapLabel normalize_label(const HeatmapLabel& label) {
    double sum = 0.0;
    for (double v : label.grid.data) sum += v;
    if (!(sum > 0.0)) {
        throw std::runtime_error("normalize_label: grid sum must be > 0");
    }
    HeatmapLabel out = label;
    const double inv = 1.0 / sum;
    for (double& v : out.grid.data) v *= inv;
    return out;
}

PredictedHeatmap spatial_softmax(const Tensor& logits) {
    if (logits.ndim() != 4 || logits.channels() != 1) {
        throw std::runtime_error("spatial_softmax: expected [B,1,H,W] logits, got " + dims_str(logits.dims));
    }
    ensure_finite(logits, "spatial_softmax input");
    const int b = logits.batch(), h = logits.height(), w = logits.width();
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    PredictedHeatmap out;
    out.probs = Tensor(logits.dims);
    for (int n = 0; n < b; ++n) {
        const double* z = logits.data.data() + logits.offset4(n, 0, 0, 0);
        double* p = out.probs.data.data() + out.probs.offset4(n, 0, 0, 0);
        double zmax = z[0];
        for (std::int64_t i = 1; i < plane; ++i) {
            if (z[i] > zmax) zmax = z[i];
        }
        double sum = 0.0;
        for (std::int64_t i = 0; i < plane; ++i) {
            p[i] = std::exp(z[i] - zmax);
            sum += p[i];
        }
        const double inv = 1.0 / sum;
        for (std::int64_t i = 0; i < plane; ++i) p[i] *= inv;
    }
    return out;
}

Tensor spatial_softmax_backward(const Tensor& grad_probs, const PredictedHeatmap& out) {
    const Tensor& s = out.probs;
    const int b = s.batch(), h = s.height(), w = s.width();
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    Tensor grad_logits(s.dims);
    for (int n = 0; n < b; ++n) {
        const double* u = grad_probs.data.data() + grad_probs.offset4(n, 0, 0, 0);
        const double* sp = s.data.data() + s.offset4(n, 0, 0, 0);
        double* g = grad_logits.data.data() + grad_logits.offset4(n, 0, 0, 0);
        double dot = 0.0;
        for (std::int64_t i = 0; i < plane; ++i) dot += u[i] * sp[i];
        for (std::int64_t i = 0; i < plane; ++i) g[i] = sp[i] * (u[i] - dot);
    }
    return grad_logits;
}

KlResult kl_loss(const Tensor& labels, const PredictedHeatmap& pred) {
    const Tensor& p = pred.probs;
    if (!labels.same_dims(p)) {
        throw std::runtime_error("kl_loss: label dims " + dims_str(labels.dims) +
                                 " do not match prediction dims " + dims_str(p.dims));
    }
    const int b = p.batch();
    const std::int64_t plane = static_cast<std::int64_t>(p.height()) * p.width();
    const double inv_b = 1.0 / static_cast<double>(b);

    KlResult result;
    result.grad_logits = Tensor(p.dims);
    double total = 0.0;
    for (int n = 0; n < b; ++n) {
        const double* g = labels.data.data() + labels.offset4(n, 0, 0, 0);
        const double* q = p.data.data() + p.offset4(n, 0, 0, 0);
        double* gl = result.grad_logits.data.data() + result.grad_logits.offset4(n, 0, 0, 0);
        for (std::int64_t i = 0; i < plane; ++i) {
            if (g[i] > 0.0) {
                if (q[i] <= 0.0) {
                    throw std::runtime_error("kl_loss: prediction is zero where label > 0 (sample " +
                                             std::to_string(n) + "); upstream heatmap is corrupt");
                }
                total += g[i] * std::log(g[i] / q[i]);
            }
            gl[i] = (q[i] - g[i]) * inv_b;
        }
    }
    result.loss = total * inv_b;
    if (!std::isfinite(result.loss)) {
        throw std::runtime_error("kl_loss: non-finite loss");
    }
    return result;
}

std::vector<PixelPoint> peak_extract(const PredictedHeatmap& pred) {
    const Tensor& p = pred.probs;
    const int b = p.batch(), h = p.height(), w = p.width();
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    std::vector<PixelPoint> peaks(b);
    for (int n = 0; n < b; ++n) {
        const double* q = p.data.data() + p.offset4(n, 0, 0, 0);
        std::int64_t best = 0;
        for (std::int64_t i = 1; i < plane; ++i) {
            if (q[i] > q[best]) best = i;
        }
        peaks[n].x = static_cast<int>(best % w);
        peaks[n].y = static_cast<int>(best / w);
    }
    return peaks;
}

Point bbox_center(double xmin, double ymin, double xmax, double ymax) {
    if (xmax < xmin || ymax < ymin) {
        std::ostringstream msg;
        msg << "bbox_center: inverted box [" << xmin << "," << ymin << "," << xmax << "," << ymax << "]";
        throw std::runtime_error(msg.str());
    }
    return {(xmin + xmax) / 2.0, (ymin + ymax) / 2.0};
}

}  // namespace rinkkp
