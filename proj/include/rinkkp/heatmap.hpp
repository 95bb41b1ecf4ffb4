#pragma once

#include <vector>

#include "rinkkp/tensor.hpp"

namespace rinkkp {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct PixelPoint {
    int x = 0;
    int y = 0;
};

// Ground-truth Gaussian over an HxW grid. grid[0,0,y,x] =
// exp(-((x-mu_x)^2 + (y-mu_y)^2) / (2 sigma^2)) before normalization; the
// center may be fractional and is never rounded.
struct HeatmapLabel {
    Tensor grid;  // [1,1,H,W]
    double mu_x = 0.0;
    double mu_y = 0.0;
    double sigma = 0.0;
};

// Per-sample probability map: entries positive, each spatial plane sums to 1.
struct PredictedHeatmap {
    Tensor probs;  // [B,1,H,W]
};

HeatmapLabel gaussian_label(double mu_x, double mu_y, double sigma, int h, int w);

// Scales the grid to spatial sum 1; argmax location is unchanged.
HeatmapLabel normalize_label(const HeatmapLabel& label);

// Softmax over the HxW plane of each sample, stabilized by max subtraction.
PredictedHeatmap spatial_softmax(const Tensor& logits);

// Jacobian-vector product of the per-sample spatial softmax:
// dL/dz = s * (u - <u, s>) with u = dL/ds.
Tensor spatial_softmax_backward(const Tensor& grad_probs, const PredictedHeatmap& out);

struct KlResult {
    double loss = 0.0;
    Tensor grad_logits;  // (pred - label) / B, the gradient w.r.t. pre-softmax logits
};

// (1/B) sum_b sum_xy G log(G / Ghat) with 0 log(0/q) = 0. Labels must be
// normalized per sample; predictions must be positive wherever G > 0.
KlResult kl_loss(const Tensor& labels, const PredictedHeatmap& pred);

// Spatial argmax per sample; ties break to the smallest row-major index.
std::vector<PixelPoint> peak_extract(const PredictedHeatmap& pred);

Point bbox_center(double xmin, double ymin, double xmax, double ymax);

}  // namespace rinkkp
