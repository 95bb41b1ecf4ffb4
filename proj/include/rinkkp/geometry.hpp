#pragma once

#include <array>

#include "rinkkp/heatmap.hpp"  // Point

namespace rinkkp {

// 3x3 projective map from the image plane to the rink template plane,
// row-major. Supplied per frame; estimating it is out of scope here.
struct Homography {
    std::array<double, 9> h{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Homography identity() { return Homography{}; }

    double determinant() const;
    // Closed-form adjugate inverse; rejects singular matrices.
    Homography inverse() const;
};

// Standard NHL rink and the top-down template it is rendered into.
struct RinkSpec {
    double length_m = 61.0;
    double width_m = 25.9;
    int template_w = 1280;
    int template_h = 720;
};

// p' = H * (x, y, 1), dehomogenized. Rejects points mapped to infinity.
Point apply_homography(const Homography& h, double x, double y);

// Scales template coordinates to meters: x/template_w * length, y/template_h * width.
Point to_rink(Point warped, const RinkSpec& rink);

// Rink-space localization error, meters.
double rsle(Point pred_rink, Point gt_rink);

// Image-space localization error, pixels.
double pixel_distance(Point pred, Point gt);

}  // namespace rinkkp
