#include "rinkkp/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace rinkkp {

double Homography::determinant() const {
    return h[0] * (h[4] * h[8] - h[5] * h[7]) -
           h[1] * (h[3] * h[8] - h[5] * h[6]) +
           h[2] * (h[3] * h[7] - h[4] * h[6]);
}

Homography Homography::inverse() const {
    const double det = determinant();
    double scale = 0.0;
    for (double v : h) scale = std::max(scale, std::abs(v));
    if (std::abs(det) < 1e-12 * std::max(1.0, scale * scale * scale)) {
        throw std::runtime_error("Homography: matrix is singular");
    }
    const double inv = 1.0 / det;
    Homography out;
    out.h = {
        (h[4] * h[8] - h[5] * h[7]) * inv,
        (h[2] * h[7] - h[1] * h[8]) * inv,
        (h[1] * h[5] - h[2] * h[4]) * inv,
        (h[5] * h[6] - h[3] * h[8]) * inv,
        (h[0] * h[8] - h[2] * h[6]) * inv,
        (h[2] * h[3] - h[0] * h[5]) * inv,
        (h[3] * h[7] - h[4] * h[6]) * inv,
        (h[1] * h[6] - h[0] * h[7]) * inv,
        (h[0] * h[4] - h[1] * h[3]) * inv,
    };
    return out;
}

Point apply_homography(const Homography& hm, double x, double y) {
    const auto& h = hm.h;
    const double px = h[0] * x + h[1] * y + h[2];
    const double py = h[3] * x + h[4] * y + h[5];
    const double pz = h[6] * x + h[7] * y + h[8];
    if (std::abs(pz) < 1e-12) {
        throw std::runtime_error("apply_homography: point maps to infinity");
    }
    return {px / pz, py / pz};
}

Point to_rink(Point warped, const RinkSpec& rink) {
    return {warped.x / rink.template_w * rink.length_m,
            warped.y / rink.template_h * rink.width_m};
}

double rsle(Point pred_rink, Point gt_rink) {
    const double dx = pred_rink.x - gt_rink.x;
    const double dy = pred_rink.y - gt_rink.y;
    return std::sqrt(dx * dx + dy * dy);
}

double pixel_distance(Point pred, Point gt) {
    const double dx = pred.x - gt.x;
    const double dy = pred.y - gt.y;
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace rinkkp
