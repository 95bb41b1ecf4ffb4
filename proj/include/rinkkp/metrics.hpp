#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rinkkp/geometry.hpp"

namespace rinkkp {

// One prediction per frame. Frames without ground truth are excluded from
// every distance statistic; frames with ground truth but no homography are
// skipped by the rink-space metrics only.
struct Detection {
    std::string frame_id;
    Point pred_px;
    std::optional<Point> gt_px;
    std::optional<Homography> homography;
};

inline constexpr double kPuckRadiusM = 0.0381;
inline constexpr std::array<int, 4> kApThresholds{5, 10, 25, 50};

// Percentage of ground-truth frames whose pixel error is within tau.
double ap_at_tau(const std::vector<Detection>& detections, double tau);

// Mean of AP over tau in {5, 10, 25, 50}.
double map_tau(const std::vector<Detection>& detections);

// Percentage of frames (with gt and homography) whose rink-space error is
// within multiple * puck radius. multiple in {1, 2, 4}.
double rink_ap(const std::vector<Detection>& detections, const RinkSpec& rink, int multiple);

struct MetricsReport {
    std::map<int, double> ap_per_tau;         // empty when nothing evaluable
    std::optional<double> map_tau;
    std::optional<double> d_pixel_mean;
    std::optional<double> ap_r;
    std::optional<double> ap_r2;
    std::optional<double> ap_r4;
    std::optional<double> rsle_avg;
    int n_evaluated = 0;                      // frames with ground truth
    int n_skipped = 0;                        // frames without ground truth
    int n_rink_skipped = 0;                   // gt frames lacking a homography (not serialized)
};

MetricsReport summarize(const std::vector<Detection>& detections, const RinkSpec& rink);

// JSON object with exactly the report fields named in the wire contract.
std::string report_to_json(const MetricsReport& report);

}  // namespace rinkkp
