#include "rinkkp/metrics.hpp"

#include <stdexcept>

#include <nlohmann/json.hpp>

namespace rinkkp {

namespace {

using json = nlohmann::json;

double rink_error(const Detection& d, const RinkSpec& rink) {
    const Point pred = to_rink(apply_homography(*d.homography, d.pred_px.x, d.pred_px.y), rink);
    const Point gt = to_rink(apply_homography(*d.homography, d.gt_px->x, d.gt_px->y), rink);
    return rsle(pred, gt);
}

}  // namespace

double ap_at_tau(const std::vector<Detection>& detections, double tau) {
    std::int64_t evaluable = 0, within = 0;
    for (const Detection& d : detections) {
        if (!d.gt_px) continue;
        ++evaluable;
        if (pixel_distance(d.pred_px, *d.gt_px) <= tau) ++within;
    }
    if (evaluable == 0) {
        throw std::runtime_error("ap_at_tau: no detections carry ground truth");
    }
    return 100.0 * static_cast<double>(within) / static_cast<double>(evaluable);
}

double map_tau(const std::vector<Detection>& detections) {
    double sum = 0.0;
    for (int tau : kApThresholds) {
        sum += ap_at_tau(detections, tau);
    }
    return sum / static_cast<double>(kApThresholds.size());
}

double rink_ap(const std::vector<Detection>& detections, const RinkSpec& rink, int multiple) {
    if (multiple != 1 && multiple != 2 && multiple != 4) {
        throw std::runtime_error("rink_ap: radius multiple must be 1, 2, or 4");
    }
    std::int64_t evaluable = 0, within = 0;
    for (const Detection& d : detections) {
        if (!d.gt_px || !d.homography) continue;
        ++evaluable;
        if (rink_error(d, rink) <= multiple * kPuckRadiusM) ++within;
    }
    if (evaluable == 0) {
        throw std::runtime_error("rink_ap: no detections carry ground truth and a homography");
    }
    return 100.0 * static_cast<double>(within) / static_cast<double>(evaluable);
}

MetricsReport summarize(const std::vector<Detection>& detections, const RinkSpec& rink) {
    MetricsReport report;
    double d_pixel_sum = 0.0;
    double rsle_sum = 0.0;
    int n_rink = 0;
    for (const Detection& d : detections) {
        if (!d.gt_px) {
            ++report.n_skipped;
            continue;
        }
        ++report.n_evaluated;
        d_pixel_sum += pixel_distance(d.pred_px, *d.gt_px);
        if (d.homography) {
            ++n_rink;
            rsle_sum += rink_error(d, rink);
        } else {
            ++report.n_rink_skipped;
        }
    }
    if (report.n_evaluated > 0) {
        for (int tau : kApThresholds) {
            report.ap_per_tau[tau] = ap_at_tau(detections, tau);
        }
        report.map_tau = map_tau(detections);
        report.d_pixel_mean = d_pixel_sum / report.n_evaluated;
    }
    if (n_rink > 0) {
        report.ap_r = rink_ap(detections, rink, 1);
        report.ap_r2 = rink_ap(detections, rink, 2);
        report.ap_r4 = rink_ap(detections, rink, 4);
        report.rsle_avg = rsle_sum / n_rink;
    }
    return report;
}

std::string report_to_json(const MetricsReport& report) {
    json j;
    json ap = json::object();
    for (const auto& [tau, value] : report.ap_per_tau) {
        ap[std::to_string(tau)] = value;
    }
    j["ap_per_tau"] = ap;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    j["map_tau"] = opt(report.map_tau);
    j["d_pixel_mean"] = opt(report.d_pixel_mean);
    j["ap_r"] = opt(report.ap_r);
    j["ap_r2"] = opt(report.ap_r2);
    j["ap_r4"] = opt(report.ap_r4);
    j["rsle_avg"] = opt(report.rsle_avg);
    j["n_evaluated"] = report.n_evaluated;
    j["n_skipped"] = report.n_skipped;
    return j.dump(2);
}

}  // namespace rinkkp
