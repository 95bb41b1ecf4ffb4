#include "rinkkp/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace rinkkp {

namespace {

using json = nlohmann::json;

void draw_disk(Image& img, double cx, double cy, double r,
               std::uint8_t cr, std::uint8_t cg, std::uint8_t cb) {
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
    const int y1 = std::min(img.h - 1, static_cast<int>(std::ceil(cy + r)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
    const int x1 = std::min(img.w - 1, static_cast<int>(std::ceil(cx + r)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy <= r * r) {
                std::uint8_t* p = img.px(y, x);
                p[0] = cr;
                p[1] = cg;
                p[2] = cb;
            }
        }
    }
}

void draw_ellipse(Image& img, const PlayerEllipse& e) {
    const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - e.ry)));
    const int y1 = std::min(img.h - 1, static_cast<int>(std::ceil(e.cy + e.ry)));
    const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - e.rx)));
    const int x1 = std::min(img.w - 1, static_cast<int>(std::ceil(e.cx + e.rx)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double nx = (x - e.cx) / e.rx, ny = (y - e.cy) / e.ry;
            if (nx * nx + ny * ny <= 1.0) {
                std::uint8_t* p = img.px(y, x);
                p[0] = e.color[0];
                p[1] = e.color[1];
                p[2] = e.color[2];
            }
        }
    }
}

void draw_vline(Image& img, int x, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || x >= img.w) return;
    for (int y = 0; y < img.h; ++y) {
        std::uint8_t* p = img.px(y, x);
        p[0] = r;
        p[1] = g;
        p[2] = b;
    }
}

void gaussian_blur_3x3(Image& img) {
    static const int kk[3] = {1, 2, 1};
    Image src = img;
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            int acc[3] = {0, 0, 0};
            for (int dy = -1; dy <= 1; ++dy) {
                const int yy = std::clamp(y + dy, 0, img.h - 1);
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xx = std::clamp(x + dx, 0, img.w - 1);
                    const int wgt = kk[dy + 1] * kk[dx + 1];
                    const std::uint8_t* p = src.px(yy, xx);
                    acc[0] += wgt * p[0];
                    acc[1] += wgt * p[1];
                    acc[2] += wgt * p[2];
                }
            }
            std::uint8_t* o = img.px(y, x);
            o[0] = static_cast<std::uint8_t>((acc[0] + 8) / 16);
            o[1] = static_cast<std::uint8_t>((acc[1] + 8) / 16);
            o[2] = static_cast<std::uint8_t>((acc[2] + 8) / 16);
        }
    }
}

Image downsample2(const Image& src) {
    Image out(src.h / 2, src.w / 2);
    for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const int sum = src.px(2 * y, 2 * x)[c] + src.px(2 * y, 2 * x + 1)[c] +
                                src.px(2 * y + 1, 2 * x)[c] + src.px(2 * y + 1, 2 * x + 1)[c];
                out.px(y, x)[c] = static_cast<std::uint8_t>((sum + 2) / 4);
            }
        }
    }
    return out;
}

// Direct linear transform from the four frame corners to a target quad;
// solves the 8x8 system with partial pivoting.
std::array<double, 9> homography_from_corners(const std::array<std::array<double, 2>, 4>& src,
                                              const std::array<std::array<double, 2>, 4>& dst) {
    double a[8][9] = {};
    for (int i = 0; i < 4; ++i) {
        const double x = src[i][0], y = src[i][1];
        const double u = dst[i][0], v = dst[i][1];
        double* r0 = a[2 * i];
        double* r1 = a[2 * i + 1];
        r0[0] = x; r0[1] = y; r0[2] = 1; r0[6] = -u * x; r0[7] = -u * y; r0[8] = u;
        r1[3] = x; r1[4] = y; r1[5] = 1; r1[6] = -v * x; r1[7] = -v * y; r1[8] = v;
    }
    for (int col = 0; col < 8; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 8; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        if (std::abs(a[pivot][col]) < 1e-12) {
            throw std::runtime_error("homography_from_corners: degenerate correspondence");
        }
        std::swap(a[col], a[pivot]);
        for (int r = 0; r < 8; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            for (int c = col; c < 9; ++c) a[r][c] -= f * a[col][c];
        }
    }
    std::array<double, 9> h;
    for (int i = 0; i < 8; ++i) h[static_cast<std::size_t>(i)] = a[i][8] / a[i][i];
    h[8] = 1.0;
    return h;
}

// Mild perspective warp onto the 1280x720 template: each target corner is
// jittered inward by up to 15% of the template extents, so every frame point
// lands inside the template (and therefore inside the rink after scaling).
std::array<double, 9> make_match_homography(Rng& rng, int frame_w, int frame_h) {
    const double tw = 1280.0, th = 720.0;
    auto jx = [&rng, tw]() { return rng.uniform(0.0, 0.15) * tw; };
    auto jy = [&rng, th]() { return rng.uniform(0.0, 0.15) * th; };
    const std::array<std::array<double, 2>, 4> src = {{{0.0, 0.0},
                                                       {static_cast<double>(frame_w), 0.0},
                                                       {static_cast<double>(frame_w), static_cast<double>(frame_h)},
                                                       {0.0, static_cast<double>(frame_h)}}};
    const std::array<std::array<double, 2>, 4> dst = {{{jx(), jy()},
                                                       {tw - jx(), jy()},
                                                       {tw - jx(), th - jy()},
                                                       {jx(), th - jy()}}};
    return homography_from_corners(src, dst);
}

struct MatchLayout {
    std::array<double, 9> homography;
    int center_line_x;
    int blue_line_left;
    int blue_line_right;
    std::array<std::uint8_t, 3> team_a;
    std::array<std::uint8_t, 3> team_b;
};

MatchLayout make_match_layout(Rng& rng, const SceneSpec& spec) {
    MatchLayout m;
    m.homography = make_match_homography(rng, spec.frame_w, spec.frame_h);
    const int w = spec.frame_w;
    m.center_line_x = w / 2 + rng.uniform_int(5) - 2;
    m.blue_line_left = w / 3 + rng.uniform_int(5) - 2;
    m.blue_line_right = 2 * w / 3 + rng.uniform_int(5) - 2;
    m.team_a = {static_cast<std::uint8_t>(170 + rng.uniform_int(60)),
                static_cast<std::uint8_t>(30 + rng.uniform_int(40)),
                static_cast<std::uint8_t>(30 + rng.uniform_int(40))};
    m.team_b = {static_cast<std::uint8_t>(30 + rng.uniform_int(40)),
                static_cast<std::uint8_t>(50 + rng.uniform_int(40)),
                static_cast<std::uint8_t>(160 + rng.uniform_int(70))};
    return m;
}

// Puck centers live on the half-pixel lattice: flip augmentation then maps
// centers exactly, keeping the label-flip commutation bit-exact.
double half_pixel_uniform(Rng& rng, double lo, double hi) {
    const int k_lo = static_cast<int>(std::ceil(lo * 2.0));
    const int k_hi = static_cast<int>(std::floor(hi * 2.0));
    return static_cast<double>(k_lo + rng.uniform_int(k_hi - k_lo + 1)) / 2.0;
}

std::string split_for_match(int match, int n_matches) {
    if (n_matches < 2) return "train";
    const int n_val = std::max(1, n_matches / 5);
    const int n_test = n_matches >= 3 ? std::max(1, n_matches / 5) : 0;
    const int n_train = n_matches - n_val - n_test;
    if (match < n_train) return "train";
    if (match < n_train + n_val) return "val";
    return "test";
}

}  // namespace

void SceneSpec::validate() const {
    if (frame_h < 16 || frame_w < 16 || frame_h % 2 != 0 || frame_w % 2 != 0) {
        throw std::runtime_error("SceneSpec: frame extents must be even and >= 16");
    }
    if (puck_radius_px < 1) {
        throw std::runtime_error("SceneSpec: puck_radius_px must be >= 1");
    }
    if (2 * (puck_radius_px + 1) + 1 >= std::min(frame_h, frame_w)) {
        throw std::runtime_error("SceneSpec: puck_radius_px leaves no room to place the puck");
    }
    if (n_players_min < 0 || n_players_max < n_players_min) {
        throw std::runtime_error("SceneSpec: bad player count range");
    }
    for (double p : {blur_prob, occlusion_prob, cluster_bias}) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw std::runtime_error("SceneSpec: probabilities must lie in [0,1]");
        }
    }
    if (n_matches < 1) {
        throw std::runtime_error("SceneSpec: n_matches must be >= 1");
    }
}

Image render_context(const std::vector<PlayerEllipse>& players, int frame_h, int frame_w) {
    Image full(frame_h, frame_w);
    for (const PlayerEllipse& p : players) {
        draw_ellipse(full, p);
    }
    return downsample2(full);
}

DatasetManifest generate(const SceneSpec& spec, int n_frames, const std::filesystem::path& out_dir) {
    spec.validate();
    if (n_frames < 0) {
        throw std::runtime_error("generate: n_frames must be >= 0");
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    std::filesystem::create_directories(out_dir / "contexts", ec);
    if (ec) {
        throw std::runtime_error("generate: cannot create " + out_dir.string() + ": " + ec.message());
    }

    const Rng base(spec.seed);
    std::vector<MatchLayout> matches;
    matches.reserve(static_cast<std::size_t>(spec.n_matches));
    for (int m = 0; m < spec.n_matches; ++m) {
        Rng match_rng = base.fork(0x4D000000ULL + static_cast<std::uint64_t>(m));
        matches.push_back(make_match_layout(match_rng, spec));
    }

    DatasetManifest manifest;
    double ch_sum[3] = {0, 0, 0}, ch_sumsq[3] = {0, 0, 0};
    std::int64_t n_train_px = 0;

    const int h = spec.frame_h, w = spec.frame_w;
    const double margin = spec.puck_radius_px + 1.0;

    for (int i = 0; i < n_frames; ++i) {
        const int match = static_cast<int>(static_cast<std::int64_t>(i) * spec.n_matches / n_frames);
        const MatchLayout& layout = matches[static_cast<std::size_t>(match)];
        Rng rng = base.fork(0xF0000000ULL + static_cast<std::uint64_t>(i));

        const double puck_x = half_pixel_uniform(rng, margin, w - 1 - margin);
        const double puck_y = half_pixel_uniform(rng, margin, h - 1 - margin);

        const int n_players = spec.n_players_min + rng.uniform_int(spec.n_players_max - spec.n_players_min + 1);
        std::vector<PlayerEllipse> players;
        players.reserve(static_cast<std::size_t>(n_players) + 1);
        const double spread = w / 6.0;
        for (int p = 0; p < n_players; ++p) {
            PlayerEllipse e;
            e.rx = rng.uniform(2.5, 4.5);
            e.ry = rng.uniform(5.0, 8.0);
            const double clearance = e.ry + spec.puck_radius_px + 1.0;
            for (int attempt = 0; attempt < 20; ++attempt) {
                if (rng.bernoulli(spec.cluster_bias)) {
                    e.cx = std::clamp(puck_x + rng.normal(0.0, spread), 1.0, w - 2.0);
                    e.cy = std::clamp(puck_y + rng.normal(0.0, spread), 1.0, h - 2.0);
                } else {
                    e.cx = rng.uniform(1.0, w - 2.0);
                    e.cy = rng.uniform(1.0, h - 2.0);
                }
                const double dx = e.cx - puck_x, dy = e.cy - puck_y;
                if (dx * dx + dy * dy >= clearance * clearance) break;
            }
            const auto& team = rng.bernoulli(0.5) ? layout.team_a : layout.team_b;
            const int jitter = rng.uniform_int(21) - 10;
            for (int c = 0; c < 3; ++c) {
                e.color[static_cast<std::size_t>(c)] =
                    static_cast<std::uint8_t>(std::clamp(static_cast<int>(team[static_cast<std::size_t>(c)]) + jitter, 0, 255));
            }
            players.push_back(e);
        }
        const bool occluded = rng.bernoulli(spec.occlusion_prob);
        if (occluded) {
            PlayerEllipse e;
            e.cx = std::clamp(puck_x + rng.uniform(-1.0, 1.0), 1.0, w - 2.0);
            e.cy = std::clamp(puck_y + rng.uniform(-1.0, 1.0), 1.0, h - 2.0);
            e.rx = rng.uniform(3.5, 4.5);
            e.ry = rng.uniform(6.0, 8.0);
            e.color = rng.bernoulli(0.5) ? layout.team_a : layout.team_b;
            players.push_back(e);
        }

        Image frame(h, w);
        frame.fill(233, 236, 240);  // ice
        draw_vline(frame, layout.blue_line_left, 40, 60, 180);
        draw_vline(frame, layout.blue_line_right, 40, 60, 180);
        draw_vline(frame, layout.center_line_x, 200, 40, 40);
        draw_disk(frame, puck_x, puck_y, spec.puck_radius_px, 12, 12, 12);
        for (const PlayerEllipse& p : players) {
            draw_ellipse(frame, p);
        }
        if (rng.bernoulli(spec.blur_prob)) {
            gaussian_blur_3x3(frame);
        }
        const Image context = render_context(players, h, w);

        std::ostringstream id;
        id << "m" << std::setw(2) << std::setfill('0') << match << "_f" << std::setw(6) << i;

        Annotation ann;
        ann.frame_id = id.str();
        ann.image_path = "images/" + ann.frame_id + ".ppm";
        ann.context_path = "contexts/" + ann.frame_id + ".ppm";
        ann.bbox = std::array<double, 4>{puck_x - spec.puck_radius_px, puck_y - spec.puck_radius_px,
                                         puck_x + spec.puck_radius_px, puck_y + spec.puck_radius_px};
        ann.homography = layout.homography;
        ann.split = split_for_match(match, spec.n_matches);

        write_ppm(out_dir / ann.image_path, frame);
        write_ppm(out_dir / ann.context_path, context);

        if (ann.split == "train") {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const std::uint8_t* p = frame.px(y, x);
                    for (int c = 0; c < 3; ++c) {
                        const double v = p[c] / 255.0;
                        ch_sum[c] += v;
                        ch_sumsq[c] += v * v;
                    }
                }
            }
            n_train_px += static_cast<std::int64_t>(h) * w;
        }
        manifest.annotations.push_back(std::move(ann));
    }

    if (n_train_px > 0) {
        for (int c = 0; c < 3; ++c) {
            const double mean = ch_sum[c] / static_cast<double>(n_train_px);
            const double var = std::max(0.0, ch_sumsq[c] / static_cast<double>(n_train_px) - mean * mean);
            manifest.stats.mean[static_cast<std::size_t>(c)] = mean;
            manifest.stats.stddev[static_cast<std::size_t>(c)] = std::max(1e-6, std::sqrt(var));
        }
    }

    std::ofstream mf(out_dir / "manifest.jsonl");
    if (!mf) {
        throw std::runtime_error("generate: cannot write manifest in " + out_dir.string());
    }
    for (const Annotation& ann : manifest.annotations) {
        mf << annotation_to_json_line(ann) << "\n";
    }
    json stats;
    stats["mean"] = manifest.stats.mean;
    stats["stddev"] = manifest.stats.stddev;
    std::ofstream sf(out_dir / "stats.json");
    sf << stats.dump(2) << "\n";
    if (!mf || !sf) {
        throw std::runtime_error("generate: manifest write failed in " + out_dir.string());
    }
    return manifest;
}

std::string annotation_to_json_line(const Annotation& ann) {
    json j;
    j["frame_id"] = ann.frame_id;
    j["image_path"] = ann.image_path;
    j["context_path"] = ann.context_path;
    j["bbox"] = ann.bbox ? json(*ann.bbox) : json(nullptr);
    j["homography"] = ann.homography;
    j["split"] = ann.split;
    return j.dump();
}

Annotation annotation_from_json_line(const std::string& line) {
    const json j = json::parse(line);
    Annotation ann;
    ann.frame_id = j.at("frame_id").get<std::string>();
    ann.image_path = j.at("image_path").get<std::string>();
    ann.context_path = j.at("context_path").get<std::string>();
    if (!j.at("bbox").is_null()) {
        ann.bbox = j.at("bbox").get<std::array<double, 4>>();
    }
    ann.homography = j.at("homography").get<std::array<double, 9>>();
    ann.split = j.at("split").get<std::string>();
    return ann;
}

DatasetManifest load_manifest(const std::filesystem::path& dataset_dir) {
    std::ifstream in(dataset_dir / "manifest.jsonl");
    if (!in) {
        throw std::runtime_error("load_manifest: no manifest.jsonl in " + dataset_dir.string());
    }
    DatasetManifest manifest;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        manifest.annotations.push_back(annotation_from_json_line(line));
    }
    std::ifstream sf(dataset_dir / "stats.json");
    if (sf) {
        const json stats = json::parse(sf);
        manifest.stats.mean = stats.at("mean").get<std::array<double, 3>>();
        manifest.stats.stddev = stats.at("stddev").get<std::array<double, 3>>();
    }
    return manifest;
}

}  // namespace rinkkp
