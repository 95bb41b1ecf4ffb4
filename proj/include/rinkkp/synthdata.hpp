#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rinkkp/image.hpp"
#include "rinkkp/rng.hpp"

namespace rinkkp {

// Knobs for the synthetic rink-scene generator. Scenes hold one puck disk
// and a handful of player ellipses; player positions are biased to cluster
// near the puck so the context stream carries real signal.
struct SceneSpec {
    int frame_h = 64;
    int frame_w = 64;
    int n_players_min = 2;
    int n_players_max = 6;
    int puck_radius_px = 2;
    double blur_prob = 0.1;
    double occlusion_prob = 0.1;
    double cluster_bias = 0.8;  // probability a player spawns near the puck
    int n_matches = 3;
    std::uint64_t seed = 42;

    void validate() const;
};

struct Annotation {
    std::string frame_id;
    std::string image_path;    // relative to the dataset directory
    std::string context_path;
    std::optional<std::array<double, 4>> bbox;  // xmin, ymin, xmax, ymax
    std::array<double, 9> homography{1, 0, 0, 0, 1, 0, 0, 0, 1};
    std::string split;  // train | val | test
};

// Per-channel statistics of the training split in [0,1] scale, for the
// normalize augmentation.
struct DatasetStats {
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> stddev{1.0, 1.0, 1.0};
};

struct DatasetManifest {
    std::vector<Annotation> annotations;
    DatasetStats stats;
};

// Writes PPM frames, PPM context images, manifest.jsonl (one annotation per
// line) and stats.json under out_dir. Deterministic: identical spec and
// n_frames give byte-identical trees.
DatasetManifest generate(const SceneSpec& spec, int n_frames, const std::filesystem::path& out_dir);

DatasetManifest load_manifest(const std::filesystem::path& dataset_dir);

// Geometry of one rendered player.
struct PlayerEllipse {
    double cx = 0.0, cy = 0.0;
    double rx = 1.0, ry = 1.0;
    std::array<std::uint8_t, 3> color{0, 0, 0};
};

// Context image for a frame: the players rendered on black at full
// resolution, then 2x2 box-downsampled to half resolution.
Image render_context(const std::vector<PlayerEllipse>& players, int frame_h, int frame_w);

// Annotation <-> JSON-line and stats <-> JSON helpers used by the manifest
// files and tests.
std::string annotation_to_json_line(const Annotation& ann);
Annotation annotation_from_json_line(const std::string& line);

}  // namespace rinkkp
