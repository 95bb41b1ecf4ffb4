#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rinkkp/heatmap.hpp"
#include "rinkkp/model.hpp"
#include "rinkkp/synthdata.hpp"

namespace rinkkp {

struct AugmentFlags {
    bool flip = true;
    bool blur = true;
    bool noise = true;
    bool normalize = true;
};

struct TrainConfig {
    int epochs = 15;
    int batch_size = 5;
    double lr = 0.02;
    double plateau_factor = 0.1;
    int plateau_patience = 5;
    double sigma = 5.0;
    double p_drop = 0.01;
    std::uint64_t seed = 42;
    AugmentFlags augment;

    void validate() const;
};

// Reduce-on-plateau: observe() returns true on the epochs where the learning
// rate is cut by `factor`, i.e. after `patience` consecutive epochs without
// an improvement of at least min_delta.
struct PlateauScheduler {
    double factor = 0.1;
    int patience = 5;
    double min_delta = 1e-6;

    double best = std::numeric_limits<double>::infinity();
    int stale = 0;

    bool observe(double val_loss);
};

// Classical momentum: v <- momentum*v + grad; w <- w - lr*v.
struct SgdMomentum {
    double lr = 0.02;
    double momentum = 0.9;
    std::vector<std::string> names;
    std::vector<ParamTensor*> params;
    std::vector<Tensor> velocity;

    void bind(const std::vector<NamedParam>& named);
    void step();
};

// Applies the enabled augmentations in place: horizontal flip mirrors image,
// context and label x together; 3x3 Gaussian blur and additive noise touch
// the image only; normalize standardizes the image per channel with the
// dataset statistics. image is [1,3,H,W], context [1,3,H/2,W/2].
void augment(Tensor& image, Tensor& context, Point& label_center, Rng& rng,
             const AugmentFlags& flags, const DatasetStats& stats);

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::filesystem::path checkpoint_dir;
    std::filesystem::path log_path;
};

// Runs the full loop on the dataset under data_dir (train + val splits) and
// writes the best-validation checkpoint plus a JSON-lines log under out_dir.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const std::filesystem::path& data_dir, const std::filesystem::path& out_dir);

// Reconstructs a model (and the configs it was trained with) from a
// checkpoint directory written by train().
struct LoadedModel {
    ModelConfig model_cfg;
    TrainConfig train_cfg;
    PluccModel model;
};
LoadedModel load_model_checkpoint(const std::filesystem::path& ckpt_dir);

// Config <-> JSON used by checkpoints and the CLI config loader.
nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace rinkkp
