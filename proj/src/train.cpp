#include "rinkkp/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rinkkp/serialize.hpp"

namespace rinkkp {

using json = nlohmann::json;

void TrainConfig::validate() const {
    if (epochs < 0) throw std::runtime_error("TrainConfig: epochs must be >= 0");
    if (batch_size < 1) throw std::runtime_error("TrainConfig: batch_size must be >= 1");
    if (!(lr > 0.0)) throw std::runtime_error("TrainConfig: lr must be > 0");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) {
        throw std::runtime_error("TrainConfig: plateau_factor must lie in (0,1)");
    }
    if (plateau_patience < 1) throw std::runtime_error("TrainConfig: plateau_patience must be >= 1");
    if (!(sigma > 0.0)) throw std::runtime_error("TrainConfig: sigma must be > 0");
    if (!(p_drop >= 0.0 && p_drop <= 1.0)) throw std::runtime_error("TrainConfig: p_drop must lie in [0,1]");
}

bool PlateauScheduler::observe(double val_loss) {
    if (best - val_loss >= min_delta) {
        best = val_loss;
        stale = 0;
        return false;
    }
    ++stale;
    if (stale >= patience) {
        stale = 0;
        return true;
    }
    return false;
}

void SgdMomentum::bind(const std::vector<NamedParam>& named) {
    names.clear();
    params.clear();
    velocity.clear();
    for (const NamedParam& p : named) {
        names.push_back(p.name);
        params.push_back(p.param);
        velocity.emplace_back(p.param->value.dims);
    }
}

void SgdMomentum::step() {
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& v = velocity[k];
        Tensor& w = params[k]->value;
        const Tensor& g = params[k]->grad;
        for (std::int64_t i = 0; i < w.size(); ++i) {
            v.data[i] = momentum * v.data[i] + g.data[i];
            w.data[i] -= lr * v.data[i];
        }
        ensure_finite(w, "sgd_momentum_step");
    }
}

namespace {

void flip_horizontal(Tensor& t) {
    const int b = t.batch(), c = t.channels(), h = t.height(), w = t.width();
    for (int n = 0; n < b; ++n) {
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < h; ++y) {
                double* row = t.data.data() + t.offset4(n, ch, y, 0);
                std::reverse(row, row + w);
            }
        }
    }
}

// 3x3 binomial blur per channel, replicated borders.
void blur_3x3(Tensor& t) {
    static const double kk[3] = {0.25, 0.5, 0.25};
    const int b = t.batch(), c = t.channels(), h = t.height(), w = t.width();
    std::vector<double> tmp(static_cast<std::size_t>(h) * w);
    for (int n = 0; n < b; ++n) {
        for (int ch = 0; ch < c; ++ch) {
            double* plane = t.data.data() + t.offset4(n, ch, 0, 0);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    double acc = 0.0;
                    for (int dy = -1; dy <= 1; ++dy) {
                        const int yy = std::clamp(y + dy, 0, h - 1);
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int xx = std::clamp(x + dx, 0, w - 1);
                            acc += kk[dy + 1] * kk[dx + 1] * plane[static_cast<std::int64_t>(yy) * w + xx];
                        }
                    }
                    tmp[static_cast<std::size_t>(y) * w + x] = acc;
                }
            }
            std::copy(tmp.begin(), tmp.end(), plane);
        }
    }
}

void normalize_channels(Tensor& t, const DatasetStats& stats) {
    const int b = t.batch(), h = t.height(), w = t.width();
    for (int n = 0; n < b; ++n) {
        for (int c = 0; c < 3; ++c) {
            const double mean = stats.mean[static_cast<std::size_t>(c)];
            const double inv = 1.0 / stats.stddev[static_cast<std::size_t>(c)];
            double* plane = t.data.data() + t.offset4(n, c, 0, 0);
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
                plane[i] = (plane[i] - mean) * inv;
            }
        }
    }
}

}  // namespace

void augment(Tensor& image, Tensor& context, Point& label_center, Rng& rng,
             const AugmentFlags& flags, const DatasetStats& stats) {
    if (flags.flip && rng.bernoulli(0.5)) {
        flip_horizontal(image);
        flip_horizontal(context);
        label_center.x = (image.width() - 1) - label_center.x;
    }
    if (flags.blur && rng.bernoulli(0.5)) {
        blur_3x3(image);
    }
    if (flags.noise && rng.bernoulli(0.5)) {
        for (double& v : image.data) {
            v = std::clamp(v + rng.normal(0.0, 0.02), 0.0, 1.0);
        }
    }
    if (flags.normalize) {
        normalize_channels(image, stats);
    }
}

namespace {

struct MemSample {
    std::string frame_id;
    Tensor image;
    Tensor context;
    Point center;
};

std::vector<MemSample> load_split(const std::filesystem::path& data_dir,
                                  const DatasetManifest& manifest, const std::string& split) {
    std::vector<MemSample> out;
    for (const Annotation& ann : manifest.annotations) {
        if (ann.split != split || !ann.bbox) continue;
        MemSample s;
        s.frame_id = ann.frame_id;
        s.image = image_to_tensor(read_ppm(data_dir / ann.image_path));
        s.context = image_to_tensor(read_ppm(data_dir / ann.context_path));
        const auto& b = *ann.bbox;
        s.center = bbox_center(b[0], b[1], b[2], b[3]);
        out.push_back(std::move(s));
    }
    return out;
}

struct Batch {
    Tensor images;
    Tensor contexts;
    Tensor labels;  // normalized Gaussian labels, [B,1,H,W]
    std::vector<std::string> frame_ids;
};

Batch assemble(const std::vector<MemSample>& samples, const std::vector<std::size_t>& order,
               std::size_t begin, std::size_t end, bool do_augment, Rng& aug_rng,
               const AugmentFlags& flags, const DatasetStats& stats, double sigma) {
    std::vector<Tensor> images, contexts, labels;
    Batch batch;
    for (std::size_t k = begin; k < end; ++k) {
        const MemSample& s = samples[order[k]];
        Tensor img = s.image;
        Tensor ctx = s.context;
        Point center = s.center;
        if (do_augment) {
            augment(img, ctx, center, aug_rng, flags, stats);
        } else if (flags.normalize) {
            normalize_channels(img, stats);
        }
        HeatmapLabel label = normalize_label(
            gaussian_label(center.x, center.y, sigma, img.height(), img.width()));
        images.push_back(std::move(img));
        contexts.push_back(std::move(ctx));
        labels.push_back(std::move(label.grid));
        batch.frame_ids.push_back(s.frame_id);
    }
    auto ptrs = [](const std::vector<Tensor>& v) {
        std::vector<const Tensor*> p;
        p.reserve(v.size());
        for (const Tensor& t : v) p.push_back(&t);
        return p;
    };
    batch.images = stack_batch(ptrs(images));
    batch.contexts = stack_batch(ptrs(contexts));
    batch.labels = stack_batch(ptrs(labels));
    return batch;
}

double validation_loss(PluccModel& model, const std::vector<MemSample>& samples, int batch_size,
                       const AugmentFlags& flags, const DatasetStats& stats, double sigma) {
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng unused(0);
    double total = 0.0;
    for (std::size_t begin = 0; begin < samples.size(); begin += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(samples.size(), begin + static_cast<std::size_t>(batch_size));
        Batch batch = assemble(samples, order, begin, end, false, unused, flags, stats, sigma);
        Tensor logits = model.forward(batch.images, batch.contexts, Mode::eval, nullptr);
        const KlResult kl = kl_loss(batch.labels, spatial_softmax(logits));
        total += kl.loss * static_cast<double>(end - begin);
    }
    return total / static_cast<double>(samples.size());
}

Checkpoint make_checkpoint(PluccModel& model, const SgdMomentum& opt,
                           const ModelConfig& model_cfg, const TrainConfig& train_cfg) {
    Checkpoint ckpt;
    ckpt.tensors = export_state(model);
    for (std::size_t k = 0; k < opt.names.size(); ++k) {
        ckpt.tensors.emplace("velocity/" + opt.names[k], opt.velocity[k]);
    }
    ckpt.meta["model_config"] = model_config_to_json(model_cfg);
    ckpt.meta["train_config"] = train_config_to_json(train_cfg);
    return ckpt;
}

}  // namespace

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const std::filesystem::path& data_dir, const std::filesystem::path& out_dir) {
    model_cfg.validate();
    train_cfg.validate();
    const DatasetManifest manifest = load_manifest(data_dir);
    const std::vector<MemSample> train_samples = load_split(data_dir, manifest, "train");
    const std::vector<MemSample> val_samples = load_split(data_dir, manifest, "val");
    if (train_samples.empty()) {
        throw std::runtime_error("train: no labeled train-split frames in " + data_dir.string());
    }
    if (val_samples.empty()) {
        throw std::runtime_error("train: no labeled val-split frames in " + data_dir.string());
    }

    const Rng root(train_cfg.seed);
    Rng init_rng = root.fork(1);
    Rng shuffle_rng = root.fork(2);
    Rng aug_rng = root.fork(3);
    Rng drop_rng = root.fork(4);

    PluccModel model(model_cfg, init_rng);
    SgdMomentum opt;
    opt.lr = train_cfg.lr;
    opt.bind(model.parameters());
    PlateauScheduler sched;
    sched.factor = train_cfg.plateau_factor;
    sched.patience = train_cfg.plateau_patience;

    TrainResult result;
    Checkpoint best = make_checkpoint(model, opt, model_cfg, train_cfg);

    std::vector<std::size_t> order(train_samples.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
        // Fisher-Yates with the dedicated stream.
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.uniform_int(static_cast<int>(i)))]);
        }
        double epoch_loss = 0.0;
        int batch_index = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(train_cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(train_cfg.batch_size));
            Batch batch = assemble(train_samples, order, begin, end, true, aug_rng,
                                   train_cfg.augment, manifest.stats, train_cfg.sigma);
            try {
                model.zero_grad();
                ModelCache cache;
                Tensor logits = model.forward_with_context_dropout(batch.images, batch.contexts, drop_rng,
                                                                   train_cfg.p_drop, Mode::train, &cache);
                const KlResult kl = kl_loss(batch.labels, spatial_softmax(logits));
                model.backward(kl.grad_logits, cache);
                opt.step();
                epoch_loss += kl.loss * static_cast<double>(end - begin);
            } catch (const std::exception& e) {
                std::ostringstream msg;
                msg << "train: aborting at epoch " << epoch << " batch " << batch_index << " (frames";
                for (const std::string& id : batch.frame_ids) msg << " " << id;
                msg << "): " << e.what();
                throw std::runtime_error(msg.str());
            }
            ++batch_index;
        }
        const double train_loss = epoch_loss / static_cast<double>(train_samples.size());
        const double val_loss = validation_loss(model, val_samples, train_cfg.batch_size,
                                                train_cfg.augment, manifest.stats, train_cfg.sigma);
        result.log.push_back({epoch, train_loss, val_loss, opt.lr});
        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            best = make_checkpoint(model, opt, model_cfg, train_cfg);
        }
        if (sched.observe(val_loss)) {
            opt.lr *= sched.factor;
        }
    }

    std::filesystem::create_directories(out_dir);
    result.checkpoint_dir = out_dir / "checkpoint";
    save_checkpoint(result.checkpoint_dir, best);
    result.log_path = out_dir / "train_log.jsonl";
    std::ofstream log_out(result.log_path);
    if (!log_out) {
        throw std::runtime_error("train: cannot write log at " + result.log_path.string());
    }
    for (const EpochLog& e : result.log) {
        json j;
        j["epoch"] = e.epoch;
        j["train_loss"] = e.train_loss;
        j["val_loss"] = e.val_loss;
        j["lr"] = e.lr;
        log_out << j.dump() << "\n";
    }
    return result;
}

LoadedModel load_model_checkpoint(const std::filesystem::path& ckpt_dir) {
    Checkpoint ckpt = load_checkpoint(ckpt_dir);
    const ModelConfig model_cfg = model_config_from_json(ckpt.meta.at("model_config"));
    const TrainConfig train_cfg = train_config_from_json(ckpt.meta.at("train_config"));
    Rng rng(0);
    LoadedModel loaded{model_cfg, train_cfg, PluccModel(model_cfg, rng)};
    import_state(loaded.model, ckpt.tensors);
    return loaded;
}

json model_config_to_json(const ModelConfig& cfg) {
    json j;
    j["input_h"] = cfg.input_h;
    j["input_w"] = cfg.input_w;
    j["base_channels"] = cfg.base_channels;
    j["pyramid_depth"] = cfg.pyramid_depth;
    j["sigma"] = cfg.sigma;
    j["p_drop"] = cfg.p_drop;
    return j;
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.input_h = j.at("input_h").get<int>();
    cfg.input_w = j.at("input_w").get<int>();
    cfg.base_channels = j.at("base_channels").get<int>();
    cfg.pyramid_depth = j.at("pyramid_depth").get<int>();
    cfg.sigma = j.at("sigma").get<double>();
    cfg.p_drop = j.at("p_drop").get<double>();
    return cfg;
}

json train_config_to_json(const TrainConfig& cfg) {
    json j;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["lr"] = cfg.lr;
    j["plateau_factor"] = cfg.plateau_factor;
    j["plateau_patience"] = cfg.plateau_patience;
    j["sigma"] = cfg.sigma;
    j["p_drop"] = cfg.p_drop;
    j["seed"] = cfg.seed;
    j["augment"] = {{"flip", cfg.augment.flip},
                    {"blur", cfg.augment.blur},
                    {"noise", cfg.augment.noise},
                    {"normalize", cfg.augment.normalize}};
    return j;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.epochs = j.at("epochs").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.lr = j.at("lr").get<double>();
    cfg.plateau_factor = j.at("plateau_factor").get<double>();
    cfg.plateau_patience = j.at("plateau_patience").get<int>();
    cfg.sigma = j.at("sigma").get<double>();
    cfg.p_drop = j.at("p_drop").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    const json& aug = j.at("augment");
    cfg.augment.flip = aug.at("flip").get<bool>();
    cfg.augment.blur = aug.at("blur").get<bool>();
    cfg.augment.noise = aug.at("noise").get<bool>();
    cfg.augment.normalize = aug.at("normalize").get<bool>();
    return cfg;
}

}  // namespace rinkkp
