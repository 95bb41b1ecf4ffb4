#include "rinkkp/cli.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rinkkp/config.hpp"
#include "rinkkp/metrics.hpp"
#include "rinkkp/serialize.hpp"
#include "rinkkp/train.hpp"

namespace rinkkp {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Seed precedence: explicit flag, then config file key, then RINKKP_SEED,
// then the built-in default already present in the config.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag_seed, const RunConfig& cfg,
                           const std::string& key, std::uint64_t current) {
    if (flag_seed) return *flag_seed;
    if (cfg.keys_present.count(key)) return current;
    if (const char* env = std::getenv("RINKKP_SEED")) {
        try {
            return static_cast<std::uint64_t>(std::stoull(env));
        } catch (const std::exception&) {
            throw std::invalid_argument("RINKKP_SEED is not an unsigned integer");
        }
    }
    return current;
}

struct EvalOptions {
    fs::path ckpt_dir;
    fs::path data_dir;
    std::string split = "test";
    std::optional<fs::path> detections;
    int threads = 1;
    std::optional<fs::path> dump_heatmaps;
    bool zero_image = false;  // context-only inference
};

std::vector<Detection> detections_from_file(const std::vector<Annotation>& annotations,
                                            const fs::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw std::runtime_error("cannot open detections file " + file.string());
    }
    std::map<std::string, Point> preds;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        preds[j.at("frame_id").get<std::string>()] = {j.at("x").get<double>(), j.at("y").get<double>()};
    }
    std::vector<Detection> detections;
    detections.reserve(annotations.size());
    for (const Annotation& ann : annotations) {
        auto it = preds.find(ann.frame_id);
        if (it == preds.end()) {
            throw std::runtime_error("detections file lacks frame " + ann.frame_id);
        }
        Detection d;
        d.frame_id = ann.frame_id;
        d.pred_px = it->second;
        if (ann.bbox) {
            const auto& b = *ann.bbox;
            d.gt_px = bbox_center(b[0], b[1], b[2], b[3]);
        }
        Homography h;
        std::copy(ann.homography.begin(), ann.homography.end(), h.h.begin());
        d.homography = h;
        detections.push_back(std::move(d));
        preds.erase(it);
    }
    if (!preds.empty()) {
        throw std::runtime_error("detections file names unknown frame " + preds.begin()->first);
    }
    return detections;
}

void normalize_channels_inplace(Tensor& t, const DatasetStats& stats) {
    const std::int64_t plane = static_cast<std::int64_t>(t.height()) * t.width();
    for (int c = 0; c < 3; ++c) {
        const double mean = stats.mean[static_cast<std::size_t>(c)];
        const double inv = 1.0 / stats.stddev[static_cast<std::size_t>(c)];
        double* p = t.data.data() + t.offset4(0, c, 0, 0);
        for (std::int64_t i = 0; i < plane; ++i) p[i] = (p[i] - mean) * inv;
    }
}

std::vector<Detection> detections_from_model(const std::vector<Annotation>& annotations,
                                             const EvalOptions& opt) {
    LoadedModel loaded = load_model_checkpoint(opt.ckpt_dir);
    const DatasetManifest manifest = load_manifest(opt.data_dir);

    std::vector<Detection> detections(annotations.size());
    std::vector<Tensor> heatmaps(opt.dump_heatmaps ? annotations.size() : 0);
    std::atomic<std::size_t> next{0};

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= annotations.size()) return;
            const Annotation& ann = annotations[i];
            Tensor image = image_to_tensor(read_ppm(opt.data_dir / ann.image_path));
            Tensor context = image_to_tensor(read_ppm(opt.data_dir / ann.context_path));
            if (loaded.train_cfg.augment.normalize) {
                normalize_channels_inplace(image, manifest.stats);
            }
            if (opt.zero_image) {
                image.fill(0.0);
            }
            Tensor logits = loaded.model.forward(image, context, Mode::eval, nullptr);
            const PredictedHeatmap pred = spatial_softmax(logits);
            const PixelPoint peak = peak_extract(pred)[0];

            Detection d;
            d.frame_id = ann.frame_id;
            d.pred_px = {static_cast<double>(peak.x), static_cast<double>(peak.y)};
            if (ann.bbox) {
                const auto& b = *ann.bbox;
                d.gt_px = bbox_center(b[0], b[1], b[2], b[3]);
            }
            Homography h;
            std::copy(ann.homography.begin(), ann.homography.end(), h.h.begin());
            d.homography = h;
            detections[i] = std::move(d);
            if (opt.dump_heatmaps) {
                heatmaps[i] = pred.probs;
            }
        }
    };

    const int n_threads = std::max(1, opt.threads);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    if (opt.dump_heatmaps) {
        fs::create_directories(*opt.dump_heatmaps);
        for (std::size_t i = 0; i < annotations.size(); ++i) {
            write_ptsr(*opt.dump_heatmaps / (annotations[i].frame_id + ".ptsr"), heatmaps[i]);
        }
    }
    return detections;
}

MetricsReport run_eval(const EvalOptions& opt, std::ostream& err) {
    const DatasetManifest manifest = load_manifest(opt.data_dir);
    std::vector<Annotation> annotations;
    for (const Annotation& ann : manifest.annotations) {
        if (ann.split == opt.split) annotations.push_back(ann);
    }
    if (annotations.empty()) {
        throw std::runtime_error("no frames in split '" + opt.split + "' under " + opt.data_dir.string());
    }
    const std::vector<Detection> detections =
        opt.detections ? detections_from_file(annotations, *opt.detections)
                       : detections_from_model(annotations, opt);
    const MetricsReport report = summarize(detections, RinkSpec{});
    if (report.n_rink_skipped > 0) {
        err << "warning: " << report.n_rink_skipped
            << " ground-truth frames lack a homography; excluded from rink-space metrics\n";
    }
    return report;
}

void write_report(const MetricsReport& report, const fs::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write report " + path.string());
    }
    out << report_to_json(report) << "\n";
}

std::vector<std::string> split_tokens(const std::string& csv) {
    std::vector<std::string> tokens;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) tokens.push_back(tok);
    }
    if (tokens.empty()) {
        throw std::invalid_argument("expected a comma-separated list, got '" + csv + "'");
    }
    return tokens;
}

int cmd_gen(const fs::path& out_dir, int frames, const RunConfig& cfg, std::ostream& out) {
    const DatasetManifest manifest = generate(cfg.scene, frames, out_dir);
    std::map<std::string, int> split_counts;
    for (const Annotation& ann : manifest.annotations) ++split_counts[ann.split];
    out << "generated " << manifest.annotations.size() << " frames";
    for (const auto& [split, count] : split_counts) out << " " << split << "=" << count;
    out << "\n";
    out << "OK " << (out_dir / "manifest.jsonl").string() << "\n";
    return 0;
}

int cmd_train(const fs::path& data_dir, const fs::path& out_dir, const RunConfig& cfg, std::ostream& out) {
    const TrainResult result = train(cfg.model, cfg.train, data_dir, out_dir);
    if (!result.log.empty()) {
        out << "epochs " << result.log.size() << " final_train_loss " << result.log.back().train_loss
            << " best_val_loss " << result.best_val_loss << "\n";
    }
    out << "log " << result.log_path.string() << "\n";
    out << "OK " << result.checkpoint_dir.string() << "\n";
    return 0;
}

int cmd_eval(const EvalOptions& opt, const fs::path& report_path, std::ostream& out, std::ostream& err) {
    const MetricsReport report = run_eval(opt, err);
    write_report(report, report_path);
    out << "OK " << report_path.string() << "\n";
    return 0;
}

int cmd_ablate_sigma(const fs::path& data_dir, const fs::path& out_dir, const RunConfig& base_cfg,
                     const std::string& sigmas_csv, std::ostream& out, std::ostream& err) {
    const std::vector<std::string> tokens = split_tokens(sigmas_csv);
    fs::create_directories(out_dir);
    const fs::path csv_path = out_dir / "ablate_sigma.csv";
    std::ofstream csv(csv_path);
    if (!csv) {
        throw std::runtime_error("cannot write " + csv_path.string());
    }
    csv << "sigma,tau,ap\n";
    for (const std::string& tok : tokens) {
        RunConfig cfg = base_cfg;
        apply_config_key(cfg, "train.sigma", tok);
        const fs::path run_dir = out_dir / ("sigma_" + tok);
        const TrainResult result = train(cfg.model, cfg.train, data_dir, run_dir);
        EvalOptions opt;
        opt.ckpt_dir = result.checkpoint_dir;
        opt.data_dir = data_dir;
        const MetricsReport report = run_eval(opt, err);
        write_report(report, run_dir / "report.json");
        for (int tau : kApThresholds) {
            csv << tok << "," << tau << "," << report.ap_per_tau.at(tau) << "\n";
        }
    }
    if (!csv) {
        throw std::runtime_error("write failed for " + csv_path.string());
    }
    csv.close();
    out << "OK " << csv_path.string() << "\n";
    return 0;
}

int cmd_ablate_dropout(const fs::path& data_dir, const fs::path& out_dir, const RunConfig& base_cfg,
                       const std::string& p_csv, std::ostream& out, std::ostream& err) {
    const std::vector<std::string> tokens = split_tokens(p_csv);
    fs::create_directories(out_dir);
    json records = json::array();
    for (const std::string& tok : tokens) {
        RunConfig cfg = base_cfg;
        apply_config_key(cfg, "train.p_drop", tok);
        const fs::path run_dir = out_dir / ("pdrop_" + tok);
        const TrainResult result = train(cfg.model, cfg.train, data_dir, run_dir);
        for (const bool zero_image : {false, true}) {
            EvalOptions opt;
            opt.ckpt_dir = result.checkpoint_dir;
            opt.data_dir = data_dir;
            opt.zero_image = zero_image;
            const MetricsReport report = run_eval(opt, err);
            json record;
            record["p_drop"] = std::stod(tok);
            record["eval_mode"] = zero_image ? "image_zeroed" : "normal";
            record["report"] = json::parse(report_to_json(report));
            records.push_back(std::move(record));
        }
    }
    const fs::path report_path = out_dir / "ablate_dropout.json";
    std::ofstream jf(report_path);
    if (!jf) {
        throw std::runtime_error("cannot write " + report_path.string());
    }
    jf << records.dump(2) << "\n";
    jf.close();
    out << "OK " << report_path.string() << "\n";
    return 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Context-gated heatmap puck localization toolkit"};
    app.require_subcommand(1);

    std::string config_file;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed_flag;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_file, "JSON config file with flat dotted keys");
        cmd->add_option("--set", overrides, "Config override key=value (repeatable)");
        cmd->add_option("--seed", seed_flag, "Seed override");
    };

    auto* gen = app.add_subcommand("gen", "Generate a synthetic rink-scene dataset");
    std::string gen_out;
    int gen_frames = 0;
    gen->add_option("--out", gen_out, "Output dataset directory")->required();
    gen->add_option("--frames", gen_frames, "Number of frames")->required();
    add_common(gen);

    auto* tr = app.add_subcommand("train", "Train the model on a generated dataset");
    std::string tr_data, tr_out;
    std::optional<int> tr_epochs;
    tr->add_option("--data", tr_data, "Dataset directory")->required();
    tr->add_option("--out", tr_out, "Run output directory")->required();
    tr->add_option("--epochs", tr_epochs, "Epoch count override");
    add_common(tr);

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint (or external detections)");
    std::string ev_ckpt, ev_data, ev_split = "test", ev_report = "report.json";
    std::string ev_detections, ev_dump;
    int ev_threads = 1;
    ev->add_option("--ckpt", ev_ckpt, "Checkpoint directory");
    ev->add_option("--data", ev_data, "Dataset directory")->required();
    ev->add_option("--split", ev_split, "Dataset split to evaluate");
    ev->add_option("--report", ev_report, "Report JSON output path");
    ev->add_option("--detections", ev_detections, "JSON-lines {frame_id,x,y} to evaluate instead of the model");
    ev->add_option("--threads", ev_threads, "Parallel inference workers");
    ev->add_option("--dump-heatmaps", ev_dump, "Directory for per-frame PTSR1 heatmap dumps");
    add_common(ev);

    auto* as = app.add_subcommand("ablate-sigma", "Train one model per Gaussian label sigma");
    std::string as_data, as_out, as_sigmas = "2,5,10,15";
    as->add_option("--data", as_data, "Dataset directory")->required();
    as->add_option("--out", as_out, "Output directory")->required();
    as->add_option("--sigmas", as_sigmas, "Comma-separated sigma values");
    add_common(as);

    auto* ad = app.add_subcommand("ablate-dropout", "Paired training runs across context-dropout rates");
    std::string ad_data, ad_out, ad_p = "0.0,0.01";
    ad->add_option("--data", ad_data, "Dataset directory")->required();
    ad->add_option("--out", ad_out, "Output directory")->required();
    ad->add_option("--p", ad_p, "Comma-separated p_drop values");
    add_common(ad);

    std::vector<const char*> argv;
    argv.push_back("rinkkp");
    for (const std::string& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());

        std::optional<std::filesystem::path> cfg_path;
        if (!config_file.empty()) cfg_path = config_file;
        RunConfig cfg = load_run_config(cfg_path, overrides);

        if (gen->parsed()) {
            cfg.scene.seed = resolve_seed(seed_flag, cfg, "scene.seed", cfg.scene.seed);
            return cmd_gen(gen_out, gen_frames, cfg, out);
        }
        if (tr->parsed()) {
            cfg.train.seed = resolve_seed(seed_flag, cfg, "train.seed", cfg.train.seed);
            if (tr_epochs) cfg.train.epochs = *tr_epochs;
            return cmd_train(tr_data, tr_out, cfg, out);
        }
        if (ev->parsed()) {
            EvalOptions opt;
            opt.ckpt_dir = ev_ckpt;
            opt.data_dir = ev_data;
            opt.split = ev_split;
            opt.threads = ev_threads;
            if (!ev_detections.empty()) opt.detections = ev_detections;
            if (!ev_dump.empty()) opt.dump_heatmaps = ev_dump;
            if (ev_ckpt.empty() && ev_detections.empty()) {
                throw std::invalid_argument("eval needs --ckpt or --detections");
            }
            return cmd_eval(opt, ev_report, out, err);
        }
        if (as->parsed()) {
            cfg.train.seed = resolve_seed(seed_flag, cfg, "train.seed", cfg.train.seed);
            return cmd_ablate_sigma(as_data, as_out, cfg, as_sigmas, out, err);
        }
        if (ad->parsed()) {
            cfg.train.seed = resolve_seed(seed_flag, cfg, "train.seed", cfg.train.seed);
            return cmd_ablate_dropout(ad_data, ad_out, cfg, ad_p, out, err);
        }
        err << "error: no command\n";
        return 1;
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace rinkkp
