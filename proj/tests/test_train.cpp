#include <doctest.h>

#include <cmath>
#include <fstream>

#include "rinkkp/config.hpp"
#include "rinkkp/serialize.hpp"
#include "rinkkp/train.hpp"
#include "test_support.hpp"

using namespace rinkkp;

namespace {

// Small-but-real dataset + config used by the trainer tests.
SceneSpec tiny_scene() {
    SceneSpec s;
    s.frame_h = 32;
    s.frame_w = 32;
    s.n_matches = 3;
    s.seed = 99;
    return s;
}

ModelConfig tiny_model() {
    ModelConfig m;
    m.input_h = 32;
    m.input_w = 32;
    m.base_channels = 4;
    m.pyramid_depth = 2;
    m.sigma = 3.0;
    return m;
}

TrainConfig tiny_train(int epochs) {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = 4;
    t.lr = 0.02;
    t.sigma = 3.0;
    t.seed = 7;
    return t;
}

std::filesystem::path make_tiny_dataset(const std::string& name, int frames = 48) {
    const auto dir = testsup::fresh_dir(name);
    generate(tiny_scene(), frames, dir);
    return dir;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("sgd step arithmetic") {
    ParamTensor w(Tensor({1}, {1.0}));
    SgdMomentum opt;
    opt.lr = 0.1;
    opt.bind({{"w", &w}});

    // Zero gradient from a fresh optimizer: nothing moves.
    opt.step();
    CHECK(w.value.data[0] == 1.0);
    CHECK(opt.velocity[0].data[0] == 0.0);

    // One unit-gradient step: w' = 1 - 0.1 * 1 = 0.9.
    w.grad.data[0] = 1.0;
    opt.step();
    CHECK(w.value.data[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(opt.velocity[0].data[0] == 1.0);

    // Zero gradient afterwards: velocity decays by the momentum factor.
    w.grad.data[0] = 0.0;
    opt.step();
    CHECK(opt.velocity[0].data[0] == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("sgd converges on the quadratic bowl") {
    // lr tuned against the pre-build oracle: |w| = 1.16e-4 after 100 steps.
    ParamTensor w(Tensor({1}, {5.0}));
    SgdMomentum opt;
    opt.lr = 0.085;
    opt.bind({{"w", &w}});
    for (int i = 0; i < 100; ++i) {
        w.zero_grad();
        w.grad.data[0] = 2.0 * w.value.data[0];
        opt.step();
    }
    CHECK(std::abs(w.value.data[0]) < 1e-3);

    // Long horizon at a generic rate.
    w.value.data[0] = 5.0;
    SgdMomentum opt2;
    opt2.lr = 0.02;
    opt2.bind({{"w", &w}});
    for (int i = 0; i < 1000; ++i) {
        w.zero_grad();
        w.grad.data[0] = 2.0 * w.value.data[0];
        opt2.step();
    }
    CHECK(std::abs(w.value.data[0]) < 1e-9);
}

TEST_CASE("plateau schedule fires exactly once on a 5-epoch stagnation") {
    PlateauScheduler sched;  // factor 0.1, patience 5, min_delta 1e-6
    const double seq[] = {1.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9};
    int reductions = 0;
    for (double v : seq) {
        if (sched.observe(v)) ++reductions;
    }
    CHECK(reductions == 1);
}

TEST_CASE("plateau schedule resets on improvement and after firing") {
    PlateauScheduler sched;
    sched.patience = 2;
    CHECK(!sched.observe(1.0));
    CHECK(!sched.observe(0.99));   // improvement
    CHECK(!sched.observe(0.99));   // stale 1
    CHECK(sched.observe(0.99));    // stale 2 -> fire
    CHECK(!sched.observe(0.99));   // counter restarted
    CHECK(sched.observe(0.99));
    // Sub-threshold improvement does not reset the clock.
    PlateauScheduler tight;
    tight.patience = 1;
    CHECK(!tight.observe(1.0));
    CHECK(tight.observe(1.0 - 1e-9));
}

TEST_CASE("flip augmentation is an exact involution that mirrors the center") {
    testsup::Rng data_rng(81);
    const Tensor image0 = testsup::random_tensor({1, 3, 8, 64}, data_rng, 0.0, 1.0);
    const Tensor context0 = testsup::random_tensor({1, 3, 4, 32}, data_rng, 0.0, 1.0);

    // Independent mirror oracle: reverse every row.
    auto mirrored = [](const Tensor& t) {
        Tensor out = t;
        for (int c = 0; c < t.channels(); ++c) {
            for (int y = 0; y < t.height(); ++y) {
                double* row = out.data.data() + out.offset4(0, c, y, 0);
                std::reverse(row, row + t.width());
            }
        }
        return out;
    };
    const Tensor image_flip = mirrored(image0);
    const Tensor context_flip = mirrored(context0);

    AugmentFlags flip_only;
    flip_only.blur = flip_only.noise = flip_only.normalize = false;
    DatasetStats stats;

    Tensor image = image0;
    Tensor context = context0;
    Point center{10.0, 3.0};
    Rng rng(3);
    int parity = 0;
    int observed_flips = 0;
    for (int i = 0; i < 32; ++i) {
        const double before_x = center.x;
        augment(image, context, center, rng, flip_only, stats);
        if (center.x != before_x) {
            parity ^= 1;
            ++observed_flips;
            CHECK(center.x == (parity ? 53.0 : 10.0));  // x' = W-1-x for W=64
        }
        CHECK(testsup::bit_equal(image, parity ? image_flip : image0));
        CHECK(testsup::bit_equal(context, parity ? context_flip : context0));
    }
    CHECK(observed_flips > 5);  // the bernoulli(0.5) gate actually exercised both states
}

TEST_CASE("flip commutes with Gaussian label construction bit-exactly") {
    const int h = 32, w = 32;
    for (const double cx : {10.0, 10.5, 21.5, 0.0}) {
        const double cy = 7.5;
        const HeatmapLabel direct = gaussian_label((w - 1) - cx, cy, 3.0, h, w);
        const HeatmapLabel flipped = gaussian_label(cx, cy, 3.0, h, w);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                CHECK(direct.grid.at4(0, 0, y, x) == flipped.grid.at4(0, 0, y, (w - 1) - x));
            }
        }
    }
}

TEST_CASE("blur preserves mass for an interior delta") {
    // 33x33 keeps the spreading support away from the borders across repeats.
    Tensor image({1, 3, 33, 33});
    image.at4(0, 1, 16, 16) = 1.0;
    Point center{16.0, 16.0};
    Tensor context({1, 3, 16, 16});
    AugmentFlags blur_only;
    blur_only.flip = blur_only.noise = blur_only.normalize = false;
    DatasetStats stats;
    Rng rng(5);
    for (int i = 0; i < 8; ++i) {
        augment(image, context, center, rng, blur_only, stats);
    }
    CHECK(image.at4(0, 1, 16, 16) < 1.0);  // the bernoulli gate fired at least once
    double mass = 0.0;
    for (int y = 0; y < 33; ++y) {
        for (int x = 0; x < 33; ++x) mass += image.at4(0, 1, y, x);
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("normalize standardizes the image with dataset statistics") {
    Tensor image = Tensor::full({1, 3, 4, 4}, 0.5);
    Tensor context({1, 3, 2, 2});
    Point center{1.0, 1.0};
    AugmentFlags norm_only;
    norm_only.flip = norm_only.blur = norm_only.noise = false;
    DatasetStats stats;
    stats.mean = {0.25, 0.5, 0.75};
    stats.stddev = {0.5, 0.5, 0.25};
    Rng rng(1);
    augment(image, context, center, rng, norm_only, stats);
    CHECK(image.at4(0, 0, 0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(image.at4(0, 1, 0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(image.at4(0, 2, 0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("zero-epoch training writes the initialization checkpoint") {
    const auto data = make_tiny_dataset("train_e0");
    const auto out = testsup::fresh_dir("train_e0_out");
    const TrainResult result = train(tiny_model(), tiny_train(0), data, out);
    CHECK(result.log.empty());

    LoadedModel loaded = load_model_checkpoint(result.checkpoint_dir);
    Rng init_rng = Rng(tiny_train(0).seed).fork(1);
    PluccModel fresh(tiny_model(), init_rng);
    const auto fresh_state = export_state(fresh);
    const auto loaded_state = export_state(loaded.model);
    REQUIRE(fresh_state.size() == loaded_state.size());
    for (const auto& [name, tensor] : fresh_state) {
        CHECK(testsup::bit_equal(tensor, loaded_state.at(name)));
    }
}

TEST_CASE("short training run lowers the loss and logs every epoch") {
    const auto data = make_tiny_dataset("train_smoke", 60);
    const auto out = testsup::fresh_dir("train_smoke_out");
    const TrainResult result = train(tiny_model(), tiny_train(4), data, out);
    REQUIRE(result.log.size() == 4);
    CHECK(result.log.back().train_loss < result.log.front().train_loss);
    for (const EpochLog& e : result.log) {
        CHECK(std::isfinite(e.train_loss));
        CHECK(std::isfinite(e.val_loss));
        CHECK(e.lr > 0.0);
    }
    std::ifstream log_in(result.log_path);
    int lines = 0;
    std::string line;
    while (std::getline(log_in, line)) {
        if (!line.empty()) {
            const auto j = nlohmann::json::parse(line);
            CHECK(j.contains("epoch"));
            CHECK(j.contains("train_loss"));
            CHECK(j.contains("val_loss"));
            CHECK(j.contains("lr"));
            ++lines;
        }
    }
    CHECK(lines == 4);
}

TEST_CASE("training is bit-deterministic given the seed") {
    const auto data = make_tiny_dataset("train_det", 48);
    const auto out_a = testsup::fresh_dir("train_det_a");
    const auto out_b = testsup::fresh_dir("train_det_b");
    const TrainResult a = train(tiny_model(), tiny_train(2), data, out_a);
    const TrainResult b = train(tiny_model(), tiny_train(2), data, out_b);
    CHECK(a.log.back().val_loss == b.log.back().val_loss);
    CHECK(testsup::dir_digest(out_a) == testsup::dir_digest(out_b));
}

TEST_CASE("a diverging run aborts with the offending batch in the diagnostic") {
    const auto data = make_tiny_dataset("train_diverge", 24);
    const auto out = testsup::fresh_dir("train_diverge_out");
    TrainConfig cfg = tiny_train(2);
    cfg.lr = 1e300;  // blows the parameters up after the first step
    try {
        train(tiny_model(), cfg, data, out);
        FAIL("training with lr=1e300 should abort");
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        CHECK(msg.find("aborting at epoch") != std::string::npos);
        CHECK(msg.find("frames") != std::string::npos);
    }
}

TEST_CASE("training rejects datasets with an empty split") {
    SceneSpec lone = tiny_scene();
    lone.n_matches = 1;  // everything lands in train; no val split
    const auto dir = testsup::fresh_dir("train_noval");
    generate(lone, 10, dir);
    const auto out = testsup::fresh_dir("train_noval_out");
    CHECK_THROWS(train(tiny_model(), tiny_train(1), dir, out));
}

TEST_CASE("single small-lr step does not increase the batch loss (descent property)") {
    const ModelConfig mcfg = tiny_model();
    Rng init_rng = Rng(1).fork(1);
    PluccModel model(mcfg, init_rng);
    testsup::Rng data_rng(91);
    int ok = 0;
    const int trials = 40;
    for (int t = 0; t < trials; ++t) {
        const Tensor image = testsup::random_tensor({4, 3, 32, 32}, data_rng, 0.0, 1.0);
        const Tensor context = testsup::random_tensor({4, 3, 16, 16}, data_rng, 0.0, 1.0);
        std::vector<Tensor> grids;
        std::vector<const Tensor*> grid_ptrs;
        for (int n = 0; n < 4; ++n) {
            grids.push_back(normalize_label(gaussian_label(data_rng.uniform(2.0, 29.0),
                                                           data_rng.uniform(2.0, 29.0), 3.0, 32, 32))
                                .grid);
        }
        for (const Tensor& g : grids) grid_ptrs.push_back(&g);
        const Tensor labels = stack_batch(grid_ptrs);

        const auto snapshot = export_state(model);
        // Batch-norm in eval mode and no dropout, per the stated property.
        ModelCache cache;
        const Tensor logits = model.forward(image, context, Mode::eval, &cache);
        const double before = kl_loss(labels, spatial_softmax(logits)).loss;
        model.zero_grad();
        model.backward(kl_loss(labels, spatial_softmax(logits)).grad_logits, cache);
        SgdMomentum opt;
        opt.lr = 1e-4;
        opt.bind(model.parameters());
        opt.step();
        const double after =
            kl_loss(labels, spatial_softmax(model.forward(image, context, Mode::eval, nullptr))).loss;
        if (after <= before + 1e-12) ++ok;
        import_state(model, snapshot);
    }
    CHECK(ok >= trials * 95 / 100);
}

TEST_CASE("checkpoint save/load/forward is bit-identical") {
    const auto data = make_tiny_dataset("train_ckpt", 48);
    const auto out = testsup::fresh_dir("train_ckpt_out");
    const TrainResult result = train(tiny_model(), tiny_train(2), data, out);

    LoadedModel loaded = load_model_checkpoint(result.checkpoint_dir);
    const auto resaved = testsup::fresh_dir("train_ckpt_resave");
    Checkpoint ckpt = load_checkpoint(result.checkpoint_dir);
    save_checkpoint(resaved, ckpt);
    CHECK(testsup::dir_digest(result.checkpoint_dir) == testsup::dir_digest(resaved));

    testsup::Rng data_rng(92);
    const Tensor image = testsup::random_tensor({2, 3, 32, 32}, data_rng, 0.0, 1.0);
    const Tensor context = testsup::random_tensor({2, 3, 16, 16}, data_rng, 0.0, 1.0);
    LoadedModel again = load_model_checkpoint(result.checkpoint_dir);
    const Tensor la = loaded.model.forward(image, context, Mode::eval, nullptr);
    const Tensor lb = again.model.forward(image, context, Mode::eval, nullptr);
    CHECK(testsup::bit_equal(la, lb));
}

TEST_CASE("model and train configs survive the JSON round trip") {
    ModelConfig m = tiny_model();
    const ModelConfig m2 = model_config_from_json(model_config_to_json(m));
    CHECK(m2.input_h == m.input_h);
    CHECK(m2.base_channels == m.base_channels);
    CHECK(m2.sigma == m.sigma);

    TrainConfig t = tiny_train(3);
    t.augment.noise = false;
    t.seed = 0xDEADBEEFCAFEULL;
    const TrainConfig t2 = train_config_from_json(train_config_to_json(t));
    CHECK(t2.epochs == 3);
    CHECK(t2.seed == t.seed);
    CHECK(t2.augment.noise == false);
    CHECK(t2.augment.flip == true);
}

}  // TEST_SUITE
