#include "rinkkp/model.hpp"

#include <sstream>
#include <stdexcept>

namespace rinkkp {

namespace {

void add_into(Tensor& dst, const Tensor& src) {
    for (std::int64_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

int level_channels(int base, int level) { return base << (level - 1); }

}  // namespace

void ModelConfig::validate() const {
    if (pyramid_depth < 2) {
        throw std::runtime_error("ModelConfig: pyramid_depth must be >= 2 so at least one stage is gated");
    }
    if (base_channels < 1) {
        throw std::runtime_error("ModelConfig: base_channels must be >= 1");
    }
    const int div = 1 << pyramid_depth;
    if (input_h % div != 0 || input_w % div != 0) {
        std::ostringstream msg;
        msg << "ModelConfig: input " << input_h << "x" << input_w << " not divisible by 2^"
            << pyramid_depth;
        throw std::runtime_error(msg.str());
    }
    if (!(p_drop >= 0.0 && p_drop <= 1.0)) {
        throw std::runtime_error("ModelConfig: p_drop must lie in [0,1]");
    }
    if (!(sigma > 0.0)) {
        throw std::runtime_error("ModelConfig: sigma must be > 0");
    }
}

PluccModel::PluccModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const int depth = cfg_.pyramid_depth;
    const int base = cfg_.base_channels;

    int in_ch = 3;
    for (int i = 1; i <= depth; ++i) {
        pyramid_.emplace_back(in_ch, level_channels(base, i), 2, rng);
        in_ch = level_channels(base, i);
    }
    in_ch = 3;
    for (int j = 1; j <= depth - 1; ++j) {
        context_.emplace_back(in_ch, level_channels(base, j), 2, rng);
        in_ch = level_channels(base, j);
    }

    // Bottleneck stage fuses (f_D, c_{D-1}); the next stages fuse
    // (Up(prev), f_i, c_{i-1}) down to level 2.
    gated_.emplace_back(0, level_channels(base, depth), level_channels(base, depth - 1),
                        level_channels(base, depth), rng);
    for (int level = depth - 1; level >= 2; --level) {
        gated_.emplace_back(level_channels(base, level + 1), level_channels(base, level),
                            level_channels(base, level - 1), level_channels(base, level), rng);
    }
    shallow_.emplace(level_channels(base, 2), base, base, rng);
    head_.emplace(base, rng);
}

Tensor PluccModel::forward(const Tensor& image, const Tensor& context, Mode mode, ModelCache* cache) {
    if (image.ndim() != 4 || image.channels() != 3 ||
        image.height() != cfg_.input_h || image.width() != cfg_.input_w) {
        throw std::runtime_error("forward: image must be [B,3," + std::to_string(cfg_.input_h) + "," +
                                 std::to_string(cfg_.input_w) + "], got " + dims_str(image.dims));
    }
    if (context.ndim() != 4 || context.channels() != 3 || context.batch() != image.batch() ||
        context.height() != cfg_.input_h / 2 || context.width() != cfg_.input_w / 2) {
        throw std::runtime_error("forward: context must be [B,3," + std::to_string(cfg_.input_h / 2) +
                                 "," + std::to_string(cfg_.input_w / 2) + "], got " + dims_str(context.dims));
    }
    const int depth = cfg_.pyramid_depth;
    if (cache) {
        cache->image = image;
        cache->context = context;
        cache->pyramid.resize(pyramid_.size());
        cache->context_enc.resize(context_.size());
        cache->decoder.resize(static_cast<std::size_t>(depth));
    }

    std::vector<Tensor> f(pyramid_.size());
    Tensor x = image;
    for (std::size_t k = 0; k < pyramid_.size(); ++k) {
        f[k] = pyramid_[k].forward(x, mode, cache ? &cache->pyramid[k] : nullptr);
        x = f[k];
    }
    std::vector<Tensor> c(context_.size());
    Tensor y = context;
    for (std::size_t k = 0; k < context_.size(); ++k) {
        c[k] = context_[k].forward(y, mode, cache ? &cache->context_enc[k] : nullptr);
        y = c[k];
    }

    Tensor d = gated_[0].forward(nullptr, f[static_cast<std::size_t>(depth) - 1],
                                 c[static_cast<std::size_t>(depth) - 2], mode,
                                 cache ? &cache->decoder[0] : nullptr);
    for (std::size_t k = 1; k < gated_.size(); ++k) {
        const std::size_t level = static_cast<std::size_t>(depth) - k;  // feature level this stage decodes
        d = gated_[k].forward(&d, f[level - 1], c[level - 2], mode,
                              cache ? &cache->decoder[k] : nullptr);
    }
    d = shallow_->forward(d, f[0], mode, cache ? &cache->decoder[static_cast<std::size_t>(depth) - 1] : nullptr);
    return head_->forward(d, cfg_.input_h, cfg_.input_w, cache ? &cache->head : nullptr);
}

Tensor PluccModel::forward_with_context_dropout(const Tensor& image, const Tensor& context, Rng& rng,
                                                double p_drop, Mode mode, ModelCache* cache) {
    if (mode != Mode::train) {
        throw std::runtime_error("forward_with_context_dropout: train mode only");
    }
    if (!(p_drop >= 0.0 && p_drop <= 1.0)) {
        throw std::runtime_error("forward_with_context_dropout: p_drop must lie in [0,1]");
    }
    Tensor dropped = image;
    const std::int64_t sample_size = static_cast<std::int64_t>(image.channels()) * image.height() * image.width();
    for (int n = 0; n < image.batch(); ++n) {
        if (rng.bernoulli(p_drop)) {
            double* p = dropped.data.data() + dropped.offset4(n, 0, 0, 0);
            for (std::int64_t i = 0; i < sample_size; ++i) p[i] = 0.0;
        }
    }
    return forward(dropped, context, mode, cache);
}

void PluccModel::backward(const Tensor& grad_logits, const ModelCache& cache) {
    const int depth = cfg_.pyramid_depth;
    std::vector<Tensor> grad_f(pyramid_.size());
    std::vector<Tensor> grad_c(context_.size());

    Tensor g = head_->backward(grad_logits, cache.head);

    PlainFusionStage::Grads sg = shallow_->backward(g, cache.decoder[static_cast<std::size_t>(depth) - 1]);
    grad_f[0] = std::move(sg.f);
    g = std::move(sg.prev);

    for (std::size_t k = gated_.size() - 1; k >= 1; --k) {
        const std::size_t level = static_cast<std::size_t>(depth) - k;
        GatedFusionStage::Grads gg = gated_[k].backward(g, cache.decoder[k]);
        grad_f[level - 1] = std::move(gg.f);
        grad_c[level - 2] = std::move(gg.c);
        g = std::move(gg.prev);
    }
    GatedFusionStage::Grads bottleneck = gated_[0].backward(g, cache.decoder[0]);
    grad_f[static_cast<std::size_t>(depth) - 1] = std::move(bottleneck.f);
    grad_c[static_cast<std::size_t>(depth) - 2] = std::move(bottleneck.c);

    // Pyramid chain: a stage's input gradient joins the decoder gradient of
    // the feature one level up.
    Tensor gin = std::move(grad_f[pyramid_.size() - 1]);
    for (std::size_t k = pyramid_.size(); k-- > 0;) {
        gin = pyramid_[k].backward(gin, cache.pyramid[k]);
        if (k > 0) add_into(gin, grad_f[k - 1]);
    }
    Tensor gctx = std::move(grad_c[context_.size() - 1]);
    for (std::size_t k = context_.size(); k-- > 0;) {
        gctx = context_[k].backward(gctx, cache.context_enc[k]);
        if (k > 0) add_into(gctx, grad_c[k - 1]);
    }
}

void PluccModel::zero_grad() {
    for (const NamedParam& p : parameters()) {
        p.param->zero_grad();
    }
}

std::vector<NamedParam> PluccModel::parameters() {
    std::vector<NamedParam> out;
    auto add_block = [&out](const std::string& prefix, ConvBlock& block) {
        out.push_back({prefix + ".conv.kernel", &block.conv.kernel});
        out.push_back({prefix + ".conv.bias", &block.conv.bias});
        out.push_back({prefix + ".bn.gamma", &block.bn.gamma});
        out.push_back({prefix + ".bn.beta", &block.bn.beta});
    };
    for (std::size_t k = 0; k < pyramid_.size(); ++k) {
        add_block("pyramid." + std::to_string(k), pyramid_[k]);
    }
    for (std::size_t k = 0; k < context_.size(); ++k) {
        add_block("context." + std::to_string(k), context_[k]);
    }
    const int depth = cfg_.pyramid_depth;
    for (std::size_t k = 0; k < gated_.size(); ++k) {
        const int level = depth - static_cast<int>(k);
        const std::string prefix = "decoder.l" + std::to_string(level);
        out.push_back({prefix + ".gate.gamma", &gated_[k].gate.gamma});
        add_block(prefix, gated_[k].conv);
    }
    add_block("decoder.l1", shallow_->conv);
    out.push_back({"head.kernel", &head_->conv1x1.kernel});
    out.push_back({"head.bias", &head_->conv1x1.bias});
    return out;
}

std::vector<NamedBuffer> PluccModel::buffers() {
    std::vector<NamedBuffer> out;
    auto add_block = [&out](const std::string& prefix, ConvBlock& block) {
        out.push_back({prefix + ".bn.running_mean", &block.bn.running_mean});
        out.push_back({prefix + ".bn.running_var", &block.bn.running_var});
    };
    for (std::size_t k = 0; k < pyramid_.size(); ++k) {
        add_block("pyramid." + std::to_string(k), pyramid_[k]);
    }
    for (std::size_t k = 0; k < context_.size(); ++k) {
        add_block("context." + std::to_string(k), context_[k]);
    }
    const int depth = cfg_.pyramid_depth;
    for (std::size_t k = 0; k < gated_.size(); ++k) {
        add_block("decoder.l" + std::to_string(depth - static_cast<int>(k)), gated_[k].conv);
    }
    add_block("decoder.l1", shallow_->conv);
    return out;
}

std::int64_t count_parameters(const std::vector<NamedParam>& params) {
    std::int64_t total = 0;
    for (const NamedParam& p : params) {
        total += p.param->value.size();
    }
    return total;
}

std::int64_t count_parameters(PluccModel& model) {
    return count_parameters(model.parameters());
}

std::map<std::string, Tensor> export_state(PluccModel& model) {
    std::map<std::string, Tensor> state;
    for (const NamedParam& p : model.parameters()) {
        state.emplace("param/" + p.name, p.param->value);
    }
    for (const NamedBuffer& b : model.buffers()) {
        state.emplace("buffer/" + b.name, *b.tensor);
    }
    return state;
}

void import_state(PluccModel& model, const std::map<std::string, Tensor>& state) {
    auto fetch = [&state](const std::string& name, const Tensor& like) -> const Tensor& {
        auto it = state.find(name);
        if (it == state.end()) {
            throw std::runtime_error("import_state: missing tensor " + name);
        }
        if (it->second.dims != like.dims) {
            throw std::runtime_error("import_state: dims mismatch for " + name + ": checkpoint " +
                                     dims_str(it->second.dims) + " vs model " + dims_str(like.dims));
        }
        return it->second;
    };
    for (const NamedParam& p : model.parameters()) {
        p.param->value = fetch("param/" + p.name, p.param->value);
        p.param->zero_grad();
    }
    for (const NamedBuffer& b : model.buffers()) {
        *b.tensor = fetch("buffer/" + b.name, *b.tensor);
    }
}

}  // namespace rinkkp
