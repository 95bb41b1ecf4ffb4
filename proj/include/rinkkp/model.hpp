#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rinkkp/gating.hpp"

namespace rinkkp {

struct ModelConfig {
    int input_h = 64;
    int input_w = 64;
    int base_channels = 8;
    int pyramid_depth = 3;  // number of stride-2 stages
    double sigma = 5.0;     // Gaussian label variance, pixels
    double p_drop = 0.01;   // context-driven dropout probability

    void validate() const;
};

struct NamedParam {
    std::string name;
    ParamTensor* param;
};

struct NamedBuffer {
    std::string name;
    Tensor* tensor;
};

struct ModelCache {
    Tensor image;    // the image actually fed to the pyramid (post-dropout)
    Tensor context;
    std::vector<ConvBlockCache> pyramid;
    std::vector<ConvBlockCache> context_enc;
    std::vector<FusionCache> decoder;  // deepest stage first, shallow stage last
    HeadCache head;
};

// Dual-encoder gated pyramid network. The pyramid encoder runs over the
// full-resolution frame and the context encoder over the half-resolution
// context image; the decoder fuses them deepest-first, gating every stage
// that has a matching context feature, and the head emits full-resolution
// heatmap logits.
//
// With pyramid_depth D and base channels B0, pyramid stage i in 1..D emits
// f_i with B0*2^(i-1) channels at H/2^i, and context stage j in 1..D-1
// emits c_j with B0*2^(j-1) channels at the same H/2^(j+1) spatial extents
// as f_{j+1}. Only level 1 decodes without a context feature.
class PluccModel {
public:
    PluccModel(const ModelConfig& cfg, Rng& rng);

    Tensor forward(const Tensor& image, const Tensor& context, Mode mode, ModelCache* cache = nullptr);

    // Train-mode forward that, per sample, replaces the image with zeros
    // with probability p_drop. The context always passes.
    Tensor forward_with_context_dropout(const Tensor& image, const Tensor& context, Rng& rng,
                                        double p_drop, Mode mode, ModelCache* cache = nullptr);

    void backward(const Tensor& grad_logits, const ModelCache& cache);
    void zero_grad();

    std::vector<NamedParam> parameters();
    std::vector<NamedBuffer> buffers();

    const ModelConfig& config() const { return cfg_; }

    std::vector<ConvBlock>& pyramid_stages() { return pyramid_; }
    std::vector<ConvBlock>& context_stages() { return context_; }
    std::vector<GatedFusionStage>& gated_stages() { return gated_; }
    PlainFusionStage& shallow_stage() { return *shallow_; }
    PredictionHead& head() { return *head_; }

private:
    ModelConfig cfg_;
    std::vector<ConvBlock> pyramid_;         // D stride-2 blocks
    std::vector<ConvBlock> context_;         // D-1 stride-2 blocks
    std::vector<GatedFusionStage> gated_;    // D-1 decoder stages, deepest first
    std::optional<PlainFusionStage> shallow_;
    std::optional<PredictionHead> head_;
};

std::int64_t count_parameters(PluccModel& model);
std::int64_t count_parameters(const std::vector<NamedParam>& params);

// Deep copies of all parameters ("param/<name>") and running statistics
// ("buffer/<name>"). import_state requires an exact name and dims match.
std::map<std::string, Tensor> export_state(PluccModel& model);
void import_state(PluccModel& model, const std::map<std::string, Tensor>& state);

}  // namespace rinkkp
