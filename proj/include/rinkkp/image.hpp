#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rinkkp/tensor.hpp"

namespace rinkkp {

// 8-bit RGB raster, row-major.
struct Image {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(int h_, int w_) : h(h_), w(w_), rgb(static_cast<std::size_t>(h_) * w_ * 3, 0) {}

    std::uint8_t* px(int y, int x) { return rgb.data() + (static_cast<std::size_t>(y) * w + x) * 3; }
    const std::uint8_t* px(int y, int x) const {
        return rgb.data() + (static_cast<std::size_t>(y) * w + x) * 3;
    }

    void fill(std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);

// [1,3,H,W] tensor with values scaled to [0,1].
Tensor image_to_tensor(const Image& img);

// Stacks [1,C,H,W] tensors into [B,C,H,W] in argument order.
Tensor stack_batch(const std::vector<const Tensor*>& samples);

}  // namespace rinkkp
