#include "rinkkp/image.hpp"

#include <fstream>
#include <stdexcept>

namespace rinkkp {

void Image::fill(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    for (std::size_t i = 0; i < rgb.size(); i += 3) {
        rgb[i] = r;
        rgb[i + 1] = g;
        rgb[i + 2] = b;
    }
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("write_ppm: cannot open " + path.string());
    }
    out << "P6\n" << img.w << " " << img.h << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (!out) {
        throw std::runtime_error("write_ppm: write failed for " + path.string());
    }
}

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("read_ppm: cannot open " + path.string());
    }
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P6" || w < 1 || h < 1 || maxval != 255) {
        throw std::runtime_error("read_ppm: unsupported header in " + path.string());
    }
    in.get();  // single whitespace after maxval
    Image img(h, w);
    in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (!in) {
        throw std::runtime_error("read_ppm: truncated pixel data in " + path.string());
    }
    return img;
}

Tensor image_to_tensor(const Image& img) {
    Tensor t({1, 3, img.h, img.w});
    const double scale = 1.0 / 255.0;
    for (int c = 0; c < 3; ++c) {
        double* dst = t.data.data() + t.offset4(0, c, 0, 0);
        for (int y = 0; y < img.h; ++y) {
            const std::uint8_t* row = img.px(y, 0);
            for (int x = 0; x < img.w; ++x) {
                dst[static_cast<std::int64_t>(y) * img.w + x] = row[x * 3 + c] * scale;
            }
        }
    }
    return t;
}

Tensor stack_batch(const std::vector<const Tensor*>& samples) {
    if (samples.empty()) {
        throw std::runtime_error("stack_batch: no samples");
    }
    const Tensor& first = *samples.front();
    const int c = first.channels(), h = first.height(), w = first.width();
    Tensor out({static_cast<int>(samples.size()), c, h, w});
    const std::int64_t sample_size = static_cast<std::int64_t>(c) * h * w;
    for (std::size_t n = 0; n < samples.size(); ++n) {
        const Tensor& s = *samples[n];
        if (s.ndim() != 4 || s.batch() != 1 || s.channels() != c || s.height() != h || s.width() != w) {
            throw std::runtime_error("stack_batch: sample " + std::to_string(n) + " has dims " +
                                     dims_str(s.dims) + ", expected [1," + std::to_string(c) + "," +
                                     std::to_string(h) + "," + std::to_string(w) + "]");
        }
        std::copy(s.data.begin(), s.data.end(), out.data.begin() + n * sample_size);
    }
    return out;
}

}  // namespace rinkkp
