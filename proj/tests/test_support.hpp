#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "rinkkp/rng.hpp"
#include "rinkkp/tensor.hpp"

namespace testsup {

using rinkkp::Rng;
using rinkkp::Tensor;

inline Tensor random_tensor(std::vector<int> dims, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(dims));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Values bounded away from zero; keeps finite differences clear of the ReLU kink.
inline Tensor random_tensor_off_kink(std::vector<int> dims, Rng& rng, double margin = 0.05) {
    Tensor t(std::move(dims));
    for (double& v : t.data) {
        const double m = rng.uniform(margin, 1.0);
        v = rng.bernoulli(0.5) ? m : -m;
    }
    return t;
}

// Central finite differences of a scalar function w.r.t. every entry of t.
// The function must recompute the loss from scratch using t's current values.
template <typename F>
Tensor numeric_grad(Tensor& t, F scalar_fn, double h = 1e-5) {
    Tensor g(t.dims);
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const double orig = t.data[i];
        t.data[i] = orig + h;
        const double fp = scalar_fn();
        t.data[i] = orig - h;
        const double fm = scalar_fn();
        t.data[i] = orig;
        g.data[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// ||a - b|| / (||a|| + ||b||); zero when both vanish.
inline double grad_rel_err(const Tensor& a, const Tensor& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        diff += d * d;
        na += a.data[i] * a.data[i];
        nb += b.data[i] * b.data[i];
    }
    const double denom = std::sqrt(na) + std::sqrt(nb);
    if (denom < 1e-12) return std::sqrt(diff);
    return std::sqrt(diff) / denom;
}

inline double weighted_sum(const Tensor& t, const Tensor& weights) {
    double s = 0.0;
    for (std::int64_t i = 0; i < t.size(); ++i) s += t.data[i] * weights.data[i];
    return s;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
    if (a.dims != b.dims) return false;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        if (a.data[i] != b.data[i]) return false;
    }
    return true;
}

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                      std::istreambuf_iterator<char>());
}

// name -> FNV-1a hash of every regular file under dir, by relative path.
inline std::map<std::string, std::uint64_t> dir_digest(const std::filesystem::path& dir) {
    std::map<std::string, std::uint64_t> digest;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::uint64_t h = 1469598103934665603ULL;
        for (unsigned char b : read_bytes(entry.path())) {
            h = (h ^ b) * 1099511628211ULL;
        }
        digest[std::filesystem::relative(entry.path(), dir).string()] = h;
    }
    return digest;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
    const std::filesystem::path p = std::filesystem::path("test_tmp") / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testsup
