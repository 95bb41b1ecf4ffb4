#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rinkkp {

// Dense row-major tensor of 64-bit floats. 4-D tensors are laid out as
// [batch, channel, height, width]. All extents are >= 1 and the data vector
// always holds exactly product(dims) values.
struct Tensor {
    std::vector<int> dims;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> d);
    Tensor(std::vector<int> d, std::vector<double> values);

    static Tensor full(std::vector<int> d, double value);

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(dims.size()); }

    // 4-D conveniences; only valid when ndim() == 4.
    int batch() const { return dims[0]; }
    int channels() const { return dims[1]; }
    int height() const { return dims[2]; }
    int width() const { return dims[3]; }

    std::int64_t offset4(int n, int c, int y, int x) const {
        return ((static_cast<std::int64_t>(n) * dims[1] + c) * dims[2] + y) * dims[3] + x;
    }
    double& at4(int n, int c, int y, int x) { return data[offset4(n, c, y, x)]; }
    double at4(int n, int c, int y, int x) const { return data[offset4(n, c, y, x)]; }

    void fill(double value);
    bool same_dims(const Tensor& other) const { return dims == other.dims; }
};

// Learnable value plus its gradient accumulator. Backward passes add into
// grad; callers zero it explicitly between steps.
struct ParamTensor {
    Tensor value;
    Tensor grad;

    ParamTensor() = default;
    explicit ParamTensor(Tensor v);

    void zero_grad() { grad.fill(0.0); }
};

std::string dims_str(const std::vector<int>& dims);

// Throws if the tensor holds any NaN/Inf. Ops call this on their outputs.
void ensure_finite(const Tensor& t, const char* op);

}  // namespace rinkkp
