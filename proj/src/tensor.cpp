#include "rinkkp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rinkkp {

namespace {

std::int64_t checked_product(const std::vector<int>& dims) {
    if (dims.empty()) {
        throw std::runtime_error("Tensor: dims must be non-empty");
    }
    std::int64_t n = 1;
    for (int d : dims) {
        if (d < 1) {
            throw std::runtime_error("Tensor: all dims must be >= 1, got " + dims_str(dims));
        }
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> d) : dims(std::move(d)) {
    data.assign(static_cast<std::size_t>(checked_product(dims)), 0.0);
}

Tensor::Tensor(std::vector<int> d, std::vector<double> values) : dims(std::move(d)), data(std::move(values)) {
    const std::int64_t n = checked_product(dims);
    if (n != static_cast<std::int64_t>(data.size())) {
        std::ostringstream msg;
        msg << "Tensor: " << data.size() << " values do not fill dims " << dims_str(dims);
        throw std::runtime_error(msg.str());
    }
}

Tensor Tensor::full(std::vector<int> d, double value) {
    Tensor t(std::move(d));
    t.fill(value);
    return t;
}

void Tensor::fill(double value) {
    std::fill(data.begin(), data.end(), value);
}

ParamTensor::ParamTensor(Tensor v) : value(std::move(v)), grad(value.dims) {}

std::string dims_str(const std::vector<int>& dims) {
    std::ostringstream out;
    out << "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) out << ",";
        out << dims[i];
    }
    out << "]";
    return out.str();
}

void ensure_finite(const Tensor& t, const char* op) {
    for (double v : t.data) {
        if (!std::isfinite(v)) {
            throw std::runtime_error(std::string(op) + ": non-finite value in tensor " + dims_str(t.dims));
        }
    }
}

}  // namespace rinkkp
