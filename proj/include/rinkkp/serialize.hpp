#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "rinkkp/tensor.hpp"

namespace rinkkp {

// PTSR1 tensor file: magic "PTSR1\0", u32-LE ndim, ndim x u32-LE extents,
// then product(extents) f64-LE values, row-major.
void write_ptsr(const std::filesystem::path& path, const Tensor& t);
Tensor read_ptsr(const std::filesystem::path& path);

// A checkpoint is a directory of PTSR1 files plus manifest.json mapping
// tensor names to files and carrying run metadata.
struct Checkpoint {
    std::map<std::string, Tensor> tensors;
    nlohmann::json meta;
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace rinkkp
