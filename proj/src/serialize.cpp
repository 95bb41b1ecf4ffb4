#include "rinkkp/serialize.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace rinkkp {

namespace {

constexpr char kMagic[6] = {'P', 'T', 'S', 'R', '1', '\0'};

void put_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32_le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64_le(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64_le(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::string tensor_file_name(const std::string& name) {
    std::string out = name;
    for (char& c : out) {
        if (c == '/' || c == '\\') c = '_';
    }
    return out + ".ptsr";
}

}  // namespace

void write_ptsr(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("write_ptsr: cannot open " + path.string());
    }
    out.write(kMagic, sizeof(kMagic));
    put_u32_le(out, static_cast<std::uint32_t>(t.ndim()));
    for (int d : t.dims) {
        put_u32_le(out, static_cast<std::uint32_t>(d));
    }
    for (double v : t.data) {
        put_f64_le(out, v);
    }
    if (!out) {
        throw std::runtime_error("write_ptsr: write failed for " + path.string());
    }
}

Tensor read_ptsr(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("read_ptsr: cannot open " + path.string());
    }
    char magic[6];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("read_ptsr: bad magic in " + path.string());
    }
    const std::uint32_t ndim = get_u32_le(in);
    if (!in || ndim == 0 || ndim > 8) {
        throw std::runtime_error("read_ptsr: implausible ndim in " + path.string());
    }
    std::vector<int> dims(ndim);
    std::int64_t total = 1;
    for (auto& d : dims) {
        d = static_cast<int>(get_u32_le(in));
        if (d < 1) {
            throw std::runtime_error("read_ptsr: zero extent in " + path.string());
        }
        total *= d;
    }
    std::vector<double> values(static_cast<std::size_t>(total));
    for (double& v : values) {
        v = get_f64_le(in);
    }
    if (!in) {
        throw std::runtime_error("read_ptsr: truncated file " + path.string());
    }
    return Tensor(std::move(dims), std::move(values));
}

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "rinkkp-checkpoint-v1";
    nlohmann::json files = nlohmann::json::object();
    for (const auto& [name, tensor] : ckpt.tensors) {
        const std::string file = tensor_file_name(name);
        write_ptsr(dir / file, tensor);
        files[name] = file;
    }
    manifest["tensors"] = files;
    manifest["meta"] = ckpt.meta;
    std::ofstream out(dir / "manifest.json");
    if (!out) {
        throw std::runtime_error("save_checkpoint: cannot write manifest in " + dir.string());
    }
    out << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) {
        throw std::runtime_error("load_checkpoint: no manifest.json in " + dir.string());
    }
    nlohmann::json manifest = nlohmann::json::parse(in);
    if (manifest.value("format", "") != "rinkkp-checkpoint-v1") {
        throw std::runtime_error("load_checkpoint: unrecognized checkpoint format in " + dir.string());
    }
    Checkpoint ckpt;
    ckpt.meta = manifest.at("meta");
    for (const auto& [name, file] : manifest.at("tensors").items()) {
        ckpt.tensors.emplace(name, read_ptsr(dir / file.get<std::string>()));
    }
    return ckpt;
}

}  // namespace rinkkp
