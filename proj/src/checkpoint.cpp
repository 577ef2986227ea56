#include "nfseg/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "nfseg/errors.hpp"

// Format (all integers little-endian):
//   magic "NFSEGCK1", u32 version
//   i64 adam_t, i32 epoch, f64 best_val_iou
//   u32 config length, config bytes
//   u32 tensor count, then per tensor:
//     u16 name length, name bytes, u8 rank, u32 extents[rank], f32 data[]

namespace nfseg {

namespace {

constexpr char kMagic[8] = {'N', 'F', 'S', 'E', 'G', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::ifstream& in, const char* what) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw LoadError(std::string("checkpoint truncated while reading ") + what);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot open " + path + " for writing");
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kVersion);
    put<std::int64_t>(out, ck.adam_t);
    put<std::int32_t>(out, ck.epoch);
    put<double>(out, ck.best_val_iou);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.config_text.size()));
    out.write(ck.config_text.data(), static_cast<std::streamsize>(ck.config_text.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.tensors.size()));
    for (const auto& e : ck.tensors) {
        put<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put<std::uint8_t>(out, static_cast<std::uint8_t>(e.value.rank()));
        for (int d : e.value.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        out.write(reinterpret_cast<const char*>(e.value.ptr()),
                  static_cast<std::streamsize>(e.value.numel() * sizeof(float)));
    }
    if (!out) throw LoadError("write failure for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw LoadError(path + " is not a checkpoint file");
    const auto version = take<std::uint32_t>(in, "version");
    if (version != kVersion)
        throw LoadError("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ck;
    ck.adam_t = static_cast<long>(take<std::int64_t>(in, "adam_t"));
    ck.epoch = take<std::int32_t>(in, "epoch");
    ck.best_val_iou = take<double>(in, "best_val_iou");
    const auto cfg_len = take<std::uint32_t>(in, "config length");
    ck.config_text.resize(cfg_len);
    in.read(ck.config_text.data(), cfg_len);
    if (!in) throw LoadError("checkpoint truncated in config text");
    const auto n = take<std::uint32_t>(in, "tensor count");
    ck.tensors.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        Checkpoint::Entry e;
        const auto name_len = take<std::uint16_t>(in, "name length");
        e.name.resize(name_len);
        in.read(e.name.data(), name_len);
        const auto rank = take<std::uint8_t>(in, "rank");
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(take<std::uint32_t>(in, "extent"));
        e.value = Tensor<float>(shape);
        in.read(reinterpret_cast<char*>(e.value.ptr()),
                static_cast<std::streamsize>(e.value.numel() * sizeof(float)));
        if (!in) throw LoadError("checkpoint truncated in tensor '" + e.name + "'");
        ck.tensors.push_back(std::move(e));
    }
    return ck;
}

}  // namespace nfseg
