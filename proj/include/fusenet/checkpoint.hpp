// Portable parameter archive.
//
// Layout: 8-byte magic "FUSENET1", 4-byte little-endian manifest length,
// UTF-8 JSON manifest, then a raw little-endian float32 payload. Manifest
// offsets are element offsets into the payload.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fusenet/common.hpp"
#include "fusenet/network.hpp"
#include "fusenet/tensor.hpp"

namespace fusenet {

struct CheckpointMeta {
    std::int64_t epoch = 0;
    double loss = 0.0;
    std::uint64_t config_hash = 0;
};

struct Checkpoint {
    CheckpointMeta meta;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;

    const Tensor<float>* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'F', 'U', 'S', 'E', 'N', 'E', 'T', '1'};

inline void byteswap_floats_if_big_endian(std::vector<float>& data) {
    if constexpr (std::endian::native == std::endian::big) {
        for (float& f : data) {
            std::uint32_t u;
            std::memcpy(&u, &f, 4);
            u = __builtin_bswap32(u);
            std::memcpy(&f, &u, 4);
        }
    }
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::json manifest;
    manifest["meta"] = {{"epoch", ckpt.meta.epoch},
                        {"loss", ckpt.meta.loss},
                        {"config_hash", ckpt.meta.config_hash}};
    nlohmann::json tensors = nlohmann::json::array();
    std::size_t offset = 0;
    std::vector<float> payload;
    for (const auto& [name, t] : ckpt.tensors) {
        tensors.push_back(
            {{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"dtype", "f32"}});
        payload.insert(payload.end(), t.data(), t.data() + t.numel());
        offset += t.numel();
    }
    manifest["tensors"] = std::move(tensors);
    const std::string mjson = manifest.dump();
    if (mjson.size() > 0xffffffffull) throw FormatError("checkpoint manifest too large");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint '" + path + "'");
    out.write(detail::kCheckpointMagic, 8);
    const std::uint32_t len = static_cast<std::uint32_t>(mjson.size());
    const unsigned char len_le[4] = {static_cast<unsigned char>(len & 0xff),
                                     static_cast<unsigned char>((len >> 8) & 0xff),
                                     static_cast<unsigned char>((len >> 16) & 0xff),
                                     static_cast<unsigned char>((len >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(len_le), 4);
    out.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));
    detail::byteswap_floats_if_big_endian(payload);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out) throw IoError("short write on checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint '" + path + "'");

    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0) {
        throw FormatError("'" + path + "' is not a FUSENET1 checkpoint");
    }
    unsigned char len_le[4];
    if (!in.read(reinterpret_cast<char*>(len_le), 4)) throw FormatError("'" + path + "': truncated manifest length");
    const std::uint32_t len = static_cast<std::uint32_t>(len_le[0]) | (static_cast<std::uint32_t>(len_le[1]) << 8) |
                              (static_cast<std::uint32_t>(len_le[2]) << 16) |
                              (static_cast<std::uint32_t>(len_le[3]) << 24);
    std::string mjson(len, '\0');
    if (!in.read(mjson.data(), len)) throw FormatError("'" + path + "': truncated manifest");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mjson);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("'" + path + "': manifest is not valid JSON: " + e.what());
    }

    std::vector<float> payload;
    {
        std::vector<char> bytes(std::istreambuf_iterator<char>(in), {});
        if (bytes.size() % sizeof(float) != 0) throw FormatError("'" + path + "': payload size not float-aligned");
        payload.resize(bytes.size() / sizeof(float));
        std::memcpy(payload.data(), bytes.data(), bytes.size());
        detail::byteswap_floats_if_big_endian(payload);
    }

    Checkpoint ckpt;
    try {
        const auto& meta = manifest.at("meta");
        ckpt.meta.epoch = meta.at("epoch").get<std::int64_t>();
        ckpt.meta.loss = meta.at("loss").get<double>();
        ckpt.meta.config_hash = meta.at("config_hash").get<std::uint64_t>();
        for (const auto& t : manifest.at("tensors")) {
            const auto name = t.at("name").get<std::string>();
            const auto shape = t.at("shape").get<std::vector<std::size_t>>();
            const auto offset = t.at("offset").get<std::size_t>();
            if (t.at("dtype").get<std::string>() != "f32") {
                throw FormatError("'" + path + "': tensor '" + name + "' has unsupported dtype");
            }
            std::size_t numel = 1;
            for (std::size_t d : shape) numel *= d;
            if (offset + numel > payload.size()) {
                throw FormatError("'" + path + "': tensor '" + name + "' extends past the payload (truncated file?)");
            }
            ckpt.tensors.emplace_back(
                name, Tensor<float>(shape, std::vector<float>(payload.begin() + static_cast<std::ptrdiff_t>(offset),
                                                              payload.begin() +
                                                                  static_cast<std::ptrdiff_t>(offset + numel))));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("'" + path + "': manifest has unexpected structure: " + e.what());
    }
    return ckpt;
}

/// Snapshot of a model's parameters (cast to float32).
template <class S>
Checkpoint snapshot(const FusionModel<S>& model, CheckpointMeta meta) {
    Checkpoint ckpt;
    ckpt.meta = meta;
    for (const auto& [name, p] : model.named_parameters()) {
        ckpt.tensors.emplace_back(name, p.value().template cast<float>());
    }
    return ckpt;
}

/// Loads checkpoint tensors into the model; every model parameter must be
/// present with a matching shape.
template <class S>
void restore(FusionModel<S>& model, const Checkpoint& ckpt) {
    for (auto& [name, p] : model.named_parameters()) {
        const Tensor<float>* t = ckpt.find(name);
        if (t == nullptr) throw FormatError("checkpoint is missing tensor '" + name + "'");
        if (t->shape() != p.value().shape()) {
            throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_str(t->shape()) +
                              " but the architecture needs " + shape_str(p.value().shape()));
        }
        Variable<S> dst = p;  // shared handle onto the live parameter node
        dst.value() = t->template cast<S>();
    }
}

template <class S>
FusionModel<S> load_model(const std::string& path, CheckpointMeta* meta_out = nullptr) {
    const Checkpoint ckpt = load_checkpoint(path);
    FusionModel<S> model(0);
    restore(model, ckpt);
    if (meta_out) *meta_out = ckpt.meta;
    return model;
}

}  // namespace fusenet
