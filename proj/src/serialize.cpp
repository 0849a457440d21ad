#include "hstrnet/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "hstrnet/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace hstrnet {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'H', 'S', 'T', 'R', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ofstream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ofstream& out, uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

}  // namespace

Checkpoint checkpoint_from_model(const HstrNet<float>& model, int64_t step) {
    Checkpoint ckpt;
    ckpt.config = model.cfg;
    ckpt.step = step;
    auto params = model.named_params();
    ckpt.arrays.reserve(params.items.size());
    for (const auto& p : params.items)
        ckpt.arrays.push_back({p.name, p.tensor.shape(), p.tensor.values()});
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json manifest;
    manifest["config"] = to_json(ckpt.config);
    manifest["step"] = ckpt.step;
    json arrays = json::array();
    uint64_t offset = 0;
    for (const auto& a : ckpt.arrays) {
        uint64_t bytes = a.values.size() * sizeof(float);
        arrays.push_back({{"name", a.name},
                          {"dtype", "f32"},
                          {"shape", a.shape},
                          {"offset", offset},
                          {"bytes", bytes}});
        offset += bytes;
    }
    manifest["arrays"] = std::move(arrays);
    std::string text = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    require_data(out.good(), "cannot open checkpoint file for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, kVersion);
    write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& a : ckpt.arrays)
        out.write(reinterpret_cast<const char*>(a.values.data()),
                  static_cast<std::streamsize>(a.values.size() * sizeof(float)));
    out.flush();
    require_data(out.good(), "failed while writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require_data(in.good(), "cannot open checkpoint file: " + path);

    char magic[8];
    in.read(magic, sizeof(magic));
    require_data(in.gcount() == sizeof(magic) && std::memcmp(magic, kMagic, sizeof(magic)) == 0,
                 "not a checkpoint file (bad magic): " + path);

    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    require_data(in.good(), "truncated checkpoint header: " + path);
    require_data(version == kVersion,
                 "unsupported checkpoint format version " + std::to_string(version) +
                     " (this build reads version " + std::to_string(kVersion) + "): " + path);

    uint64_t manifest_len = 0;
    in.read(reinterpret_cast<char*>(&manifest_len), sizeof(manifest_len));
    require_data(in.good(), "truncated checkpoint header: " + path);
    std::string text(manifest_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(manifest_len));
    require_data(in.gcount() == static_cast<std::streamsize>(manifest_len),
                 "truncated checkpoint manifest: " + path);

    Checkpoint ckpt;
    ckpt.version = version;
    std::vector<uint64_t> offsets, byte_counts;
    try {
        json manifest = json::parse(text);
        ckpt.config = model_config_from_json(manifest.at("config"));
        ckpt.step = manifest.at("step").get<int64_t>();
        for (const auto& entry : manifest.at("arrays")) {
            NamedArray a;
            a.name = entry.at("name").get<std::string>();
            require_data(entry.at("dtype").get<std::string>() == "f32",
                         "unsupported array dtype in checkpoint: " + a.name);
            a.shape = entry.at("shape").get<std::vector<int>>();
            offsets.push_back(entry.at("offset").get<uint64_t>());
            byte_counts.push_back(entry.at("bytes").get<uint64_t>());
            ckpt.arrays.push_back(std::move(a));
        }
    } catch (const json::exception& e) {
        throw DataError("malformed checkpoint manifest in " + path + ": " + e.what());
    }

    std::streampos payload_start = in.tellg();
    for (size_t i = 0; i < ckpt.arrays.size(); ++i) {
        auto& a = ckpt.arrays[i];
        size_t count = 1;
        for (int d : a.shape) count *= static_cast<size_t>(d);
        require_data(byte_counts[i] == count * sizeof(float),
                     "checkpoint array size mismatch for " + a.name);
        a.values.resize(count);
        in.seekg(payload_start + static_cast<std::streamoff>(offsets[i]));
        in.read(reinterpret_cast<char*>(a.values.data()),
                static_cast<std::streamsize>(byte_counts[i]));
        require_data(in.gcount() == static_cast<std::streamsize>(byte_counts[i]),
                     "truncated checkpoint payload for " + a.name);
    }
    return ckpt;
}

void load_into(const Checkpoint& ckpt, HstrNet<float>& model) {
    auto params = model.named_params();
    for (const auto& a : ckpt.arrays) {
        auto* p = params.find(a.name);
        require_data(p != nullptr, "checkpoint parameter '" + a.name +
                                       "' does not exist in a '" + model.cfg.variant +
                                       "' model");
        require_data(p->tensor.shape() == a.shape,
                     "checkpoint parameter '" + a.name + "' has a mismatched shape");
        p->tensor.values() = a.values;
    }
    for (const auto& p : params.items)
        require_data(ckpt.find(p.name) != nullptr,
                     "checkpoint is missing parameter '" + p.name + "'");
}

HstrNet<float> model_from_checkpoint(const Checkpoint& ckpt) {
    auto model = HstrNet<float>::build(ckpt.config);
    load_into(ckpt, model);
    return model;
}

}  // namespace hstrnet
