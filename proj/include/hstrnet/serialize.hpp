#pragma once

#include <string>
#include <vector>

#include "hstrnet/model.hpp"
#include "hstrnet/model_config.hpp"

namespace hstrnet {

struct NamedArray {
    std::string name;
    std::vector<int> shape;
    std::vector<float> values;
};

struct Checkpoint {
    uint32_t version = 1;
    ModelConfig config;
    int64_t step = 0;
    std::vector<NamedArray> arrays;

    const NamedArray* find(const std::string& name) const {
        for (const auto& a : arrays)
            if (a.name == name) return &a;
        return nullptr;
    }
};

Checkpoint checkpoint_from_model(const HstrNet<float>& model, int64_t step);

// Single-file archive: magic, format version, JSON manifest (config, step,
// array directory), then raw little-endian float payloads.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint arrays into an already-built model. Unknown or missing
// parameter names and shape mismatches are errors naming the offending key.
void load_into(const Checkpoint& ckpt, HstrNet<float>& model);

HstrNet<float> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace hstrnet
