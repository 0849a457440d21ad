#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace hstrnet {

// Architecture selector for the four ablation variants:
//   b    bidirectional general-purpose flow, fixed-warp context, no patch matching
//   i    single-flow motion design, fixed-warp context
//   d    i + deformable-convolution context alignment
//   full d + cross-frame windowed patch matching
struct ModelConfig {
    std::string variant = "full";

    std::array<int, 3> motion_widths{240, 150, 90};
    bool motion_feed_frames = false;

    std::array<int, 4> context_widths{16, 32, 64, 128};
    bool context_tap_refine = false;

    int pm_dim = 48;
    int pm_window = 3;
    int pm_heads = 1;
    bool pm_raw_eq1 = false;

    std::array<int, 4> fusion_down{32, 64, 144, 304};
    std::array<int, 4> fusion_up{128, 64, 32, 16};

    int degradation_factor = 4;

    bool has_patchmatch() const { return variant == "full"; }
    bool deformable_context() const { return variant == "d" || variant == "full"; }
    bool bidirectional_motion() const { return variant == "b"; }

    // Channel count entering motion block k (0..2).
    int motion_in_channels(int k) const {
        if (k == 0) return 6;
        int c = 3 + 4;  // warped ref + current flow
        if (bidirectional_motion()) c += 3;
        if (motion_feed_frames) c += 6;
        return c;
    }

    // Channel count entering the fusion encoder.
    int fusion_in_channels() const { return bidirectional_motion() ? 9 : 6; }

    void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Applies a dotted-path override "a.b.c=value" onto a JSON document; the value
// is parsed as a JSON literal when possible and as a string otherwise.
void apply_config_override(nlohmann::json& root, const std::string& assignment);

// Rejects keys that the schema does not know; path is used in the message.
void reject_unknown_keys(const nlohmann::json& obj, const std::vector<std::string>& known,
                         const std::string& path);

}  // namespace hstrnet
