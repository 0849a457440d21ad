#include "hstrnet/model_config.hpp"

#include "hstrnet/error.hpp"

namespace hstrnet {

using nlohmann::json;

void ModelConfig::validate() const {
    require_config(variant == "b" || variant == "i" || variant == "d" || variant == "full",
                   "model.variant must be one of b/i/d/full, got '" + variant + "'");
    for (int w : motion_widths) require_config(w > 0, "model.motion.widths must be positive");
    for (int w : context_widths) require_config(w > 0, "model.context.widths must be positive");
    for (int w : fusion_down) require_config(w > 0, "model.fusion.down must be positive");
    for (int w : fusion_up) require_config(w > 0, "model.fusion.up must be positive");
    require_config(pm_dim > 0 && pm_window > 0 && pm_heads > 0,
                   "model.patchmatch sizes must be positive");
    require_config(pm_dim % pm_heads == 0, "model.patchmatch.dim must be divisible by heads");
    require_config(degradation_factor >= 2, "model.degradation_factor must be >= 2");
}

void reject_unknown_keys(const json& obj, const std::vector<std::string>& known,
                         const std::string& path) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const auto& k : known)
            if (it.key() == k) {
                ok = true;
                break;
            }
        require_config(ok, "unknown config key '" + (path.empty() ? it.key() : path + "." + it.key()) + "'");
    }
}

json to_json(const ModelConfig& cfg) {
    return json{{"variant", cfg.variant},
                {"motion", {{"widths", cfg.motion_widths}, {"feed_frames", cfg.motion_feed_frames}}},
                {"context", {{"widths", cfg.context_widths}, {"tap_refine", cfg.context_tap_refine}}},
                {"patchmatch",
                 {{"dim", cfg.pm_dim},
                  {"window", cfg.pm_window},
                  {"heads", cfg.pm_heads},
                  {"raw_eq1", cfg.pm_raw_eq1}}},
                {"fusion", {{"down", cfg.fusion_down}, {"up", cfg.fusion_up}}},
                {"degradation_factor", cfg.degradation_factor}};
}

namespace {

template <size_t N>
void read_widths(const json& j, const std::string& path, std::array<int, N>& out) {
    require_config(j.is_array() && j.size() == N,
                   path + " must be an array of " + std::to_string(N) + " integers");
    for (size_t i = 0; i < N; ++i) out[i] = j[i].get<int>();
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    require_config(j.is_object(), "model config must be an object");
    reject_unknown_keys(
        j, {"variant", "motion", "context", "patchmatch", "fusion", "degradation_factor"},
        "model");
    if (j.contains("variant")) cfg.variant = j["variant"].get<std::string>();
    if (j.contains("motion")) {
        const auto& m = j["motion"];
        reject_unknown_keys(m, {"widths", "feed_frames"}, "model.motion");
        if (m.contains("widths")) read_widths(m["widths"], "model.motion.widths", cfg.motion_widths);
        if (m.contains("feed_frames")) cfg.motion_feed_frames = m["feed_frames"].get<bool>();
    }
    if (j.contains("context")) {
        const auto& c = j["context"];
        reject_unknown_keys(c, {"widths", "tap_refine"}, "model.context");
        if (c.contains("widths"))
            read_widths(c["widths"], "model.context.widths", cfg.context_widths);
        if (c.contains("tap_refine")) cfg.context_tap_refine = c["tap_refine"].get<bool>();
    }
    if (j.contains("patchmatch")) {
        const auto& p = j["patchmatch"];
        reject_unknown_keys(p, {"dim", "window", "heads", "raw_eq1"}, "model.patchmatch");
        if (p.contains("dim")) cfg.pm_dim = p["dim"].get<int>();
        if (p.contains("window")) cfg.pm_window = p["window"].get<int>();
        if (p.contains("heads")) cfg.pm_heads = p["heads"].get<int>();
        if (p.contains("raw_eq1")) cfg.pm_raw_eq1 = p["raw_eq1"].get<bool>();
    }
    if (j.contains("fusion")) {
        const auto& f = j["fusion"];
        reject_unknown_keys(f, {"down", "up"}, "model.fusion");
        if (f.contains("down")) read_widths(f["down"], "model.fusion.down", cfg.fusion_down);
        if (f.contains("up")) read_widths(f["up"], "model.fusion.up", cfg.fusion_up);
    }
    if (j.contains("degradation_factor"))
        cfg.degradation_factor = j["degradation_factor"].get<int>();
    cfg.validate();
    return cfg;
}

void apply_config_override(json& root, const std::string& assignment) {
    const auto eq = assignment.find('=');
    require_config(eq != std::string::npos && eq > 0,
                   "override must look like path.to.key=value, got '" + assignment + "'");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;  // bare strings stay strings
    }

    json* cur = &root;
    size_t start = 0;
    while (true) {
        const size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        require_config(!key.empty(), "empty key segment in override '" + assignment + "'");
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            return;
        }
        if (!cur->contains(key) || !(*cur)[key].is_object()) (*cur)[key] = json::object();
        cur = &(*cur)[key];
        start = dot + 1;
    }
}

}  // namespace hstrnet
