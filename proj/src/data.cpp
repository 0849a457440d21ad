#include "hstrnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <json.hpp>

#include "hstrnet/error.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace hstrnet {

Layout layout_from_string(const std::string& s) {
    if (s == "septuplet") return Layout::Septuplet;
    if (s == "triplet") return Layout::Triplet;
    if (s == "sequence") return Layout::Sequence;
    throw ConfigError("unknown layout '" + s + "' (expected septuplet, triplet or sequence)");
}

std::string layout_to_string(Layout layout) {
    switch (layout) {
        case Layout::Septuplet: return "septuplet";
        case Layout::Triplet: return "triplet";
        case Layout::Sequence: return "sequence";
    }
    return "septuplet";
}

namespace {

std::set<std::string> read_list_file(const std::string& path) {
    std::ifstream in(path);
    require_data(in.good(), "cannot read list file: " + path);
    std::set<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) ids.insert(line);
    }
    return ids;
}

std::vector<fs::path> sorted_subdirs(const fs::path& dir) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

// Clip directories hold im1.png .. imN.png.
bool collect_numbered(const fs::path& dir, int count, std::vector<std::string>& frames) {
    frames.clear();
    for (int i = 1; i <= count; ++i) {
        fs::path p = dir / ("im" + std::to_string(i) + ".png");
        if (!fs::exists(p)) return false;
        frames.push_back(p.string());
    }
    return true;
}

}  // namespace

DatasetIndex index_dataset(const std::string& root, Layout layout, const std::string& list_file) {
    require_data(fs::exists(root), "dataset root does not exist: " + root);
    std::set<std::string> filter;
    if (!list_file.empty()) filter = read_list_file(list_file);

    DatasetIndex index;
    index.root = root;
    index.layout = layout;

    if (layout == Layout::Sequence) {
        for (const auto& seq_dir : sorted_subdirs(root)) {
            const std::string id = seq_dir.filename().string();
            if (!filter.empty() && !filter.count(id)) continue;
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(seq_dir)) {
                const std::string name = e.path().filename().string();
                if (e.is_regular_file() && name.rfind("frame_", 0) == 0 &&
                    e.path().extension() == ".png")
                    files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
            if (files.size() < 5) {
                std::cerr << "warning: skipping sequence '" << id << "' with "
                          << files.size() << " frames (need at least 5)\n";
                continue;
            }
            SequenceEntry entry;
            entry.id = id;
            for (const auto& f : files) entry.frames.push_back(f.string());
            index.entries.push_back(std::move(entry));
        }
    } else {
        const int count = layout == Layout::Septuplet ? 7 : 3;
        for (const auto& seq_dir : sorted_subdirs(fs::path(root) / "sequences")) {
            for (const auto& clip_dir : sorted_subdirs(seq_dir)) {
                const std::string id =
                    seq_dir.filename().string() + "/" + clip_dir.filename().string();
                if (!filter.empty() && !filter.count(id)) continue;
                SequenceEntry entry;
                entry.id = id;
                if (!collect_numbered(clip_dir, count, entry.frames)) {
                    std::cerr << "warning: skipping clip '" << id << "': missing frames\n";
                    continue;
                }
                index.entries.push_back(std::move(entry));
            }
        }
    }
    require_data(!index.entries.empty(),
                 "no usable entries under '" + root + "' for layout " + layout_to_string(layout));
    return index;
}

void save_index(const DatasetIndex& index, const std::string& path) {
    json j;
    j["root"] = index.root;
    j["layout"] = layout_to_string(index.layout);
    j["entries"] = json::array();
    for (const auto& e : index.entries)
        j["entries"].push_back({{"id", e.id}, {"frames", e.frames}});
    std::ofstream out(path);
    require_data(out.good(), "cannot write index: " + path);
    out << j.dump(2) << "\n";
}

DatasetIndex load_index(const std::string& path) {
    std::ifstream in(path);
    require_data(in.good(), "cannot read index: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed index file " + path + ": " + e.what());
    }
    DatasetIndex index;
    index.root = j.at("root").get<std::string>();
    index.layout = layout_from_string(j.at("layout").get<std::string>());
    for (const auto& e : j.at("entries")) {
        SequenceEntry entry;
        entry.id = e.at("id").get<std::string>();
        entry.frames = e.at("frames").get<std::vector<std::string>>();
        index.entries.push_back(std::move(entry));
    }
    require_data(!index.entries.empty(), "index is empty: " + path);
    return index;
}

std::vector<ImageF> load_frames(const SequenceEntry& entry) {
    std::vector<ImageF> frames;
    frames.reserve(entry.frames.size());
    for (const auto& path : entry.frames) frames.push_back(load_image(path));
    return frames;
}

Sample make_training_sample(const std::vector<ImageF>& septuplet, const std::string& sequence_id,
                            Rng& rng, int crop_size, int factor) {
    require_data(septuplet.size() == 7, "training sample needs 7 frames, got " +
                                            std::to_string(septuplet.size()));
    const int h = septuplet[0].height, w = septuplet[0].width;
    for (const auto& f : septuplet)
        require_data(f.height == h && f.width == w, "septuplet frames differ in resolution");
    require_data(crop_size % factor == 0, "crop size must be divisible by the factor");

    const int t = 2 + static_cast<int>(rng.uniform_int(5));  // 1-based center, {2..6}
    const int offset = rng.bernoulli(0.5) ? -1 : 1;
    const double angle = rng.uniform(-10.0, 10.0);

    // The crop must stay inside the rotated frame's valid (unfilled) region:
    // pick the window center in source coordinates, where the constraint is a
    // plain box, then map it forward through the rotation.
    const double rad = angle * M_PI / 180.0;
    const double half = (crop_size - 1) / 2.0;
    const double extent = half * (std::abs(std::cos(rad)) + std::abs(std::sin(rad))) + 1.0;
    const double mx = (w - 1) / 2.0 - extent;
    const double my = (h - 1) / 2.0 - extent;
    require_data(mx >= 0.0 && my >= 0.0,
                 "frames " + std::to_string(h) + "x" + std::to_string(w) +
                     " are too small for a rotated " + std::to_string(crop_size) + " crop");
    const double uc = rng.uniform(-mx, mx);
    const double vc = rng.uniform(-my, my);
    const double cu = std::cos(rad) * uc - std::sin(rad) * vc;
    const double cv = std::sin(rad) * uc + std::cos(rad) * vc;
    int x0 = static_cast<int>(std::lround((w - 1) / 2.0 + cu - half));
    int y0 = static_cast<int>(std::lround((h - 1) / 2.0 + cv - half));
    x0 = std::clamp(x0, 0, w - crop_size);
    y0 = std::clamp(y0, 0, h - crop_size);

    const bool flip = rng.bernoulli(0.2);

    auto prepare = [&](const ImageF& frame) {
        ImageF out = crop(rotate_bilinear(frame, angle), y0, x0, crop_size, crop_size);
        if (flip) out = hflip(out);
        return out;
    };
    Sample s;
    s.gt = prepare(septuplet[static_cast<size_t>(t - 1)]);
    s.ref = prepare(septuplet[static_cast<size_t>(t - 1 + offset)]);
    s.lr = degrade(s.gt, factor);
    s.has_gt = true;
    s.meta = {sequence_id, t, offset};
    return s;
}

std::vector<EvalItem> enumerate_eval_items(const DatasetIndex& index) {
    std::vector<EvalItem> items;
    for (size_t i = 0; i < index.entries.size(); ++i) {
        switch (index.layout) {
            case Layout::Septuplet: items.push_back({i, 3}); break;
            case Layout::Triplet: items.push_back({i, 1}); break;
            case Layout::Sequence: {
                const int n = static_cast<int>(index.entries[i].frames.size());
                for (int t = 0; t + 1 < n; ++t) items.push_back({i, t});
                break;
            }
        }
    }
    return items;
}

Sample make_eval_sample(const std::vector<ImageF>& frames, const std::string& sequence_id,
                        Layout layout, int frame, const EvalOptions& opts) {
    const int n = static_cast<int>(frames.size());
    require_data(frame >= 0 && frame < n, "frame index " + std::to_string(frame) +
                                              " out of range for " + sequence_id);
    int ref_index = frame + 1;
    if (layout == Layout::Septuplet) {
        require_data(n == 7, "septuplet entry " + sequence_id + " has " + std::to_string(n) +
                                 " frames");
        require_data(frame == 3, "septuplet protocol evaluates the fourth frame");
    } else if (layout == Layout::Triplet) {
        require_data(n == 3, "triplet entry " + sequence_id + " has " + std::to_string(n) +
                                 " frames");
        require_data(frame == 1, "triplet protocol evaluates the second frame");
    }
    require_data(ref_index < n, "frame " + std::to_string(frame + 1) + " of " + sequence_id +
                                    " has no successor to use as reference");

    ImageF gt = frames[static_cast<size_t>(frame)];
    ImageF ref = frames[static_cast<size_t>(ref_index)];
    if (layout == Layout::Sequence && opts.resize_sequences) {
        gt = bicubic_resize(gt, 380, 672);
        ref = bicubic_resize(ref, 380, 672);
        for (float& v : gt.values) v = std::clamp(v, 0.f, 1.f);
        for (float& v : ref.values) v = std::clamp(v, 0.f, 1.f);
    }
    Sample s;
    s.lr = degrade(gt, opts.factor);
    s.ref = std::move(ref);
    s.gt = std::move(gt);
    s.has_gt = true;
    s.meta = {sequence_id, frame + 1, +1};
    return s;
}

uint64_t sample_seed(uint64_t global_seed, const std::string& sequence_id, uint64_t epoch) {
    return Rng::hash_combine(global_seed, sequence_id, epoch);
}

}  // namespace hstrnet
