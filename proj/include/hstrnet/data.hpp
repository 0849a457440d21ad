#pragma once

#include <string>
#include <vector>

#include "hstrnet/image.hpp"
#include "hstrnet/rng.hpp"

namespace hstrnet {

enum class Layout { Septuplet, Triplet, Sequence };

Layout layout_from_string(const std::string& s);
std::string layout_to_string(Layout layout);

struct SequenceEntry {
    std::string id;
    std::vector<std::string> frames;  // file paths, temporal order
};

struct DatasetIndex {
    std::string root;
    Layout layout = Layout::Septuplet;
    std::vector<SequenceEntry> entries;
};

// Scans `root` for the layout's directory shape. Entries with missing frames
// are skipped with a warning; an empty result is an error. `list_file`
// optionally restricts to the ids it names (one per line).
DatasetIndex index_dataset(const std::string& root, Layout layout,
                           const std::string& list_file = "");

void save_index(const DatasetIndex& index, const std::string& path);
DatasetIndex load_index(const std::string& path);

std::vector<ImageF> load_frames(const SequenceEntry& entry);

struct SampleMeta {
    std::string sequence;
    int frame = 0;       // 1-based center frame
    int ref_offset = 0;  // -1 or +1
};

struct Sample {
    ImageF lr, ref, gt;
    bool has_gt = false;
    SampleMeta meta;
};

// Shared-draw augmentation: center frame t in {2..6}, reference neighbor coin,
// one rotation, one crop window, one flip decision applied to both frames;
// the LR input is degraded after cropping.
Sample make_training_sample(const std::vector<ImageF>& septuplet, const std::string& sequence_id,
                            Rng& rng, int crop_size = 128, int factor = 4);

struct EvalOptions {
    bool resize_sequences = true;  // frame-sequence protocol: 672x380 first
    int factor = 4;
};

// One evaluation unit: (entry, center frame). Septuplet and triplet protocols
// pin the frame; frame sequences contribute every frame with a successor.
struct EvalItem {
    size_t entry = 0;
    int frame = 0;  // 0-based index of gt within the entry
};

std::vector<EvalItem> enumerate_eval_items(const DatasetIndex& index);

Sample make_eval_sample(const std::vector<ImageF>& frames, const std::string& sequence_id,
                        Layout layout, int frame, const EvalOptions& opts = {});

uint64_t sample_seed(uint64_t global_seed, const std::string& sequence_id, uint64_t epoch);

}  // namespace hstrnet
