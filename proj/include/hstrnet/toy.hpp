#pragma once

#include <string>

#include "hstrnet/image.hpp"

namespace hstrnet {

// Synthetic clips for desk-scale experiments: smooth analytic textures
// (gaussian blobs over sinusoid gratings) drifting a few pixels per frame,
// sampled from the continuous field so motion is sub-pixel exact.
ImageF render_toy_frame(uint64_t scene_seed, double t, int height, int width);

// Writes 4 septuplet clips (128x128) in the septuplet directory layout plus
// sep_trainlist.txt / sep_testlist.txt covering all of them.
void make_toy_corpus(const std::string& root, uint64_t seed);

// Writes one frame-sequence directory with `frames` PNG frames.
void make_toy_sequence(const std::string& root, const std::string& sequence_id, int frames,
                       uint64_t seed, int height = 128, int width = 128);

}  // namespace hstrnet
