#include "hstrnet/toy.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "hstrnet/error.hpp"
#include "hstrnet/rng.hpp"

namespace fs = std::filesystem;

namespace hstrnet {

namespace {

struct Blob {
    double x, y, vx, vy, sigma;
    double amp[3];
};

struct Grating {
    double kx, ky, phase, vx, vy;
    double amp[3];
};

struct Scene {
    double base[3];
    std::vector<Blob> blobs;
    std::vector<Grating> gratings;
};

Scene make_scene(uint64_t seed, int height, int width) {
    Rng rng(seed);
    Scene s;
    for (double& b : s.base) b = rng.uniform(0.35, 0.55);
    // Shared drift around 2.5 px/frame with varied direction per element.
    const double drift = rng.uniform(2.0, 3.0);
    const double dir = rng.uniform(0.0, 2.0 * M_PI);
    const int n_blobs = 5 + static_cast<int>(rng.uniform_int(4));
    for (int i = 0; i < n_blobs; ++i) {
        Blob b;
        b.x = rng.uniform(0.15, 0.85) * width;
        b.y = rng.uniform(0.15, 0.85) * height;
        const double jitter = rng.uniform(-0.6, 0.6);
        b.vx = (drift + jitter) * std::cos(dir + rng.uniform(-0.4, 0.4));
        b.vy = (drift + jitter) * std::sin(dir + rng.uniform(-0.4, 0.4));
        b.sigma = rng.uniform(4.0, 14.0);
        for (double& a : b.amp) a = rng.uniform(-0.28, 0.28);
        s.blobs.push_back(b);
    }
    // One coarse grating that survives 4x degradation and one fine grating
    // below the downsampled Nyquist rate, so the degraded input visibly lacks
    // texture that the reference still carries.
    for (int i = 0; i < 2; ++i) {
        Grating g;
        const double wavelength = i == 0 ? rng.uniform(16.0, 30.0) : rng.uniform(5.0, 6.5);
        const double ga = rng.uniform(0.0, 2.0 * M_PI);
        g.kx = 2.0 * M_PI / wavelength * std::cos(ga);
        g.ky = 2.0 * M_PI / wavelength * std::sin(ga);
        g.phase = rng.uniform(0.0, 2.0 * M_PI);
        g.vx = drift * std::cos(dir);
        g.vy = drift * std::sin(dir);
        for (double& a : g.amp) a = i == 0 ? rng.uniform(0.04, 0.08) : rng.uniform(0.04, 0.06);
        s.gratings.push_back(g);
    }
    return s;
}

ImageF render(const Scene& s, double t, int height, int width) {
    ImageF img = ImageF::zeros(height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double v[3] = {s.base[0], s.base[1], s.base[2]};
            for (const auto& b : s.blobs) {
                const double dx = x - (b.x + t * b.vx);
                const double dy = y - (b.y + t * b.vy);
                const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
                for (int c = 0; c < 3; ++c) v[c] += b.amp[c] * g;
            }
            for (const auto& g : s.gratings) {
                const double p =
                    g.kx * (x - t * g.vx) + g.ky * (y - t * g.vy) + g.phase;
                const double w = std::sin(p);
                for (int c = 0; c < 3; ++c) v[c] += g.amp[c] * w;
            }
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = static_cast<float>(std::clamp(v[c], 0.02, 0.98));
        }
    return img;
}

}  // namespace

ImageF render_toy_frame(uint64_t scene_seed, double t, int height, int width) {
    return render(make_scene(scene_seed, height, width), t, height, width);
}

void make_toy_corpus(const std::string& root, uint64_t seed) {
    const int size = 128;
    const char* clips[4][2] = {
        {"00001", "0001"}, {"00001", "0002"}, {"00002", "0001"}, {"00002", "0002"}};
    fs::create_directories(root);
    std::ofstream train_list(fs::path(root) / "sep_trainlist.txt");
    std::ofstream test_list(fs::path(root) / "sep_testlist.txt");
    require_data(train_list.good() && test_list.good(), "cannot write toy corpus lists in " + root);
    for (int k = 0; k < 4; ++k) {
        const fs::path dir = fs::path(root) / "sequences" / clips[k][0] / clips[k][1];
        fs::create_directories(dir);
        const Scene scene = make_scene(Rng::hash_combine(seed, "toy_scene", k), size, size);
        for (int f = 0; f < 7; ++f)
            save_image_png(render(scene, f, size, size),
                           (dir / ("im" + std::to_string(f + 1) + ".png")).string());
        train_list << clips[k][0] << "/" << clips[k][1] << "\n";
        test_list << clips[k][0] << "/" << clips[k][1] << "\n";
    }
}

void make_toy_sequence(const std::string& root, const std::string& sequence_id, int frames,
                       uint64_t seed, int height, int width) {
    const fs::path dir = fs::path(root) / sequence_id;
    fs::create_directories(dir);
    const Scene scene = make_scene(Rng::hash_combine(seed, "toy_sequence", 0), height, width);
    for (int f = 0; f < frames; ++f) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%06d.png", f + 1);
        save_image_png(render(scene, f, height, width), (dir / name).string());
    }
}

}  // namespace hstrnet
