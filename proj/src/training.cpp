#include "hstrnet/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "hstrnet/error.hpp"
#include "hstrnet/serialize.hpp"

namespace hstrnet {

namespace fs = std::filesystem;
using nlohmann::json;

AdamOptimizer::AdamOptimizer(ParamList<float> params, double lr, double beta1, double beta2,
                             double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params_.items.size());
    v_.resize(params_.items.size());
    for (size_t i = 0; i < params_.items.size(); ++i) {
        m_[i].assign(params_.items[i].tensor.numel(), 0.f);
        v_[i].assign(params_.items[i].tensor.numel(), 0.f);
    }
}

double AdamOptimizer::clip_global_norm(double max_norm) {
    double sq = 0.0;
    for (auto& p : params_.items)
        for (float g : p.tensor.grad()) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const float scale = static_cast<float>(max_norm / norm);
        for (auto& p : params_.items)
            for (float& g : p.tensor.grad_mut()) g *= scale;
    }
    return norm;
}

void AdamOptimizer::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.items.size(); ++i) {
        auto& p = params_.items[i].tensor;
        const auto& g = p.grad();
        float* w = p.data();
        for (size_t j = 0; j < p.numel(); ++j) {
            const double gj = j < g.size() ? g[j] : 0.0;
            const double m = beta1_ * m_[i][j] + (1.0 - beta1_) * gj;
            const double v = beta2_ * v_[i][j] + (1.0 - beta2_) * gj * gj;
            m_[i][j] = static_cast<float>(m);
            v_[i][j] = static_cast<float>(v);
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            w[j] = static_cast<float>(w[j] - lr_ * mhat / (std::sqrt(vhat) + eps_));
        }
    }
}

void AdamOptimizer::zero_grad() {
    for (auto& p : params_.items) p.tensor.zero_grad();
}

void TrainConfig::validate() const {
    model.validate();
    require_config(lr > 0.0, "learning rate must be positive");
    require_config(epochs >= 1, "epochs must be at least 1");
    require_config(batch_size >= 1, "batch size must be at least 1");
    require_config(crop_size >= 16 && crop_size % 16 == 0,
                   "training crop size must be a positive multiple of 16");
    require_config(!out_dir.empty(), "training output directory must be set");
    require_config(clip_norm > 0.0, "gradient clip norm must be positive");
}

namespace {

Tensor<float> stack_batch(const std::vector<const ImageF*>& images) {
    const int b = static_cast<int>(images.size());
    const int h = images[0]->height, w = images[0]->width;
    Tensor<float> out = Tensor<float>::zeros({b, 3, h, w});
    const size_t plane = static_cast<size_t>(3) * h * w;
    for (int i = 0; i < b; ++i) {
        require_data(images[i]->height == h && images[i]->width == w,
                     "batch images must share a resolution");
        std::copy(images[i]->values.begin(), images[i]->values.end(),
                  out.data() + static_cast<size_t>(i) * plane);
    }
    return out;
}

std::string checkpoint_path(const std::string& dir, const std::string& stem) {
    return (fs::path(dir) / (stem + ".ckpt")).string();
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const DatasetIndex& index,
                  const std::string& resume_checkpoint) {
    cfg.validate();
    require_data(!index.entries.empty(), "training dataset is empty");
    require_data(index.layout == Layout::Septuplet,
                 "training expects the seven-frame clip layout");

    fs::create_directories(cfg.out_dir);

    HstrNet<float> model;
    int64_t step = 0;
    if (resume_checkpoint.empty()) {
        model = HstrNet<float>::build(cfg.model);
        model.init(cfg.seed);
    } else {
        Checkpoint ckpt = load_checkpoint(resume_checkpoint);
        require_config(ckpt.config.variant == cfg.model.variant,
                       "resume checkpoint was trained with variant '" + ckpt.config.variant +
                           "', not '" + cfg.model.variant + "'");
        model = model_from_checkpoint(ckpt);
        step = ckpt.step;
    }

    AdamOptimizer opt(model.named_params(), cfg.lr);

    TrainResult result;
    result.log_path = (fs::path(cfg.out_dir) / "train_log.jsonl").string();
    std::ofstream log(result.log_path, resume_checkpoint.empty() ? std::ios::trunc
                                                                 : std::ios::app);
    require_data(log.good(), "cannot open training log: " + result.log_path);

    // Frames are reloaded lazily and cached; desk-scale corpora fit in memory.
    std::map<std::string, std::vector<ImageF>> frame_cache;
    auto frames_of = [&](const SequenceEntry& entry) -> const std::vector<ImageF>& {
        auto it = frame_cache.find(entry.id);
        if (it == frame_cache.end()) it = frame_cache.emplace(entry.id, load_frames(entry)).first;
        return it->second;
    };

    const int64_t steps_per_epoch =
        (static_cast<int64_t>(index.entries.size()) + cfg.batch_size - 1) / cfg.batch_size;
    bool done = false;

    for (int epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
        std::vector<size_t> order(index.entries.size());
        std::iota(order.begin(), order.end(), size_t{0});
        Rng shuffle_rng(Rng::hash_combine(cfg.seed, "epoch-order", static_cast<uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

        double epoch_loss = 0.0;
        int64_t epoch_steps = 0;

        for (int64_t bi = 0; bi < steps_per_epoch && !done; ++bi) {
            const auto t0 = std::chrono::steady_clock::now();

            std::vector<Sample> samples;
            for (int k = 0; k < cfg.batch_size; ++k) {
                const size_t pos = (static_cast<size_t>(bi) * cfg.batch_size + k) % order.size();
                const auto& entry = index.entries[order[pos]];
                Rng rng(sample_seed(cfg.seed, entry.id, static_cast<uint64_t>(epoch)));
                samples.push_back(make_training_sample(frames_of(entry), entry.id, rng,
                                                       cfg.crop_size, cfg.model.degradation_factor));
            }
            std::vector<const ImageF*> lr, ref, gt;
            for (const auto& s : samples) {
                lr.push_back(&s.lr);
                ref.push_back(&s.ref);
                gt.push_back(&s.gt);
            }

            Tensor<float> pred = model.forward_unclamped(stack_batch(lr), stack_batch(ref));
            Tensor<float> loss = l1_loss(pred, stack_batch(gt));
            const double loss_value = loss.item();
            ++step;
            if (!std::isfinite(loss_value))
                throw NumericError("non-finite training loss at step " + std::to_string(step) +
                                   " (sample '" + samples.front().meta.sequence + "')");

            opt.zero_grad();
            loss.backward();
            if (cfg.clip_gradients) opt.clip_global_norm(cfg.clip_norm);
            opt.step();

            const double ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count();
            json line = {{"step", step}, {"loss", loss_value}, {"ms", ms}};
            log << line.dump() << "\n";
            log.flush();

            epoch_loss += loss_value;
            ++epoch_steps;
            if (cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0) {
                char stem[32];
                std::snprintf(stem, sizeof(stem), "checkpoint_%08lld",
                              static_cast<long long>(step));
                save_checkpoint(checkpoint_from_model(model, step),
                                checkpoint_path(cfg.out_dir, stem));
            }
            if (cfg.max_steps > 0 && step >= cfg.max_steps) done = true;
        }
        if (epoch_steps > 0) result.epoch_mean_loss.push_back(epoch_loss / epoch_steps);
    }

    result.steps = step;
    result.final_checkpoint = checkpoint_path(cfg.out_dir, "checkpoint_final");
    save_checkpoint(checkpoint_from_model(model, step), result.final_checkpoint);
    return result;
}

}  // namespace hstrnet
