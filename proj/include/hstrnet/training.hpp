#pragma once

#include <string>
#include <vector>

#include "hstrnet/data.hpp"
#include "hstrnet/model.hpp"
#include "hstrnet/model_config.hpp"
#include "hstrnet/nn.hpp"

namespace hstrnet {

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    require(pred.shape() == target.shape(), "l1 loss operands must share a shape");
    return mean(abs_t(sub(pred, target)));
}

// Adam with bias correction; moments live outside the autograd graph.
class AdamOptimizer {
  public:
    AdamOptimizer(ParamList<float> params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);

    // Scales all gradients so their global L2 norm is at most max_norm.
    // Returns the pre-clip norm.
    double clip_global_norm(double max_norm);

    void step();
    void zero_grad();

    ParamList<float>& params() { return params_; }

  private:
    ParamList<float> params_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

struct TrainConfig {
    ModelConfig model;
    double lr = 1e-5;
    int epochs = 62;
    int batch_size = 16;
    int crop_size = 128;
    uint64_t seed = 1;
    bool clip_gradients = true;
    double clip_norm = 1.0;
    int checkpoint_interval = 0;  // in steps; 0 keeps only the final checkpoint
    int64_t max_steps = 0;        // 0 means no cap
    std::string out_dir = "runs/default";

    void validate() const;
};

struct TrainResult {
    int64_t steps = 0;
    std::vector<double> epoch_mean_loss;
    std::string final_checkpoint;
    std::string log_path;
};

// Batches are stacked into [B,3,c,c] tensors; per-sample augmentation state is
// seeded from (run seed, sequence id, epoch) so runs replay bitwise.
TrainResult train(const TrainConfig& cfg, const DatasetIndex& index,
                  const std::string& resume_checkpoint = "");

}  // namespace hstrnet
