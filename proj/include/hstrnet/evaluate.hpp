#pragma once

#include <string>
#include <vector>

#include "hstrnet/data.hpp"
#include "hstrnet/model.hpp"

namespace hstrnet {

struct SampleMetrics {
    std::string id;
    int frame = 0;  // 1-based
    double psnr_db = 0.0;
    double ssim = 0.0;
    double baseline_psnr_db = 0.0;  // degraded input vs ground truth
};

struct MetricsReport {
    std::string protocol;
    std::string checkpoint_id;
    std::string metric_space = "rgb";
    std::string device = "cpu";
    std::vector<SampleMetrics> samples;
    double mean_psnr_db = 0.0;
    double mean_ssim = 0.0;
    double mean_baseline_psnr_db = 0.0;
    // Wall-clock stats stay in memory and on stdout; the report files omit
    // them so repeated runs serialize identically.
    double time_mean_ms = 0.0;
    double time_median_ms = 0.0;
};

// Diagnostic substitutes for the model: identity returns the degraded input,
// oracle returns the ground truth (upper bound / plumbing check).
enum class EvalStub { None, Identity, Oracle };

MetricsReport evaluate(const DatasetIndex& index, const ModelFn<float>& model,
                       const EvalOptions& opts, const std::string& metric_space = "rgb",
                       const std::string& checkpoint_id = "",
                       EvalStub stub = EvalStub::None);

void write_report_csv(const MetricsReport& report, const std::string& path);
void write_report_json(const MetricsReport& report, const std::string& path);

struct BenchStats {
    int iterations = 0;
    int warmup = 0;
    int height = 0, width = 0;
    std::string device = "cpu";
    double mean_ms = 0.0, median_ms = 0.0, std_ms = 0.0;
};

// Repeated single-pair forward passes on synthetic input; the first three
// iterations warm up caches and are excluded from the stats.
BenchStats benchmark_latency(const ModelFn<float>& model, int height, int width,
                             int iterations);

std::string device_name();

}  // namespace hstrnet
