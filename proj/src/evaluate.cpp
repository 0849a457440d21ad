#include "hstrnet/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "hstrnet/error.hpp"
#include "hstrnet/metrics.hpp"
#include "hstrnet/rng.hpp"

namespace hstrnet {

using nlohmann::json;

std::string device_name() {
    const char* env = std::getenv("HSTRNET_DEVICE");
    if (env == nullptr || *env == '\0') return "cpu";
    std::string name(env);
    require_config(name == "cpu", "device '" + name + "' is not available in this build");
    return name;
}

namespace {

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

MetricsReport evaluate(const DatasetIndex& index, const ModelFn<float>& model,
                       const EvalOptions& opts, const std::string& metric_space,
                       const std::string& checkpoint_id, EvalStub stub) {
    MetricsReport report;
    report.protocol = layout_to_string(index.layout);
    report.checkpoint_id = checkpoint_id;
    report.metric_space = metric_space;
    report.device = device_name();

    const auto items = enumerate_eval_items(index);
    require_data(!items.empty(), "evaluation dataset has no usable samples");

    std::vector<double> times;
    size_t cached_entry = static_cast<size_t>(-1);
    std::vector<ImageF> frames;

    double sum_psnr = 0.0, sum_ssim = 0.0, sum_base = 0.0;
    for (const auto& item : items) {
        if (item.entry != cached_entry) {
            frames = load_frames(index.entries[item.entry]);
            cached_entry = item.entry;
        }
        const auto& entry = index.entries[item.entry];
        Sample s = make_eval_sample(frames, entry.id, index.layout, item.frame, opts);

        const auto t0 = std::chrono::steady_clock::now();
        ImageF pred;
        switch (stub) {
            case EvalStub::Identity:
                pred = s.lr;
                break;
            case EvalStub::Oracle:
                pred = s.gt;
                break;
            case EvalStub::None: {
                NoGradGuard guard;
                pred = from_tensor(model(to_tensor(s.lr), to_tensor(s.ref)));
                break;
            }
        }
        times.push_back(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count());
        SampleMetrics m;
        m.id = s.meta.sequence;
        m.frame = s.meta.frame;
        m.psnr_db = psnr(pred, s.gt, metric_space);
        m.ssim = ssim(pred, s.gt, metric_space);
        m.baseline_psnr_db = psnr(s.lr, s.gt, metric_space);
        sum_psnr += m.psnr_db;
        sum_ssim += m.ssim;
        sum_base += m.baseline_psnr_db;
        report.samples.push_back(std::move(m));
    }

    const double n = static_cast<double>(report.samples.size());
    report.mean_psnr_db = sum_psnr / n;
    report.mean_ssim = sum_ssim / n;
    report.mean_baseline_psnr_db = sum_base / n;
    report.time_mean_ms =
        std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(times.size());
    report.time_median_ms = median_of(times);
    return report;
}

void write_report_csv(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    require_data(out.good(), "cannot open report file for writing: " + path);
    out << "id,frame,psnr_db,ssim,baseline_psnr_db\n";
    char line[256];
    for (const auto& s : report.samples) {
        std::snprintf(line, sizeof(line), "%s,%d,%.10f,%.10f,%.10f\n", s.id.c_str(), s.frame,
                      s.psnr_db, s.ssim, s.baseline_psnr_db);
        out << line;
    }
    require_data(out.good(), "failed while writing report: " + path);
}

void write_report_json(const MetricsReport& report, const std::string& path) {
    json j = {{"protocol", report.protocol},
              {"checkpoint", report.checkpoint_id},
              {"metric_space", report.metric_space},
              {"count", report.samples.size()},
              {"mean_psnr_db", report.mean_psnr_db},
              {"mean_ssim", report.mean_ssim},
              {"mean_baseline_psnr_db", report.mean_baseline_psnr_db}};
    std::ofstream out(path);
    require_data(out.good(), "cannot open report file for writing: " + path);
    out << j.dump(2) << "\n";
    require_data(out.good(), "failed while writing report: " + path);
}

BenchStats benchmark_latency(const ModelFn<float>& model, int height, int width,
                             int iterations) {
    require_config(iterations >= 10, "benchmark needs at least 10 iterations");
    require_config(height >= 16 && width >= 16, "benchmark resolution must be at least 16x16");

    BenchStats stats;
    stats.iterations = iterations;
    stats.warmup = 3;
    stats.height = height;
    stats.width = width;
    stats.device = device_name();

    Rng rng(20240u);
    Tensor<float> lr = Tensor<float>::uniform({1, 3, height, width}, rng, 0.f, 1.f);
    Tensor<float> ref = Tensor<float>::uniform({1, 3, height, width}, rng, 0.f, 1.f);

    std::vector<double> times;
    for (int i = 0; i < iterations; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        {
            NoGradGuard guard;
            (void)model(lr, ref);
        }
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        if (i >= stats.warmup) times.push_back(ms);
    }

    const double n = static_cast<double>(times.size());
    stats.mean_ms = std::accumulate(times.begin(), times.end(), 0.0) / n;
    stats.median_ms = median_of(times);
    double var = 0.0;
    for (double t : times) var += (t - stats.mean_ms) * (t - stats.mean_ms);
    stats.std_ms = std::sqrt(var / n);
    return stats;
}

}  // namespace hstrnet
