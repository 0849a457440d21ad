#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hstrnet/data.hpp"
#include "hstrnet/error.hpp"
#include "hstrnet/evaluate.hpp"
#include "hstrnet/metrics.hpp"
#include "hstrnet/model.hpp"
#include "hstrnet/selftest.hpp"
#include "hstrnet/serialize.hpp"
#include "hstrnet/toy.hpp"
#include "hstrnet/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hstrnet;

namespace {

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    require_data(in.good(), "cannot read config file: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
}

json merged_config(const std::string& path, const std::vector<std::string>& overrides) {
    json cfg = load_config_file(path);
    require_config(cfg.is_object(), "config root must be a JSON object");
    for (const auto& o : overrides) apply_config_override(cfg, o);
    return cfg;
}

// Every command echoes its effective settings so a run can be reproduced
// from the artifact directory alone.
void write_resolved_config(const json& resolved, const std::string& dir) {
    const fs::path base = dir.empty() ? fs::path(".") : fs::path(dir);
    fs::create_directories(base);
    const fs::path path = base / "resolved_config.json";
    std::ofstream out(path);
    require_data(out.good(), "cannot write " + path.string());
    out << resolved.dump(2) << "\n";
}

TrainConfig train_config_from_json(const json& root) {
    reject_unknown_keys(root, {"model", "train", "data"}, "");
    TrainConfig cfg;
    if (root.contains("model")) cfg.model = model_config_from_json(root["model"]);
    if (root.contains("train")) {
        const json& t = root["train"];
        reject_unknown_keys(t,
                            {"lr", "epochs", "batch_size", "crop_size", "seed", "clip_gradients",
                             "clip_norm", "checkpoint_interval", "max_steps"},
                            "train");
        if (t.contains("lr")) cfg.lr = t["lr"].get<double>();
        if (t.contains("epochs")) cfg.epochs = t["epochs"].get<int>();
        if (t.contains("batch_size")) cfg.batch_size = t["batch_size"].get<int>();
        if (t.contains("crop_size")) cfg.crop_size = t["crop_size"].get<int>();
        if (t.contains("seed")) cfg.seed = t["seed"].get<uint64_t>();
        if (t.contains("clip_gradients")) cfg.clip_gradients = t["clip_gradients"].get<bool>();
        if (t.contains("clip_norm")) cfg.clip_norm = t["clip_norm"].get<double>();
        if (t.contains("checkpoint_interval"))
            cfg.checkpoint_interval = t["checkpoint_interval"].get<int>();
        if (t.contains("max_steps")) cfg.max_steps = t["max_steps"].get<int64_t>();
    }
    return cfg;
}

json train_config_to_json(const TrainConfig& cfg) {
    return json{{"lr", cfg.lr},
                {"epochs", cfg.epochs},
                {"batch_size", cfg.batch_size},
                {"crop_size", cfg.crop_size},
                {"seed", cfg.seed},
                {"clip_gradients", cfg.clip_gradients},
                {"clip_norm", cfg.clip_norm},
                {"checkpoint_interval", cfg.checkpoint_interval},
                {"max_steps", cfg.max_steps}};
}

struct DataSpec {
    std::string root;
    std::string layout = "septuplet";
    std::string list;
};

DataSpec data_spec_from_json(const json& root) {
    DataSpec spec;
    if (!root.contains("data")) return spec;
    const json& d = root["data"];
    reject_unknown_keys(d, {"root", "layout", "list"}, "data");
    if (d.contains("root")) spec.root = d["root"].get<std::string>();
    if (d.contains("layout")) spec.layout = d["layout"].get<std::string>();
    if (d.contains("list")) spec.list = d["list"].get<std::string>();
    return spec;
}

EvalStub stub_from_string(const std::string& s) {
    if (s.empty() || s == "none") return EvalStub::None;
    if (s == "identity") return EvalStub::Identity;
    if (s == "oracle") return EvalStub::Oracle;
    throw ConfigError("unknown stub '" + s + "' (use identity or oracle)");
}

HstrNet<float> model_from_file(const std::string& ckpt_path) {
    return model_from_checkpoint(load_checkpoint(ckpt_path));
}

std::vector<std::string> list_frame_files(const std::string& dir) {
    require_data(fs::is_directory(dir), "not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = e.path().extension().string();
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

int cmd_prepare_data(const std::string& root, const std::string& layout_name,
                     const std::string& list, const std::string& out, bool make_toy,
                     uint64_t seed) {
    if (make_toy) {
        const Layout layout = layout_from_string(layout_name);
        if (layout == Layout::Septuplet) {
            make_toy_corpus(root, seed);
        } else if (layout == Layout::Sequence) {
            make_toy_sequence(root, "seq_a", 9, seed);
            make_toy_sequence(root, "seq_b", 13, seed + 1);
        } else {
            throw ConfigError("--make-toy supports septuplet and sequence layouts");
        }
    }
    DatasetIndex index = index_dataset(root, layout_from_string(layout_name), list);
    save_index(index, out);
    write_resolved_config(json{{"command", "prepare-data"},
                               {"root", root},
                               {"layout", layout_name},
                               {"list", list},
                               {"out", out},
                               {"make_toy", make_toy},
                               {"seed", seed}},
                          fs::path(out).parent_path().string());
    std::cout << "indexed " << index.entries.size() << " " << layout_name << " entries -> " << out
              << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& resume, const std::string& out_dir, int64_t seed_flag) {
    json root = merged_config(config_path, overrides);
    TrainConfig cfg = train_config_from_json(root);
    if (seed_flag >= 0) cfg.seed = static_cast<uint64_t>(seed_flag);
    cfg.out_dir = out_dir;

    DataSpec data = data_spec_from_json(root);
    require_config(!data.root.empty(), "config needs data.root pointing at the training corpus");
    DatasetIndex index = index_dataset(data.root, layout_from_string(data.layout), data.list);

    write_resolved_config(json{{"command", "train"},
                               {"model", to_json(cfg.model)},
                               {"train", train_config_to_json(cfg)},
                               {"data",
                                {{"root", data.root}, {"layout", data.layout}, {"list", data.list}}},
                               {"resume", resume},
                               {"out", out_dir}},
                          out_dir);

    TrainResult res = train(cfg, index, resume);
    std::cout << "trained " << res.steps << " steps over " << res.epoch_mean_loss.size()
              << " epochs\n";
    if (!res.epoch_mean_loss.empty())
        std::cout << "first epoch mean loss " << res.epoch_mean_loss.front()
                  << ", last epoch mean loss " << res.epoch_mean_loss.back() << "\n";
    std::cout << "final checkpoint: " << res.final_checkpoint << "\n";
    std::cout << "train log: " << res.log_path << "\n";
    return 0;
}

int cmd_eval(const std::string& root, const std::string& protocol, const std::string& list,
             const std::string& ckpt, const std::string& out_dir,
             const std::string& metric_space, const std::string& stub_name) {
    const EvalStub stub = stub_from_string(stub_name);
    require_config(stub != EvalStub::None || !ckpt.empty(),
                   "eval needs --ckpt (or an explicit --stub)");
    DatasetIndex index = index_dataset(root, layout_from_string(protocol), list);

    ModelFn<float> fn;
    std::string ckpt_id = stub_name.empty() ? "" : "stub:" + stub_name;
    HstrNet<float> model;
    if (stub == EvalStub::None) {
        model = model_from_file(ckpt);
        fn = [&model](const Tensor<float>& lr, const Tensor<float>& ref) {
            return model.forward(lr, ref);
        };
        ckpt_id = fs::path(ckpt).filename().string();
    }

    MetricsReport report = evaluate(index, fn, {}, metric_space, ckpt_id, stub);
    fs::create_directories(out_dir);
    write_report_csv(report, (fs::path(out_dir) / "report.csv").string());
    write_report_json(report, (fs::path(out_dir) / "report.json").string());
    write_resolved_config(json{{"command", "eval"},
                               {"root", root},
                               {"protocol", protocol},
                               {"list", list},
                               {"ckpt", ckpt},
                               {"stub", stub_name},
                               {"metric_space", metric_space},
                               {"out", out_dir}},
                          out_dir);

    std::printf("%zu samples | psnr %.4f dB | ssim %.6f | baseline %.4f dB\n",
                report.samples.size(), report.mean_psnr_db, report.mean_ssim,
                report.mean_baseline_psnr_db);
    std::printf("per-sample forward: mean %.2f ms, median %.2f ms (%s)\n", report.time_mean_ms,
                report.time_median_ms, report.device.c_str());
    return 0;
}

int cmd_infer(const std::string& lr_path, const std::string& ref_path, const std::string& ckpt,
              const std::string& out_path, const std::string& gt_path) {
    ImageF lr = load_image(lr_path);
    ImageF ref = load_image(ref_path);
    if (lr.height != ref.height || lr.width != ref.width)
        throw DataError("resolution mismatch: " + lr_path + " is " + std::to_string(lr.width) +
                        "x" + std::to_string(lr.height) + " but " + ref_path + " is " +
                        std::to_string(ref.width) + "x" + std::to_string(ref.height));

    HstrNet<float> model = model_from_file(ckpt);
    NoGradGuard guard;
    ImageF out = from_tensor(model.forward(to_tensor(lr), to_tensor(ref)));
    if (!fs::path(out_path).parent_path().empty())
        fs::create_directories(fs::path(out_path).parent_path());
    save_image_png(out, out_path);
    std::cout << "wrote " << out_path << " (" << out.width << "x" << out.height << ")\n";

    if (!gt_path.empty()) {
        ImageF gt = load_image(gt_path);
        std::printf("psnr vs %s: %.4f dB\n", gt_path.c_str(), psnr(out, gt));
    }
    write_resolved_config(json{{"command", "infer"},
                               {"lr", lr_path},
                               {"ref", ref_path},
                               {"ckpt", ckpt},
                               {"out", out_path},
                               {"gt", gt_path}},
                          fs::path(out_path).parent_path().string());
    return 0;
}

int cmd_upsample4x(const std::string& dir, const std::string& ckpt, const std::string& out_dir,
                   const std::string& stub_name, int factor) {
    const EvalStub stub = stub_from_string(stub_name);
    require_config(stub != EvalStub::None || !ckpt.empty(),
                   "upsample4x needs --ckpt (or an explicit --stub)");

    const auto files = list_frame_files(dir);
    require_data(files.size() >= 5,
                 "sequence " + dir + " has " + std::to_string(files.size()) +
                     " frames; the 4x cascade needs at least 5");

    std::vector<ImageF> frames;
    frames.reserve(files.size());
    for (const auto& f : files) frames.push_back(load_image(f));

    HstrNet<float> model;
    if (stub == EvalStub::None) model = model_from_file(ckpt);

    fs::create_directories(out_dir);
    std::ofstream csv(fs::path(out_dir) / "frames.csv");
    require_data(csv.good(), "cannot write CSV in " + out_dir);
    csv << "frame,position,psnr_db\n";

    double sum_outer = 0.0, sum_middle = 0.0;
    int n_outer = 0, n_middle = 0;
    NoGradGuard guard;
    for (size_t start = 0; start + 5 <= frames.size(); start += 4) {
        std::array<Tensor<float>, 3> lr;
        std::array<const ImageF*, 3> gt;
        for (int i = 0; i < 3; ++i) {
            gt[i] = &frames[start + 1 + i];
            lr[i] = to_tensor(degrade(*gt[i], factor));
        }
        std::array<Tensor<float>, 2> refs{to_tensor(frames[start]), to_tensor(frames[start + 4])};

        ModelFn<float> fn;
        switch (stub) {
            case EvalStub::Identity:
                fn = [](const Tensor<float>& x, const Tensor<float>&) { return x; };
                break;
            case EvalStub::Oracle:
                // Answer each call with the ground truth of whichever degraded
                // frame it was given; cascade outputs then reproduce the input.
                fn = [&lr, &gt](const Tensor<float>& x, const Tensor<float>&) {
                    for (int i = 0; i < 3; ++i)
                        if (x.data() == lr[i].data()) return to_tensor(*gt[i]);
                    throw InvariantError("oracle stub saw an unexpected input tensor");
                };
                break;
            case EvalStub::None:
                fn = [&model](const Tensor<float>& a, const Tensor<float>& b) {
                    return model.forward(a, b);
                };
                break;
        }

        const auto out = upsample_4x(lr, refs, fn);
        char line[160];
        for (int i = 0; i < 3; ++i) {
            const int frame_number = static_cast<int>(start) + 2 + i;  // 1-based
            char name[64];
            std::snprintf(name, sizeof(name), "frame_%06d.png", frame_number);
            save_image_png(from_tensor(out[i]), (fs::path(out_dir) / name).string());
            const double p = psnr(from_tensor(out[i]), *gt[i]);
            std::snprintf(line, sizeof(line), "%d,%d,%.10f\n", frame_number, i + 2, p);
            csv << line;
            if (i == 1) {
                sum_middle += p;
                ++n_middle;
            } else {
                sum_outer += p;
                ++n_outer;
            }
        }
    }
    write_resolved_config(json{{"command", "upsample4x"},
                               {"dir", dir},
                               {"ckpt", ckpt},
                               {"stub", stub_name},
                               {"factor", factor},
                               {"out", out_dir}},
                          out_dir);
    std::printf("%d groups, %d frames written to %s\n", n_middle, n_outer + n_middle,
                out_dir.c_str());
    std::printf("outer mean psnr %.4f dB | middle mean psnr %.4f dB\n", sum_outer / n_outer,
                sum_middle / n_middle);
    return 0;
}

int cmd_bench(const std::string& ckpt, const std::string& config_path,
              const std::vector<std::string>& overrides, int height, int width, int iterations,
              const std::string& out_dir) {
    HstrNet<float> model;
    if (!ckpt.empty()) {
        model = model_from_file(ckpt);
    } else {
        json root = merged_config(config_path, overrides);
        reject_unknown_keys(root, {"model"}, "");
        ModelConfig cfg;
        if (root.contains("model")) cfg = model_config_from_json(root["model"]);
        model = HstrNet<float>::build(cfg);
        model.init(1);
    }
    ModelFn<float> fn = [&model](const Tensor<float>& lr, const Tensor<float>& ref) {
        return model.forward(lr, ref);
    };
    BenchStats stats = benchmark_latency(fn, height, width, iterations);
    std::printf("%dx%d on %s: mean %.2f ms, median %.2f ms, std %.2f ms (%d iterations, %d warmup)\n",
                stats.width, stats.height, stats.device.c_str(), stats.mean_ms, stats.median_ms,
                stats.std_ms, stats.iterations, stats.warmup);
    if (!out_dir.empty()) {
        write_resolved_config(json{{"command", "bench"},
                                   {"ckpt", ckpt},
                                   {"config", config_path},
                                   {"height", height},
                                   {"width", width},
                                   {"iterations", iterations},
                                   {"out", out_dir}},
                              out_dir);
        json j{{"height", stats.height},    {"width", stats.width},
               {"device", stats.device},    {"iterations", stats.iterations},
               {"warmup", stats.warmup},    {"mean_ms", stats.mean_ms},
               {"median_ms", stats.median_ms}, {"std_ms", stats.std_ms}};
        std::ofstream out(fs::path(out_dir) / "bench.json");
        out << j.dump(2) << "\n";
    }
    return 0;
}

int cmd_selftest(bool f64) {
    const auto checks = run_selftest(f64);
    size_t width = 0;
    for (const auto& c : checks) width = std::max(width, c.name.size());
    for (const auto& c : checks) {
        std::printf("%-*s  %s", static_cast<int>(width), c.name.c_str(),
                    c.pass ? "pass" : "FAIL");
        if (!c.detail.empty()) std::printf("  (%s)", c.detail.c_str());
        std::printf("\n");
    }
    if (!all_passed(checks)) throw InvariantError("selftest failed");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HSTR-Net reference-based video super-resolution pipeline"};
    app.require_subcommand(1);

    // prepare-data
    std::string pd_root, pd_layout = "septuplet", pd_list, pd_out;
    bool pd_make_toy = false;
    uint64_t pd_seed = 1;
    auto* pd = app.add_subcommand("prepare-data", "Index a frame corpus into a dataset file");
    pd->add_option("--root", pd_root, "Corpus root directory")->required();
    pd->add_option("--layout", pd_layout, "septuplet, triplet, or sequence");
    pd->add_option("--list", pd_list, "Optional list file restricting sequence ids");
    pd->add_option("--out", pd_out, "Output index JSON path")->required();
    pd->add_flag("--make-toy", pd_make_toy, "Generate the synthetic toy corpus into --root first");
    pd->add_option("--seed", pd_seed, "Seed for toy corpus generation");

    // train
    std::string tr_config, tr_resume, tr_out = "runs/default";
    std::vector<std::string> tr_set;
    int64_t tr_seed = -1;
    auto* tr = app.add_subcommand("train", "Optimize a model on an indexed corpus");
    tr->add_option("--config", tr_config, "JSON config file (model/train/data sections)");
    tr->add_option("--set", tr_set, "Dotted overrides, e.g. train.lr=1e-4 or model.variant=d");
    tr->add_option("--resume", tr_resume, "Checkpoint to resume from");
    tr->add_option("--out", tr_out, "Run directory for checkpoints and logs");
    tr->add_option("--seed", tr_seed, "Overrides train.seed");

    // eval
    std::string ev_root, ev_protocol = "septuplet", ev_list, ev_ckpt, ev_out = "eval_out";
    std::string ev_space = "rgb", ev_stub;
    auto* ev = app.add_subcommand("eval", "Measure PSNR/SSIM over an evaluation protocol");
    ev->add_option("--root", ev_root, "Corpus root directory")->required();
    ev->add_option("--protocol", ev_protocol, "septuplet, triplet, or sequence");
    ev->add_option("--list", ev_list, "Optional list file restricting sequence ids");
    ev->add_option("--ckpt", ev_ckpt, "Checkpoint to evaluate");
    ev->add_option("--out", ev_out, "Directory for report.csv / report.json");
    ev->add_option("--metric-space", ev_space, "rgb or y");
    ev->add_option("--stub", ev_stub, "identity or oracle (plumbing checks, no model)");

    // infer
    std::string in_lr, in_ref, in_ckpt, in_out, in_gt;
    auto* inf = app.add_subcommand("infer", "Super-resolve one frame pair");
    inf->add_option("--lr", in_lr, "Degraded input frame")->required();
    inf->add_option("--ref", in_ref, "High-resolution reference frame")->required();
    inf->add_option("--ckpt", in_ckpt, "Checkpoint")->required();
    inf->add_option("--out", in_out, "Output PNG path")->required();
    inf->add_option("--gt", in_gt, "Optional ground truth; prints PSNR");

    // upsample4x
    std::string up_dir, up_ckpt, up_out, up_stub;
    int up_factor = 4;
    auto* up = app.add_subcommand("upsample4x",
                                  "4x temporal upsampling over 5-frame groups of a sequence");
    up->add_option("--dir", up_dir, "Directory of ordered frames")->required();
    up->add_option("--ckpt", up_ckpt, "Checkpoint");
    up->add_option("--out", up_out, "Output directory")->required();
    up->add_option("--stub", up_stub, "identity or oracle");
    up->add_option("--factor", up_factor, "Degradation factor for the LR inputs");

    // bench
    std::string be_ckpt, be_config, be_out;
    std::vector<std::string> be_set;
    int be_h = 128, be_w = 128, be_iters = 20;
    auto* be = app.add_subcommand("bench", "Measure single-pair forward latency");
    be->add_option("--ckpt", be_ckpt, "Checkpoint to time");
    be->add_option("--config", be_config, "Model config JSON (used when no checkpoint)");
    be->add_option("--set", be_set, "Dotted overrides for --config");
    be->add_option("--height", be_h, "Input height");
    be->add_option("--width", be_w, "Input width");
    be->add_option("--iterations", be_iters, "Timed iterations (first 3 warm up)");
    be->add_option("--out", be_out, "Optional directory for bench.json");

    // selftest
    bool st_f64 = false;
    auto* st = app.add_subcommand("selftest", "Run the built-in numeric invariant suite");
    st->add_flag("--f64", st_f64, "Run gradient probes in double precision (tolerance 1e-4)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (pd->parsed())
            return cmd_prepare_data(pd_root, pd_layout, pd_list, pd_out, pd_make_toy, pd_seed);
        if (tr->parsed()) return cmd_train(tr_config, tr_set, tr_resume, tr_out, tr_seed);
        if (ev->parsed())
            return cmd_eval(ev_root, ev_protocol, ev_list, ev_ckpt, ev_out, ev_space, ev_stub);
        if (inf->parsed()) return cmd_infer(in_lr, in_ref, in_ckpt, in_out, in_gt);
        if (up->parsed()) return cmd_upsample4x(up_dir, up_ckpt, up_out, up_stub, up_factor);
        if (be->parsed())
            return cmd_bench(be_ckpt, be_config, be_set, be_h, be_w, be_iters, be_out);
        if (st->parsed()) return cmd_selftest(st_f64);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const InvariantError& e) {
        std::cerr << "invariant failure: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
