#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "hit/data.hpp"
#include "hit/gradcheck.hpp"
#include "hit/metrics.hpp"
#include "hit/model.hpp"
#include "hit/ops.hpp"
#include "hit/runconfig.hpp"
#include "hit/training.hpp"

namespace fs = std::filesystem;
using namespace hit;

// Exit codes are a stable contract:
//   0 success, 2 config/input error, 3 numeric divergence,
//   4 checkpoint mismatch, 5 verification failure.
namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitCheckpoint = 4;
constexpr int kExitVerification = 5;

std::vector<ImagePair> load_dataset(const RunConfig& cfg) {
    std::vector<ImagePair> dataset;
    if (!cfg.degraded_dir.empty()) {
        for (const auto& [degraded_path, clean_path] : list_paired_dataset(cfg.degraded_dir, cfg.clean_dir))
            dataset.push_back({read_ppm(degraded_path), read_ppm(clean_path)});
        return dataset;
    }
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(cfg.clean_dir))
        if (e.is_regular_file()) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError("config.data.clean_dir: no images in " + cfg.clean_dir);
    for (std::size_t i = 0; i < files.size(); ++i) {
        Tensor clean = read_ppm(files[i]);
        Degradation d = *cfg.degradation;
        d.seed = mix_seed(d.seed, i);  // independent field per image, still seed-determined
        dataset.push_back({degrade(clean, d), clean});
    }
    return dataset;
}

int cmd_train(const std::string& config_path) {
    if (!fs::exists(config_path)) {
        std::cerr << "error: config file does not exist: " << config_path << "\n";
        return kExitConfig;
    }
    RunConfig cfg = RunConfig::parse_file(config_path);
    cfg.validate_paths();
    std::vector<ImagePair> dataset = load_dataset(cfg);
    Model model = Model::build(cfg.model, cfg.seed);
    std::cout << "training: " << model.count_params() << " parameters, " << dataset.size()
              << " pairs, " << cfg.train.total_steps << " steps\n";
    TrainResult result = train(model, dataset, cfg.train);
    model.save(cfg.checkpoint_out);
    write_trace_csv(cfg.trace_out, result.trace);
    std::cout << "final loss " << result.trace.back().loss << ", checkpoint " << cfg.checkpoint_out
              << ", trace " << cfg.trace_out << "\n";
    return kExitOk;
}

int cmd_restore(const std::string& checkpoint, const std::string& input, const std::string& output,
                const std::string& residual_out) {
    Model model = Model::load(checkpoint);
    Tensor image = read_ppm(input);
    auto [restored, residual] = model.forward(image);
    write_ppm(output, clamp01(restored));
    if (!residual_out.empty()) {
        // residual mapped to 0.5 + R/2 for visualization
        Tensor vis(residual.shape());
        const real* p = residual.data();
        real* q = vis.mutable_data();
        for (std::int64_t i = 0; i < residual.numel(); ++i) q[i] = real(0.5) + p[i] * real(0.5);
        write_ppm(residual_out, clamp01(vis));
    }
    std::cout << "restored " << input << " -> " << output << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset_dir, const std::string& task,
             const std::string& csv_out) {
    Model model = Model::load(checkpoint);
    const std::string degraded_dir = (fs::path(dataset_dir) / "degraded").string();
    const std::string clean_dir = (fs::path(dataset_dir) / "clean").string();
    auto pairs = list_paired_dataset(degraded_dir, clean_dir);
    const bool y_channel = task == "derain";

    std::ofstream csv;
    if (!csv_out.empty()) {
        csv.open(csv_out);
        if (!csv) throw IoError("cannot write metrics csv: " + csv_out);
        csv << "image,psnr,ssim\n";
        csv.precision(10);
    }

    double psnr_total = 0, ssim_total = 0;
    bool psnr_inf = false;
    std::cout << "image,psnr,ssim\n";
    for (const auto& [degraded_path, clean_path] : pairs) {
        Tensor degraded = read_ppm(degraded_path);
        Tensor clean = read_ppm(clean_path);
        auto [restored, residual] = model.forward(degraded);
        Tensor out = clamp01(restored);
        Tensor a = y_channel ? rgb_to_y(out) : out;
        Tensor b = y_channel ? rgb_to_y(clean) : clean;
        const double p = psnr(a, b, 1.0);
        const double s = ssim(a, b);
        if (std::isinf(p))
            psnr_inf = true;
        else
            psnr_total += p;
        ssim_total += s;
        const std::string name = fs::path(degraded_path).filename().string();
        std::cout << name << "," << p << "," << s << "\n";
        if (csv) csv << name << "," << p << "," << s << "\n";
    }
    const double n = static_cast<double>(pairs.size());
    const double mean_psnr = psnr_inf ? std::numeric_limits<double>::infinity() : psnr_total / n;
    const double mean_ssim = ssim_total / n;
    std::cout << "mean," << mean_psnr << "," << mean_ssim << "\n";
    if (csv) csv << "mean," << mean_psnr << "," << mean_ssim << "\n";
    return kExitOk;
}

int flops_compare(int h, int w, int c) {
    const FlopReport report = bim_flops(h, w, c);
    const unsigned long long measured = measure_bim_core_macs(h, w, c, 1);
    std::cout << "h=" << h << " w=" << w << " c=" << c << "  seu=" << report.seu_macs
              << " sa=" << report.sa_macs << " closed_form=" << report.total_macs
              << " instrumented=" << measured << (report.total_macs == measured ? "  ok" : "  MISMATCH")
              << "\n";
    return report.total_macs == measured ? kExitOk : kExitVerification;
}

int cmd_flops(int h, int w, int c, const std::string& variant, int input_size) {
    if (!variant.empty()) {
        ModelConfig cfg = ModelConfig::variant(variant);
        const int padded = (input_size + cfg.pad_multiple() - 1) / cfg.pad_multiple() * cfg.pad_multiple();
        std::cout << "variant " << variant << ", input " << input_size << " (padded " << padded
                  << "), BIM instances per level:\n";
        int status = kExitOk;
        unsigned long long total = 0;
        for (int l = 0; l + 1 < cfg.levels; ++l) {
            const int hl = padded >> l;
            const int cl = cfg.channels_at(l);
            std::cout << "level " << l << ": ";
            if (flops_compare(hl, hl, cl) != kExitOk) status = kExitVerification;
            total += bim_flops(hl, hl, cl).total_macs;
        }
        std::cout << "total BIM MACs: " << total << "\n";
        return status;
    }
    return flops_compare(h, w, c);
}

int cmd_gradcheck(std::uint64_t seed, const std::string& ops_filter, bool corrupt) {
    if (corrupt) set_matmul_grad_corruption(true);
    std::vector<std::string> wanted;
    if (!ops_filter.empty()) {
        std::stringstream ss(ops_filter);
        std::string item;
        while (std::getline(ss, item, ',')) wanted.push_back(item);
    }
    double worst = 0;
    std::string worst_name;
    int checked = 0;
    for (const auto& check : gradcheck_suite()) {
        if (!wanted.empty() &&
            std::find(wanted.begin(), wanted.end(), check.name) == wanted.end())
            continue;
        const double err = check.run(seed);
        std::cout << check.name << ": max_rel_err=" << err << (err < kGradCheckTol ? "" : "  FAIL") << "\n";
        if (err > worst) {
            worst = err;
            worst_name = check.name;
        }
        ++checked;
    }
    set_matmul_grad_corruption(false);
    if (checked == 0) {
        std::cerr << "error: no ops matched filter '" << ops_filter << "'\n";
        return kExitConfig;
    }
    std::cout << "worst: " << worst_name << " (" << worst << ")\n";
    return worst < kGradCheckTol ? kExitOk : kExitVerification;
}

int cmd_attribute(const std::string& checkpoint, const std::string& image_path, const std::string& region,
                  int steps, const std::string& out_prefix) {
    Model model = Model::load(checkpoint);
    Tensor image = read_ppm(image_path);
    const int h = image.dim(0), w = image.dim(1);

    int r0 = 0, c0 = 0, rh = h, rw = w;
    if (!region.empty()) {
        if (std::sscanf(region.c_str(), "%d,%d,%d,%d", &r0, &c0, &rh, &rw) != 4)
            throw ConfigError("--region expects row,col,height,width");
        if (r0 < 0 || c0 < 0 || rh < 1 || rw < 1 || r0 + rh > h || c0 + rw > w)
            throw ConfigError("--region out of image extents");
    }

    auto target = [&](const Tensor& input) {
        auto [restored, residual] = model.forward(input);
        return mean(crop2d(restored, r0, c0, rh, rw));
    };

    Tensor baseline(image.shape());  // black
    Tensor attribution = integrated_gradients(target, image, baseline, steps);

    const double f_input = static_cast<double>(target(image).item());
    const double f_baseline = static_cast<double>(target(baseline).item());
    double attr_sum = 0;
    for (std::int64_t i = 0; i < attribution.numel(); ++i)
        attr_sum += static_cast<double>(attribution.data()[i]);
    const double span = f_input - f_baseline;
    const double completeness =
        span == 0.0 ? std::fabs(attr_sum) : std::fabs(attr_sum - span) / std::fabs(span);
    std::cout << "target(input)=" << f_input << " target(baseline)=" << f_baseline
              << " sum(attr)=" << attr_sum << " completeness_err=" << completeness << "\n";

    // normalized |attribution| heat image
    Tensor heat({h, w, 3});
    double max_abs = 0;
    for (std::int64_t i = 0; i < attribution.numel(); ++i)
        max_abs = std::max(max_abs, std::fabs(static_cast<double>(attribution.data()[i])));
    if (max_abs > 0) {
        real* q = heat.mutable_data();
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0;
                for (int ch = 0; ch < 3; ++ch)
                    acc += std::fabs(static_cast<double>(
                        attribution.data()[(static_cast<std::int64_t>(y) * w + x) * 3 + ch]));
                const real v = static_cast<real>(acc / (3.0 * max_abs));
                for (int ch = 0; ch < 3; ++ch) q[(static_cast<std::int64_t>(y) * w + x) * 3 + ch] = v;
            }
    }
    write_ppm(out_prefix + ".ppm", heat);

    std::ofstream raw(out_prefix + ".f64", std::ios::binary);
    if (!raw) throw IoError("cannot write attribution values: " + out_prefix + ".f64");
    for (std::int64_t i = 0; i < attribution.numel(); ++i) {
        const double v = static_cast<double>(attribution.data()[i]);
        raw.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HIT image restoration: train, restore, evaluate, verify"};
    app.require_subcommand(1);

    std::string config_path, checkpoint, input, output, residual_out, dataset_dir, task, csv_out;
    std::string variant, ops_filter, region, out_prefix = "attribution";
    int fh = 64, fw = 64, fc = 16, input_size = 256, steps = 128;
    std::uint64_t seed = 1;
    bool corrupt = false;

    auto* train_cmd = app.add_subcommand("train", "Train from a JSON run config");
    train_cmd->add_option("config", config_path, "Run config (JSON)")->required();

    auto* restore_cmd = app.add_subcommand("restore", "Restore one image with a checkpoint");
    restore_cmd->add_option("checkpoint", checkpoint)->required();
    restore_cmd->add_option("input", input, "Degraded image (PPM)")->required();
    restore_cmd->add_option("output", output, "Restored image (PPM)")->required();
    restore_cmd->add_option("--emit-residual", residual_out, "Also write the residual visualization");

    auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM over a paired dataset");
    eval_cmd->add_option("checkpoint", checkpoint)->required();
    eval_cmd->add_option("dataset", dataset_dir, "Directory holding degraded/ and clean/")->required();
    eval_cmd->add_option("--task", task, "Task name; 'derain' switches metrics to the Y channel");
    eval_cmd->add_option("--csv", csv_out, "Write the metrics table to this CSV file");

    auto* flops_cmd = app.add_subcommand("flops", "BIM complexity: closed form vs instrumented count");
    flops_cmd->set_help_flag("--help", "Print help");  // frees -h for the height option
    flops_cmd->add_option("--h", fh);
    flops_cmd->add_option("--w", fw);
    flops_cmd->add_option("--c", fc);
    flops_cmd->add_option("--variant", variant, "hit-t, hit-b or hit-micro");
    flops_cmd->add_option("--input-size", input_size);

    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference verification suite");
    grad_cmd->add_option("--seed", seed);
    grad_cmd->add_option("--ops", ops_filter, "Comma-separated op names (default: all)");
    grad_cmd->add_flag("--corrupt", corrupt, "Negative control: corrupt one gradient rule");

    auto* attr_cmd = app.add_subcommand("attribute", "Integrated Gradients attribution map");
    attr_cmd->add_option("checkpoint", checkpoint)->required();
    attr_cmd->add_option("image", input)->required();
    attr_cmd->add_option("--region", region, "row,col,height,width (default: whole image)");
    attr_cmd->add_option("--steps", steps);
    attr_cmd->add_option("--out", out_prefix, "Output prefix (.ppm heat map, .f64 raw values)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(config_path);
        if (restore_cmd->parsed()) return cmd_restore(checkpoint, input, output, residual_out);
        if (eval_cmd->parsed()) return cmd_eval(checkpoint, dataset_dir, task, csv_out);
        if (flops_cmd->parsed()) return cmd_flops(fh, fw, fc, variant, input_size);
        if (grad_cmd->parsed()) return cmd_gradcheck(seed, ops_filter, corrupt);
        if (attr_cmd->parsed()) return cmd_attribute(checkpoint, input, region, steps, out_prefix);
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kExitCheckpoint;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
