#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "metainv/analytic.hpp"
#include "metainv/config.hpp"
#include "metainv/io.hpp"
#include "metainv/metrics.hpp"
#include "metainv/network.hpp"
#include "metainv/settings.hpp"
#include "metainv/simulate.hpp"
#include "metainv/solvers.hpp"

namespace {

using namespace metainv;

// Exit codes, also documented in --help.
constexpr int kOk = 0;
constexpr int kOtherError = 1;
constexpr int kUsageError = 2;
constexpr int kMissingFile = 3;
constexpr int kBadConfig = 4;
constexpr int kShapeMismatch = 5;

Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
    Config cfg = path.empty() ? Config{} : Config::from_file(path);
    cfg.apply_overrides(overrides);
    return cfg;
}

Image image_from_file(const std::filesystem::path& path, double pixel_size) {
    Tensor t = load_tensor(path);
    if (t.rank() != 2 || t.dim(0) != t.dim(1))
        throw std::invalid_argument("image file " + path.string() + " is not a square 2-D tensor");
    const std::size_t n = t.dim(0);
    return Image(n, pixel_size, std::move(t));
}

Sinogram sinogram_from_file(const std::filesystem::path& path, const ScanGeometry& g) {
    Tensor t = load_tensor(path);
    if (t.rank() != 2)
        throw std::invalid_argument("sinogram file " + path.string() + " is not a 2-D tensor");
    const std::size_t nv = t.dim(0), nd = t.dim(1);
    Sinogram s(nv, nd, std::move(t));
    require_sino_matches(s, g, "sinogram file");
    return s;
}

NoiseSpec parse_noise_arg(const std::string& arg) {
    // I0[,sigma[,seed]]
    NoiseSpec ns;
    std::stringstream ss(arg);
    std::string item;
    std::vector<std::string> parts;
    while (std::getline(ss, item, ',')) parts.push_back(item);
    if (parts.empty() || parts.size() > 3) throw ConfigError("--noise expects I0[,sigma[,seed]]");
    try {
        ns.i0 = std::stod(parts[0]);
        if (parts.size() > 1) ns.sigma_e = std::stod(parts[1]);
        if (parts.size() > 2) ns.seed = std::stoull(parts[2]);
    } catch (const std::exception&) {
        throw ConfigError("--noise: cannot parse '" + arg + "'");
    }
    ns.validate();
    return ns;
}

void write_report(const std::filesystem::path& path, const Tensor& rec, const Tensor& gt) {
    const double p = psnr(rec, gt);
    const double s = ssim(rec, gt);
    const MsSsimResult ms = ms_ssim(rec, gt);
    std::ofstream os(path);
    if (!os) throw FileError("cannot open " + path.string() + " for writing");
    os << "psnr=" << (std::isinf(p) ? std::string("inf") : std::to_string(p)) << "\n";
    os << "ssim=" << std::to_string(s) << "\n";
    os << "ms_ssim=" << std::to_string(ms.value) << "\n";
    os << "ms_ssim_levels=" << ms.levels << "\n";
}

struct SweepStats {
    double mean = 0.0, stddev = 0.0;
};

SweepStats stats_of(const std::vector<double>& xs) {
    SweepStats s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    for (double x : xs) s.stddev += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(s.stddev / static_cast<double>(xs.size()));
    return s;
}

int run_phantom(const std::string& kind, std::size_t n, std::uint64_t seed, const std::string& out,
                const std::string& pgm) {
    Image img;
    if (kind == "shepp-logan")
        img = shepp_logan(n);
    else if (kind == "random")
        img = random_phantom(n, seed);
    else
        throw ConfigError("--kind must be shepp-logan or random");
    save_tensor(out, img.data);
    if (!pgm.empty()) save_pgm16(pgm, img.data);
    return kOk;
}

int run_project(const std::string& img_path, const std::string& geom_path, const std::string& noise_arg,
                const std::string& out, const std::vector<std::string>& overrides) {
    Config cfg = load_config(geom_path, overrides);
    ScanGeometry g = geometry_from_config(cfg);
    Image img = image_from_file(img_path, g.pixel_size);
    require_image_matches(img, g, "project");
    Sinogram sino;
    if (noise_arg.empty()) {
        NoiseSpec ns;
        ns.noiseless = true;
        sino = simulate_sinogram(img, g, ns);
    } else {
        sino = simulate_sinogram(img, g, parse_noise_arg(noise_arg));
    }
    save_tensor(out, sino.data);
    return kOk;
}

// Zeroes pixels outside the inscribed circle; reconstruction itself never
// masks, this is an output-side option.
void apply_fov_mask(Tensor& img) {
    const std::size_t n = img.dim(0);
    const double center = (static_cast<double>(n) - 1.0) / 2.0;
    const double r2 = center * center;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const double dr = static_cast<double>(r) - center;
            const double dc = static_cast<double>(c) - center;
            if (dr * dr + dc * dc > r2) img.at(r, c) = 0.0;
        }
}

int run_fbp(const std::string& sino_path, const std::string& geom_path, const std::string& out,
            const std::string& pgm, bool mask, const std::vector<std::string>& overrides) {
    Config cfg = load_config(geom_path, overrides);
    ScanGeometry g = geometry_from_config(cfg);
    Sinogram sino = sinogram_from_file(sino_path, g);
    Image rec = fbp(sino, g);
    if (mask) apply_fov_mask(rec.data);
    save_tensor(out, rec.data);
    if (!pgm.empty()) save_pgm16(pgm, rec.data);
    return kOk;
}

void dump_layers(const std::string& dir, const std::vector<Tensor>& layers) {
    std::filesystem::create_directories(dir);
    for (std::size_t k = 0; k < layers.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "layer_%02zu.bin", k + 1);
        save_tensor(std::filesystem::path(dir) / name, layers[k]);
    }
}

int run_reconstruct(const std::string& method, const std::string& sino_path, const std::string& geom_path,
                    const std::string& params_path, const std::string& weights_path, const std::string& out,
                    const std::string& dump_dir, const std::string& pgm, bool mask,
                    const std::vector<std::string>& overrides) {
    Config cfg = load_config(geom_path, overrides);
    if (!params_path.empty()) {
        Config params = Config::from_file(params_path);
        for (const auto& [k, v] : params.values()) cfg.set(k, v);
        cfg.apply_overrides(overrides);  // flags override file values
    }
    ScanGeometry g = geometry_from_config(cfg);
    Sinogram sino = sinogram_from_file(sino_path, g);

    if (method == "hqscg") {
        HqsParams p = hqs_from_config(cfg);
        std::vector<Tensor> iterates;
        HqsCallback cb;
        if (!dump_dir.empty()) cb = [&](std::size_t, const Tensor& u, const Tensor&) { iterates.push_back(u); };
        Image rec = hqs_cg(sino, g, p, cb);
        if (mask) apply_fov_mask(rec.data);
        save_tensor(out, rec.data);
        if (!pgm.empty()) save_pgm16(pgm, rec.data);
        if (!dump_dir.empty()) dump_layers(dump_dir, iterates);
        return kOk;
    }
    if (method != "metainv") throw ConfigError("--method must be hqscg or metainv");
    if (weights_path.empty()) throw ConfigError("--method metainv requires --weights");

    Checkpoint ckpt = load_checkpoint(weights_path);
    MetaInvConfig mc = ckpt.config;
    std::vector<Image> layers = metainv_reconstruct(sino, g, mc, ckpt.weights);
    if (mask) apply_fov_mask(layers.back().data);
    save_tensor(out, layers.back().data);
    if (!pgm.empty()) save_pgm16(pgm, layers.back().data);
    if (!dump_dir.empty()) {
        std::vector<Tensor> tensors;
        tensors.reserve(layers.size());
        for (Image& im : layers) tensors.push_back(std::move(im.data));
        dump_layers(dump_dir, tensors);
    }
    return kOk;
}

int run_train(const std::string& config_path, const std::string& out_weights, const std::string& log_path,
              const std::vector<std::string>& overrides) {
    Config cfg = load_config(config_path, overrides);
    ScanGeometry g = geometry_from_config(cfg);
    MetaInvConfig mc = metainv_config_from_config(cfg);
    TrainConfig tc = train_config_from_config(cfg);
    NoiseSpec base_noise = noise_from_config(cfg);

    const std::size_t count = cfg.get_size("data.n_phantoms", 20);
    const std::uint64_t phantom_seed = cfg.get_u64("data.seed", 1);
    if (count == 0) throw ConfigError("data.n_phantoms must be >= 1");

    std::vector<DatasetItem> data;
    data.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        NoiseSpec ns = base_noise;
        ns.seed = base_noise.seed + i;
        data.push_back({random_phantom(g.n, phantom_seed + i, g.pixel_size), g, ns});
    }

    InitializerWeights init = InitializerWeights::random(mc.hqs.K, mc.depth_s, mc.width, tc.seed, mc.shared);
    TrainResult res = train(data, mc, tc, std::move(init));

    save_checkpoint(out_weights, Checkpoint{mc, res.weights});
    if (!log_path.empty()) {
        std::ofstream os(log_path);
        if (!os) throw FileError("cannot open " + log_path + " for writing");
        os << "epoch,mean_loss\n";
        for (std::size_t e = 0; e < res.epoch_loss.size(); ++e)
            os << e + 1 << "," << std::to_string(res.epoch_loss[e]) << "\n";
    }
    return kOk;
}

int run_eval(const std::string& rec_path, const std::string& gt_path, const std::string& report_path) {
    Tensor rec = load_tensor(rec_path);
    Tensor gt = load_tensor(gt_path);
    require_same_shape(rec, gt, "eval");
    write_report(report_path, rec, gt);
    return kOk;
}

int run_sweep(const std::string& config_path, const std::string& out_csv,
              const std::vector<std::string>& overrides) {
    Config cfg = load_config(config_path, overrides);
    const std::vector<double> views = cfg.get_double_list("sweep.views", {30, 60, 120});
    const std::vector<double> noise_levels = cfg.get_double_list("sweep.i0", {0});  // <= 0 means noiseless
    const std::vector<std::string> methods = cfg.get_string_list("sweep.methods", {"fbp", "hqscg"});
    const std::size_t n_phantoms = cfg.get_size("sweep.n_phantoms", 10);
    const std::uint64_t phantom_seed = cfg.get_u64("sweep.phantom_seed", 1);
    const std::uint64_t noise_seed = cfg.get_u64("noise.seed", 100);

    std::optional<Checkpoint> ckpt;
    const std::string weights_path = cfg.get_string("sweep.weights", "");
    for (const std::string& m : methods) {
        if (m == "metainv" && weights_path.empty())
            throw ConfigError("sweep.methods includes metainv but sweep.weights is missing");
        if (m != "metainv" && m != "fbp" && m != "hqscg")
            throw ConfigError("sweep.methods entries must be fbp, hqscg or metainv");
    }
    if (!weights_path.empty()) ckpt = load_checkpoint(weights_path);

    std::ofstream os(out_csv);
    if (!os) throw FileError("cannot open " + out_csv + " for writing");
    os << "views,I0,method,psnr_mean,psnr_std,ssim_mean,ssim_std,seconds\n";

    char line[256];
    for (double views_d : views) {
        const auto n_views = static_cast<std::size_t>(views_d);
        Config gcfg = cfg;
        gcfg.set("geom.n_views", std::to_string(n_views));
        ScanGeometry g = geometry_from_config(gcfg);
        for (double i0 : noise_levels) {
            for (const std::string& method : methods) {
                std::vector<double> psnrs, ssims;
                double seconds = 0.0;
                for (std::size_t i = 0; i < n_phantoms; ++i) {
                    Image ph = random_phantom(g.n, phantom_seed + i, g.pixel_size);
                    NoiseSpec ns;
                    ns.noiseless = i0 <= 0.0;
                    ns.i0 = ns.noiseless ? 1.0 : i0;
                    ns.seed = noise_seed + i;
                    Sinogram y = simulate_sinogram(ph, g, ns);
                    const auto t0 = std::chrono::steady_clock::now();
                    Tensor rec;
                    if (method == "fbp") {
                        rec = fbp(y, g).data;
                    } else if (method == "hqscg") {
                        rec = hqs_cg(y, g, hqs_from_config(cfg)).data;
                    } else {
                        rec = metainv_reconstruct(y, g, ckpt->config, ckpt->weights).back().data;
                    }
                    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                    psnrs.push_back(psnr(rec, ph.data));
                    ssims.push_back(ssim(rec, ph.data));
                }
                const SweepStats ps = stats_of(psnrs);
                const SweepStats ss = stats_of(ssims);
                std::snprintf(line, sizeof(line), "%zu,%g,%s,%.6f,%.6f,%.6f,%.6f,%.3f\n", n_views, i0,
                              method.c_str(), ps.mean, ps.stddev, ss.mean, ss.stddev,
                              seconds / static_cast<double>(n_phantoms));
                os << line;
            }
        }
    }
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse-view CT reconstruction toolkit: projectors, FBP, HQS-CG and an unrolled "
                 "reconstructor with a learned CG warm start."};
    app.require_subcommand(1);
    app.footer("Exit codes: 0 success, 2 usage error, 3 missing file, 4 malformed config,\n"
               "5 geometry/shape mismatch, 1 other runtime failure.\n"
               "METAINV_THREADS caps intra-run parallelism (default: all cores).");

    app.fallthrough();  // --set may appear after the subcommand
    std::vector<std::string> overrides;
    app.add_option("--set", overrides, "Override config entries as key=value (repeatable)");

    // phantom
    std::string ph_kind = "shepp-logan", ph_out, ph_pgm;
    std::size_t ph_n = 64;
    std::uint64_t ph_seed = 0;
    CLI::App* ph = app.add_subcommand("phantom", "Generate a phantom image");
    ph->add_option("--kind", ph_kind, "shepp-logan or random");
    ph->add_option("--n", ph_n, "image side length")->check(CLI::PositiveNumber);
    ph->add_option("--seed", ph_seed, "seed for random phantoms");
    ph->add_option("--out", ph_out, "output tensor file")->required();
    ph->add_option("--pgm", ph_pgm, "optional 16-bit PGM preview");

    // project
    std::string pr_img, pr_geom, pr_noise, pr_out;
    CLI::App* pr = app.add_subcommand("project", "Simulate a (noisy) sinogram from an image");
    pr->add_option("--img", pr_img, "input image tensor")->required();
    pr->add_option("--geom", pr_geom, "geometry config file")->required();
    pr->add_option("--noise", pr_noise, "I0[,sigma[,seed]]; omit for a noiseless projection");
    pr->add_option("--out", pr_out, "output sinogram file")->required();

    // fbp
    std::string fb_sino, fb_geom, fb_out, fb_pgm;
    CLI::App* fb = app.add_subcommand("fbp", "Filtered backprojection reconstruction");
    fb->add_option("--sino", fb_sino, "input sinogram")->required();
    fb->add_option("--geom", fb_geom, "geometry config file")->required();
    fb->add_option("--out", fb_out, "output image file")->required();
    fb->add_option("--pgm", fb_pgm, "optional 16-bit PGM preview");
    bool fb_mask = false;
    fb->add_flag("--mask", fb_mask, "zero pixels outside the inscribed field of view");

    // reconstruct
    std::string rc_method, rc_sino, rc_geom, rc_params, rc_weights, rc_out, rc_dump, rc_pgm;
    CLI::App* rc = app.add_subcommand("reconstruct", "Iterative or unrolled reconstruction");
    rc->add_option("--method", rc_method, "hqscg or metainv")->required();
    rc->add_option("--sino", rc_sino, "input sinogram")->required();
    rc->add_option("--geom", rc_geom, "geometry config file")->required();
    rc->add_option("--params", rc_params, "solver config file");
    rc->add_option("--weights", rc_weights, "weight checkpoint (metainv)");
    rc->add_option("--out", rc_out, "output image file")->required();
    rc->add_option("--dump-layers", rc_dump, "directory for per-layer intermediate images");
    rc->add_option("--pgm", rc_pgm, "optional 16-bit PGM preview");
    bool rc_mask = false;
    rc->add_flag("--mask", rc_mask, "zero pixels outside the inscribed field of view");

    // train
    std::string tr_config, tr_weights, tr_log;
    CLI::App* tr = app.add_subcommand("train", "Train the unrolled reconstructor on generated phantoms");
    tr->add_option("--config", tr_config, "training config file")->required();
    tr->add_option("--out-weights", tr_weights, "output weight checkpoint")->required();
    tr->add_option("--log", tr_log, "per-epoch loss log (CSV)");

    // eval
    std::string ev_rec, ev_gt, ev_report;
    CLI::App* ev = app.add_subcommand("eval", "Image quality metrics against a ground truth");
    ev->add_option("--rec", ev_rec, "reconstruction tensor")->required();
    ev->add_option("--gt", ev_gt, "ground-truth tensor")->required();
    ev->add_option("--report", ev_report, "output key=value report")->required();

    // sweep
    std::string sw_config, sw_out;
    CLI::App* sw = app.add_subcommand("sweep", "Views x noise evaluation grid, CSV output");
    sw->add_option("--config", sw_config, "sweep config file")->required();
    sw->add_option("--out", sw_out, "output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsageError;
    }

    try {
        if (ph->parsed()) return run_phantom(ph_kind, ph_n, ph_seed, ph_out, ph_pgm);
        if (pr->parsed()) return run_project(pr_img, pr_geom, pr_noise, pr_out, overrides);
        if (fb->parsed()) return run_fbp(fb_sino, fb_geom, fb_out, fb_pgm, fb_mask, overrides);
        if (rc->parsed())
            return run_reconstruct(rc_method, rc_sino, rc_geom, rc_params, rc_weights, rc_out, rc_dump, rc_pgm,
                                   rc_mask, overrides);
        if (tr->parsed()) return run_train(tr_config, tr_weights, tr_log, overrides);
        if (ev->parsed()) return run_eval(ev_rec, ev_gt, ev_report);
        if (sw->parsed()) return run_sweep(sw_config, sw_out, overrides);
    } catch (const FileError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kMissingFile;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBadConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kShapeMismatch;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kOtherError;
    }
    return kUsageError;
}
