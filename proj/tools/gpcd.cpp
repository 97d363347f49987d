#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gpcd/bvh.hpp"
#include "gpcd/config.hpp"
#include "gpcd/denoiser.hpp"
#include "gpcd/metrics.hpp"
#include "gpcd/noise.hpp"
#include "gpcd/training.hpp"

namespace fs = std::filesystem;
using namespace gpcd;

namespace {

// exit codes: 0 success, 1 numeric failure, 2 usage/config/data error
constexpr int kOk = 0;
constexpr int kNumeric = 1;
constexpr int kUsage = 2;

std::string lower_extension(const std::string& path) {
    std::string ext = fs::path(path).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

// The output format mirrors the input format; a mismatched extension would
// silently write the wrong one.
void require_same_format(const std::string& in, const std::string& out) {
    if (lower_extension(in) != lower_extension(out))
        throw std::invalid_argument("output format must mirror the input format (" +
                                    lower_extension(in) + " -> " + lower_extension(out) + ")");
}

ExperimentConfig config_or_defaults(const std::string& path) {
    if (path.empty()) {
        ExperimentConfig cfg;
        cfg.validate();
        return cfg;
    }
    return load_config(path);
}

std::string manifest_path_of(const std::string& data) {
    if (fs::is_directory(data)) return (fs::path(data) / "manifest.txt").string();
    return data;
}

struct MakeDatasetArgs {
    std::string meshes, out;
    std::vector<int> counts;
    uint64_t seed = 0;
};

int run_make_dataset(const MakeDatasetArgs& args) {
    if (!fs::is_directory(args.meshes)) {
        std::fprintf(stderr, "gpcd: mesh directory not found: %s\n", args.meshes.c_str());
        return kUsage;
    }
    std::vector<std::string> candidates;
    for (const auto& entry : fs::directory_iterator(args.meshes)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = lower_extension(entry.path().string());
        if (ext == ".obj" || ext == ".ply") candidates.push_back(entry.path().string());
    }
    std::sort(candidates.begin(), candidates.end());
    if (candidates.empty()) {
        std::fprintf(stderr, "gpcd: no .obj or .ply meshes in %s\n", args.meshes.c_str());
        return kUsage;
    }

    std::vector<std::string> usable;
    for (const auto& path : candidates) {
        try {
            check_mesh(load_mesh(path));
            usable.push_back(path);
        } catch (const std::exception& e) {
            std::fprintf(stderr, "gpcd: skipping %s: %s\n", path.c_str(), e.what());
        }
    }
    if (usable.empty()) {
        std::fprintf(stderr, "gpcd: every mesh failed to load\n");
        return kUsage;
    }

    const auto entries = build_dataset(usable, args.counts, args.seed, args.out);
    std::printf("wrote %zu clouds and manifest.txt to %s\n", entries.size(),
                args.out.c_str());
    return kOk;
}

struct AddNoiseArgs {
    std::string in, out, kind = "isotropic_gaussian";
    double scale = 0.01;
    uint64_t seed = 0;
};

int run_add_noise(const AddNoiseArgs& args) {
    NoiseSpec spec;
    spec.kind = parse_noise_kind(args.kind);
    spec.scale = args.scale;
    spec.seed = args.seed;
    require_same_format(args.in, args.out);
    const PointCloud noisy = apply_noise(load_points(args.in), spec);
    save_points(noisy, args.out);
    std::printf("wrote %d noisy points to %s\n", noisy.n(), args.out.c_str());
    return kOk;
}

struct TrainArgs {
    std::string stage, config, data, out, backbone, log;
    bool resume = false;
};

int run_train(const TrainArgs& args) {
    ExperimentConfig cfg = config_or_defaults(args.config);
    const Dataset dataset = load_dataset(manifest_path_of(args.data));
    const std::string log_path = args.log.empty() ? args.out + ".csv" : args.log;

    // a checkpoint records the Adam step count; completed epochs follow from
    // the configured steps per epoch
    auto resume_epoch = [&](int64_t steps_done) {
        return static_cast<int>(steps_done / cfg.train.steps_per_epoch) + 1;
    };

    TrainResult res;
    if (args.stage == "backbone") {
        DenoiserModel model =
            DenoiserModel::create(cfg.train.seed, cfg.k_feat, cfg.k_uninet, cfg.l_uninet);
        if (args.resume && fs::exists(args.out)) {
            model = load_model(args.out);
            if (load_optimizer(args.out, model)) {
                const int at = resume_epoch(model.backbone().step_count());
                if (at > cfg.train.epochs) {
                    std::printf("checkpoint already has %d epochs; nothing to do\n",
                                cfg.train.epochs);
                    return kOk;
                }
                cfg.train.start_epoch = at;
                std::printf("resuming backbone training at epoch %d\n", at);
            }
        }
        res = pretrain_backbone(dataset, cfg.train, model, args.out, log_path);
    } else {
        if (args.backbone.empty()) {
            std::fprintf(stderr, "gpcd: --stage uninet requires --backbone CKPT\n");
            return kUsage;
        }
        std::string input = args.backbone;
        if (args.resume && fs::exists(args.out)) {
            input = args.out;
            DenoiserModel probe = load_model(args.out);
            if (load_optimizer(args.out, probe)) {
                const int at = resume_epoch(probe.uninet().step_count());
                if (at > cfg.train.epochs) {
                    std::printf("checkpoint already has %d epochs; nothing to do\n",
                                cfg.train.epochs);
                    return kOk;
                }
                cfg.train.start_epoch = at;
                std::printf("resuming uninet training at epoch %d\n", at);
            }
        }
        res = train_uninet(dataset, input, cfg.train, cfg.schedule, args.out, log_path);
        std::printf("identity-refinement val emd %.8g\n", res.identity_val_emd);
    }

    if (res.aborted) {
        std::fprintf(stderr, "gpcd: training diverged; checkpoint holds the last good state\n");
        return kNumeric;
    }
    std::printf("best epoch %d with validation %s %.8g; log at %s\n", res.best_epoch,
                args.stage == "backbone" ? "cd" : "emd", res.best_val, log_path.c_str());
    return kOk;
}

struct DenoiseArgs {
    std::string in, ckpt, config, out;
    int t_act = -1;
    bool t_act_set = false;
};

int run_denoise(const DenoiseArgs& args) {
    const ExperimentConfig cfg = config_or_defaults(args.config);
    DenoiseSchedule schedule = cfg.schedule;
    if (args.t_act_set) schedule.t_act = args.t_act;
    schedule.validate();
    require_same_format(args.in, args.out);

    const DenoiserModel model = load_model(args.ckpt);
    const PointCloud noisy = load_points(args.in);
    const PointCloud denoised =
        denoise_cloud(noisy, model, schedule, cfg.denoise_patch_size, cfg.denoise_coverage);
    save_points(denoised, args.out);
    std::printf("denoised %d points to %s\n", denoised.n(), args.out.c_str());
    return kOk;
}

struct EvaluateArgs {
    std::string denoised, clean, mesh, report;
};

int run_evaluate(const EvaluateArgs& args) {
    const PointCloud denoised = load_points(args.denoised);
    const PointCloud clean = load_points(args.clean);

    const double cd = chamfer(denoised, clean);
    const double uni = uniformity(denoised, clean);
    // exact assignment is cubic; past a few thousand points the column is not
    // worth the wait
    constexpr int kEmdCap = 2048;
    const bool counts_match = denoised.n() == clean.n();
    const bool with_emd = counts_match && denoised.n() <= kEmdCap;
    if (!counts_match)
        std::fprintf(stderr,
                     "gpcd: EMD column omitted: point counts differ (%d vs %d)\n",
                     denoised.n(), clean.n());
    else if (!with_emd)
        std::fprintf(stderr, "gpcd: EMD column omitted: clouds exceed %d points\n", kEmdCap);
    const double emd_value = with_emd ? emd(denoised, clean).value : 0.0;
    const bool with_mesh = !args.mesh.empty();
    const double p2m = with_mesh ? point_to_mesh(denoised, load_mesh(args.mesh)) : 0.0;
    const MetricReport report = make_report(cd, p2m, emd_value, uni);

    std::string header = "file\tcd_x1e4";
    if (with_mesh) header += "\tp2m_x1e4";
    header += "\tuni_x1e3";
    if (with_emd) header += "\temd_x1e4";
    std::string row = fs::path(args.denoised).filename().string();
    char buf[64];
    std::snprintf(buf, sizeof(buf), "\t%.6g", report.scaled_cd);
    row += buf;
    if (with_mesh) {
        std::snprintf(buf, sizeof(buf), "\t%.6g", report.scaled_p2m);
        row += buf;
    }
    std::snprintf(buf, sizeof(buf), "\t%.6g", report.scaled_uniformity);
    row += buf;
    if (with_emd) {
        std::snprintf(buf, sizeof(buf), "\t%.6g", report.emd * 1e4);
        row += buf;
    }

    std::ofstream out(args.report);
    if (!out) throw io_error("cannot write report: " + args.report);
    out << header << '\n' << row << '\n';
    if (!out) throw io_error("report write failed: " + args.report);
    std::printf("%s\n%s\n", header.c_str(), row.c_str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gpcd: gradient-field point cloud denoising with uniformity refinement"};
    app.require_subcommand(1);
    app.footer(config_help());

    MakeDatasetArgs md;
    auto* make_dataset = app.add_subcommand(
        "make-dataset", "Poisson-disk sample meshes into normalized clouds plus a manifest");
    make_dataset->add_option("--meshes", md.meshes, "directory of .obj/.ply meshes")
        ->required();
    make_dataset->add_option("--counts", md.counts, "points per cloud (comma separated)")
        ->required()
        ->delimiter(',');
    make_dataset->add_option("--out", md.out, "output directory")->required();
    make_dataset->add_option("--seed", md.seed, "sampling seed")->required();

    AddNoiseArgs an;
    auto* add_noise = app.add_subcommand("add-noise", "corrupt a cloud with a noise model");
    add_noise->add_option("--in", an.in, "input cloud (.xyz/.ply)")->required();
    add_noise->add_option("--kind", an.kind,
                          "isotropic_gaussian, laplace, discrete, anisotropic_gaussian, "
                          "unidirectional_gaussian or uniform_ball");
    add_noise->add_option("--scale", an.scale, "noise scale (fraction of bounding radius)");
    add_noise->add_option("--seed", an.seed, "noise seed")->required();
    add_noise->add_option("--out", an.out, "output cloud, same format as input")->required();

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "run one training stage");
    train->add_option("--stage", tr.stage, "backbone or uninet")
        ->required()
        ->check(CLI::IsMember({"backbone", "uninet"}));
    train->add_option("--config", tr.config, "key=value experiment config");
    train->add_option("--data", tr.data, "dataset directory or manifest file")->required();
    train->add_option("--out", tr.out, "checkpoint to write")->required();
    train->add_option("--backbone", tr.backbone, "stage-1 checkpoint (uninet stage)");
    train->add_option("--log", tr.log, "CSV log path (default: <out>.csv)");
    train->add_flag("--resume", tr.resume, "continue from an existing --out checkpoint");

    DenoiseArgs dn;
    auto* denoise = app.add_subcommand("denoise", "denoise a cloud with a trained model");
    denoise->add_option("--in", dn.in, "noisy cloud (.xyz/.ply)")->required();
    denoise->add_option("--ckpt", dn.ckpt, "model checkpoint")->required();
    denoise->add_option("--config", dn.config, "key=value experiment config");
    denoise->add_option("--out", dn.out, "output cloud, same format as input")->required();
    auto* t_act_opt =
        denoise->add_option("--t-act", dn.t_act, "override denoise.t_act (T disables UniNet)");

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "metric report for a denoised cloud");
    evaluate->add_option("--denoised", ev.denoised, "denoised cloud")->required();
    evaluate->add_option("--clean", ev.clean, "ground-truth cloud")->required();
    evaluate->add_option("--mesh", ev.mesh, "ground-truth mesh for point-to-mesh distance");
    evaluate->add_option("--report", ev.report, "TSV report path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*make_dataset) return run_make_dataset(md);
        if (*add_noise) return run_add_noise(an);
        if (*train) return run_train(tr);
        if (*denoise) {
            dn.t_act_set = t_act_opt->count() > 0;
            return run_denoise(dn);
        }
        if (*evaluate) return run_evaluate(ev);
    } catch (const numeric_failure& e) {
        std::fprintf(stderr, "gpcd: numeric failure: %s\n", e.what());
        return kNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "gpcd: %s\n", e.what());
        return kUsage;
    }
    return kUsage;
}
