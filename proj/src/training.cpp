#include "gpcd/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "gpcd/geometry.hpp"
#include "gpcd/kdtree.hpp"
#include "gpcd/mesh.hpp"
#include "gpcd/metrics.hpp"

namespace gpcd {

void TrainingConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("training: epochs must be >= 1");
    if (!(lr0 > 0.0)) throw std::invalid_argument("training: lr0 must be positive");
    if (!(lr_decay > 0.0) || lr_decay > 1.0)
        throw std::invalid_argument("training: lr decay must be in (0, 1]");
    if (!std::is_sorted(lr_milestones.begin(), lr_milestones.end()))
        throw std::invalid_argument("training: lr milestones must be sorted");
    if (batch < 1) throw std::invalid_argument("training: batch must be >= 1");
    if (steps_per_epoch < 1)
        throw std::invalid_argument("training: steps_per_epoch must be >= 1");
    if (patch_size < 2) throw std::invalid_argument("training: patch size must be >= 2");
    if (noise_min < 0.0 || noise_max < noise_min)
        throw std::invalid_argument("training: noise std range invalid");
    if (!(scale_min > 0.0) || scale_max < scale_min)
        throw std::invalid_argument("training: augmentation scale range invalid");
    if (k_target < 1 || k_target > patch_size)
        throw std::invalid_argument("training: k_target must be in [1, patch_size]");
    if (pool < 1) throw std::invalid_argument("training: rollout pool must be >= 1");
    if (val_pairs < 1) throw std::invalid_argument("training: val_pairs must be >= 1");
    if (start_epoch < 1 || start_epoch > epochs)
        throw std::invalid_argument("training: start_epoch must be in [1, epochs]");
}

double learning_rate(const TrainingConfig& cfg, int epoch) {
    double lr = cfg.lr0;
    for (int m : cfg.lr_milestones)
        if (epoch > m) lr *= cfg.lr_decay;
    return lr;
}

std::string manifest_line(const DatasetEntry& entry) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%s\t%d\t%s\t%.17g %.17g %.17g\t%.17g",
                  entry.mesh_id.c_str(), entry.count, entry.path.c_str(), entry.center.x,
                  entry.center.y, entry.center.z, entry.scale);
    return buf;
}

DatasetEntry parse_manifest_line(const std::string& line, int lineno) {
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
        const size_t tab = line.find('\t', start);
        fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    if (fields.size() != 5)
        throw io_error("manifest line " + std::to_string(lineno) + ": expected 5 fields");
    DatasetEntry entry;
    entry.mesh_id = fields[0];
    entry.path = fields[2];
    std::istringstream count_in(fields[1]), center_in(fields[3]), scale_in(fields[4]);
    if (!(count_in >> entry.count) || entry.count < 1 || entry.mesh_id.empty() ||
        entry.path.empty() ||
        !(center_in >> entry.center.x >> entry.center.y >> entry.center.z) ||
        !(scale_in >> entry.scale) || !(entry.scale > 0.0))
        throw io_error("manifest line " + std::to_string(lineno) + ": malformed fields");
    return entry;
}

void save_manifest(const std::string& path, const std::vector<DatasetEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write manifest: " + path);
    for (const auto& entry : entries) out << manifest_line(entry) << '\n';
    if (!out) throw io_error("manifest write failed: " + path);
}

std::vector<DatasetEntry> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open manifest: " + path);
    std::vector<DatasetEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        entries.push_back(parse_manifest_line(line, lineno));
    }
    return entries;
}

Dataset load_dataset(const std::string& manifest_path) {
    Dataset dataset;
    dataset.entries = load_manifest(manifest_path);
    const auto base = std::filesystem::path(manifest_path).parent_path();
    for (const auto& entry : dataset.entries) {
        std::filesystem::path p(entry.path);
        if (p.is_relative()) p = base / p;
        dataset.clouds.push_back(load_points(p.string()));
        check_cloud(dataset.clouds.back());
    }
    return dataset;
}

std::vector<DatasetEntry> build_dataset(const std::vector<std::string>& mesh_paths,
                                        const std::vector<int>& counts, uint64_t seed,
                                        const std::string& out_dir) {
    if (mesh_paths.empty()) throw std::invalid_argument("build_dataset: no meshes");
    if (counts.empty()) throw std::invalid_argument("build_dataset: no counts");
    std::filesystem::create_directories(out_dir);

    std::vector<DatasetEntry> entries;
    uint64_t entry_index = 0;
    for (const auto& mesh_path : mesh_paths) {
        const Mesh mesh = load_mesh(mesh_path);
        const std::string stem = std::filesystem::path(mesh_path).stem().string();
        for (int count : counts) {
            SampledCloud sampled = poisson_disk_sample(mesh, count, mix_seed(seed, entry_index));
            ++entry_index;
            NormalizedCloud normalized = normalize_unit_sphere(sampled.cloud);
            DatasetEntry entry;
            entry.mesh_id = stem;
            entry.count = count;
            entry.path = stem + "_" + std::to_string(count) + ".xyz";
            entry.center = normalized.center;
            entry.scale = normalized.scale;
            save_points(normalized.cloud,
                        (std::filesystem::path(out_dir) / entry.path).string());
            entries.push_back(std::move(entry));
        }
    }
    save_manifest((std::filesystem::path(out_dir) / "manifest.txt").string(), entries);
    return entries;
}

std::vector<Vec3> augment_patch(const std::vector<Vec3>& points, const Vec3& axis,
                                double angle, double scale_factor) {
    if (points.empty()) throw std::invalid_argument("augment: empty patch");
    if (!(scale_factor > 0.0)) throw std::invalid_argument("augment: scale must be positive");
    const double axis_norm = norm(axis);
    if (!(axis_norm > 0.0)) throw std::invalid_argument("augment: zero rotation axis");
    const Vec3 unit = axis * (1.0 / axis_norm);

    Vec3 c;
    for (const Vec3& p : points) c = c + p;
    c = c * (1.0 / static_cast<double>(points.size()));

    std::vector<Vec3> out(points.size());
    for (size_t i = 0; i < points.size(); ++i)
        out[i] = c + rotate_axis_angle(points[i] - c, unit, angle) * scale_factor;
    return out;
}

TrainingPair sample_training_pair(const PointCloud& clean, const TrainingConfig& cfg,
                                  Rng& rng) {
    if (clean.n() < cfg.patch_size)
        throw std::invalid_argument("sample_training_pair: cloud smaller than patch size");
    const int n = cfg.patch_size;

    const int seed_index = static_cast<int>(rng.uniform_index(clean.n()));
    KdTree tree(clean.points);
    std::vector<int> idx;
    std::vector<double> dist;
    tree.knn(clean.points[seed_index], n, -1, idx, dist);
    std::vector<Vec3> region(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) region[i] = clean.points[idx[i]];

    const Vec3 axis = rng.direction();
    const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double scale_factor = rng.uniform(cfg.scale_min, cfg.scale_max);
    TrainingPair pair;
    pair.clean = augment_patch(region, axis, angle, scale_factor);

    pair.sigma = rng.uniform(cfg.noise_min, cfg.noise_max);
    pair.noisy.resize(pair.clean.size());
    for (size_t i = 0; i < pair.clean.size(); ++i)
        pair.noisy[i] = pair.clean[i] + rng.normal3() * pair.sigma;

    // normalize on the noisy centroid/extent, exactly as inference patches
    Vec3 c;
    for (const Vec3& p : pair.noisy) c = c + p;
    c = c * (1.0 / static_cast<double>(n));
    double extent = 0.0;
    for (const Vec3& p : pair.noisy) extent = std::max(extent, norm(p - c));
    if (!(extent > 0.0)) extent = 1.0;
    const double inv = 1.0 / extent;
    for (size_t i = 0; i < pair.noisy.size(); ++i) {
        pair.noisy[i] = (pair.noisy[i] - c) * inv;
        pair.clean[i] = (pair.clean[i] - c) * inv;
    }

    KdTree clean_tree(pair.clean);
    pair.targets.resize(pair.noisy.size());
    for (size_t i = 0; i < pair.noisy.size(); ++i) {
        clean_tree.knn(pair.noisy[i], cfg.k_target, -1, idx, dist);
        Vec3 mean;
        for (int j : idx) mean = mean + pair.clean[j];
        pair.targets[i] = mean * (1.0 / cfg.k_target) - pair.noisy[i];
    }
    return pair;
}

namespace {

Tensor targets_tensor(const std::vector<Vec3>& targets) {
    std::vector<float> values(targets.size() * 3);
    for (size_t i = 0; i < targets.size(); ++i) {
        values[i * 3] = static_cast<float>(targets[i].x);
        values[i * 3 + 1] = static_cast<float>(targets[i].y);
        values[i * 3 + 2] = static_cast<float>(targets[i].z);
    }
    return Tensor::leaf({static_cast<int>(targets.size()), 3}, std::move(values));
}

bool params_finite(const ParamStore& store) {
    for (const auto& [name, t] : store.params())
        for (float v : t.values())
            if (!std::isfinite(v)) return false;
    return true;
}

PointCloud displaced_cloud(const std::vector<Vec3>& base, const Tensor& delta) {
    PointCloud out;
    out.points = base;
    for (size_t i = 0; i < out.points.size(); ++i) {
        out.points[i].x += static_cast<double>(delta.values()[i * 3]);
        out.points[i].y += static_cast<double>(delta.values()[i * 3 + 1]);
        out.points[i].z += static_cast<double>(delta.values()[i * 3 + 2]);
    }
    return out;
}

struct SplitDataset {
    std::vector<const PointCloud*> train, val;
};

SplitDataset split_dataset(const Dataset& dataset) {
    if (dataset.clouds.size() < 3)
        throw std::invalid_argument(
            "training: need at least 3 dataset entries (last 2 are held out for validation)");
    SplitDataset split;
    for (size_t i = 0; i + 2 < dataset.clouds.size(); ++i)
        split.train.push_back(&dataset.clouds[i]);
    split.val.push_back(&dataset.clouds[dataset.clouds.size() - 2]);
    split.val.push_back(&dataset.clouds[dataset.clouds.size() - 1]);
    return split;
}

std::vector<TrainingPair> make_val_pairs(const std::vector<const PointCloud*>& val_clouds,
                                         const TrainingConfig& cfg, Rng& rng) {
    std::vector<TrainingPair> pairs;
    for (int i = 0; i < cfg.val_pairs; ++i)
        pairs.push_back(
            sample_training_pair(*val_clouds[i % val_clouds.size()], cfg, rng));
    return pairs;
}

class CsvLog {
public:
    explicit CsvLog(const std::string& path) {
        if (path.empty()) return;
        out_.open(path);
        if (!out_) throw io_error("cannot write training log: " + path);
        out_ << "epoch,lr,train_loss,val_cd,val_emd\n";
    }
    void row(const EpochLog& e) {
        if (!out_.is_open()) return;
        char buf[200];
        std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g", e.epoch, e.lr,
                      e.train_loss, e.val_cd, e.val_emd);
        out_ << buf << '\n';
        out_.flush();
    }

private:
    std::ofstream out_;
};

// Validation probe for the backbone: one s=1 gradient step, then CD and EMD
// against the clean patch.
std::pair<double, double> backbone_validation(const DenoiserModel& model,
                                              const std::vector<TrainingPair>& pairs) {
    NoGradGuard ng;
    double cd_sum = 0.0, emd_sum = 0.0;
    for (const auto& pair : pairs) {
        auto features = model.extract_features(pair.noisy);
        auto gradient = model.estimate_gradient(pair.noisy, pair.noisy, features);
        PointCloud probe = displaced_cloud(pair.noisy, gradient);
        PointCloud clean;
        clean.points = pair.clean;
        cd_sum += chamfer(probe, clean);
        emd_sum += emd(probe, clean).value;
    }
    return {cd_sum / pairs.size(), emd_sum / pairs.size()};
}

// Pure gradient-ascent rollout (Eq. 2 only), the frozen-backbone input
// distribution for UniNet training.
std::vector<Vec3> backbone_rollout(const DenoiserModel& model, const std::vector<Vec3>& noisy,
                                   const DenoiseSchedule& schedule, int steps) {
    NoGradGuard ng;
    auto features = model.extract_features(noisy);
    std::vector<Vec3> state = noisy;
    for (int t = 0; t < steps; ++t) {
        auto gradient = model.estimate_gradient(state, noisy, features);
        if (!accumulate_displacement(state, gradient, schedule.step(t)))
            throw numeric_failure("rollout: NaN at iteration " + std::to_string(t));
    }
    return state;
}

}  // namespace

TrainResult pretrain_backbone(const Dataset& dataset, const TrainingConfig& cfg,
                              DenoiserModel& model, const std::string& ckpt_path,
                              const std::string& log_path) {
    cfg.validate();
    if (cfg.patch_size < model.k_feat() + 1)
        throw std::invalid_argument("training: patch size must exceed k_feat");
    const SplitDataset split = split_dataset(dataset);

    // the validation stream ignores start_epoch so resumed runs score
    // against the same pairs; the training stream reseeds per resume point
    Rng train_rng(mix_seed(mix_seed(cfg.seed, 1), static_cast<uint64_t>(cfg.start_epoch)));
    Rng val_rng(mix_seed(cfg.seed, 2));
    const auto val_pairs = make_val_pairs(split.val, cfg, val_rng);

    CsvLog csv(log_path);
    TrainResult res;
    res.best_val = std::numeric_limits<double>::infinity();
    Checkpoint best_snapshot;

    for (int epoch = cfg.start_epoch; epoch <= cfg.epochs && !res.aborted; ++epoch) {
        const double lr = learning_rate(cfg, epoch);
        double epoch_loss = 0.0;
        for (int step = 0; step < cfg.steps_per_epoch; ++step) {
            model.backbone().zero_grad();
            double batch_loss = 0.0;
            for (int b = 0; b < cfg.batch; ++b) {
                const PointCloud& cloud =
                    *split.train[train_rng.uniform_index(split.train.size())];
                TrainingPair pair = sample_training_pair(cloud, cfg, train_rng);
                auto features = model.extract_features(pair.noisy);
                auto gradient = model.estimate_gradient(pair.noisy, pair.noisy, features);
                auto loss = scale(sum_of_squares(sub(gradient, targets_tensor(pair.targets))),
                                  1.0f / static_cast<float>(cfg.patch_size * cfg.batch));
                backward(loss);
                batch_loss += static_cast<double>(loss.values()[0]);
            }
            if (!std::isfinite(batch_loss)) {
                res.aborted = true;
                break;
            }
            model.backbone().adam_step(lr);
            if (!params_finite(model.backbone())) {
                res.aborted = true;
                break;
            }
            epoch_loss += batch_loss;
        }
        if (res.aborted) break;

        const auto [val_cd, val_emd] = backbone_validation(model, val_pairs);
        EpochLog entry{epoch, lr, epoch_loss / cfg.steps_per_epoch, val_cd, val_emd};
        res.log.push_back(entry);
        csv.row(entry);
        if (val_cd < res.best_val) {
            res.best_val = val_cd;
            res.best_epoch = epoch;
            best_snapshot = snapshot_params(model.backbone());
            if (!ckpt_path.empty()) save_model(ckpt_path, model);
        }
    }

    if (res.aborted && !best_snapshot.empty())
        restore_params(model.backbone(), best_snapshot);
    return res;
}

TrainResult train_uninet(const Dataset& dataset, const std::string& backbone_ckpt,
                         const TrainingConfig& cfg, const DenoiseSchedule& schedule,
                         const std::string& ckpt_path, const std::string& log_path) {
    cfg.validate();
    schedule.validate();
    if (backbone_ckpt.empty())
        throw invalid_state("train_uninet: a pretrained backbone checkpoint is required");
    DenoiserModel model = load_model(backbone_ckpt);
    // a stage-2 checkpoint as input resumes: its UniNet Adam state carries on
    load_optimizer(backbone_ckpt, model);
    model.backbone().reset_optimizer();
    if (cfg.patch_size < model.k_feat() + 1 || cfg.patch_size < model.k_uninet() + 1)
        throw std::invalid_argument("training: patch size must exceed k_feat and k_uninet");
    const SplitDataset split = split_dataset(dataset);
    const Checkpoint backbone_before = snapshot_params(model.backbone());

    struct Rollout {
        std::vector<Vec3> xprime;
        PointCloud clean;
    };
    auto make_rollout = [&](const PointCloud& cloud, Rng& rng) {
        TrainingPair pair = sample_training_pair(cloud, cfg, rng);
        const int steps =
            schedule.t_act + static_cast<int>(rng.uniform_index(
                                 static_cast<size_t>(schedule.T - schedule.t_act) + 1));
        Rollout r;
        r.xprime = backbone_rollout(model, pair.noisy, schedule, steps);
        r.clean.points = std::move(pair.clean);
        return r;
    };

    Rng train_rng(mix_seed(mix_seed(cfg.seed, 3), static_cast<uint64_t>(cfg.start_epoch)));
    Rng val_rng(mix_seed(cfg.seed, 4));
    std::vector<Rollout> pool;
    for (int i = 0; i < cfg.pool; ++i)
        pool.push_back(
            make_rollout(*split.train[train_rng.uniform_index(split.train.size())], train_rng));
    std::vector<Rollout> val;
    for (int i = 0; i < cfg.val_pairs; ++i)
        val.push_back(make_rollout(*split.val[i % split.val.size()], val_rng));

    TrainResult res;
    res.best_val = std::numeric_limits<double>::infinity();
    for (const auto& r : val) {
        PointCloud rolled;
        rolled.points = r.xprime;
        res.identity_val_emd += emd(rolled, r.clean).value;
    }
    res.identity_val_emd /= val.size();

    CsvLog csv(log_path);
    Checkpoint best_snapshot;

    for (int epoch = cfg.start_epoch; epoch <= cfg.epochs && !res.aborted; ++epoch) {
        const double lr = learning_rate(cfg, epoch);
        double epoch_loss = 0.0;
        for (int step = 0; step < cfg.steps_per_epoch; ++step) {
            model.uninet().zero_grad();
            double batch_loss = 0.0;
            for (int b = 0; b < cfg.batch; ++b) {
                const Rollout& r = pool[train_rng.uniform_index(pool.size())];
                auto displacement = model.uninet_refine(r.xprime);
                PointCloud refined = displaced_cloud(r.xprime, displacement);
                const EmdResult match = emd(refined, r.clean);
                const auto grad = emd_gradient(refined, r.clean, match);
                std::vector<float> seed(grad.size() * 3);
                const float batch_inv = 1.0f / static_cast<float>(cfg.batch);
                for (size_t i = 0; i < grad.size(); ++i) {
                    seed[i * 3] = static_cast<float>(grad[i].x) * batch_inv;
                    seed[i * 3 + 1] = static_cast<float>(grad[i].y) * batch_inv;
                    seed[i * 3 + 2] = static_cast<float>(grad[i].z) * batch_inv;
                }
                backward_from(displacement, seed);
                batch_loss += match.value / cfg.batch;
            }
            if (!std::isfinite(batch_loss)) {
                res.aborted = true;
                break;
            }
            model.uninet().adam_step(lr);
            if (!params_finite(model.uninet())) {
                res.aborted = true;
                break;
            }
            epoch_loss += batch_loss;
        }
        if (res.aborted) break;

        double val_cd = 0.0, val_emd = 0.0, val_disp = 0.0;
        {
            NoGradGuard ng;
            for (const auto& r : val) {
                auto displacement = model.uninet_refine(r.xprime);
                PointCloud refined = displaced_cloud(r.xprime, displacement);
                val_emd += emd(refined, r.clean).value;
                val_cd += chamfer(refined, r.clean);
                double mag = 0.0;
                for (size_t i = 0; i < r.xprime.size(); ++i) {
                    const Vec3 u{static_cast<double>(displacement.values()[i * 3]),
                                 static_cast<double>(displacement.values()[i * 3 + 1]),
                                 static_cast<double>(displacement.values()[i * 3 + 2])};
                    mag += norm(u);
                }
                val_disp += mag / r.xprime.size();
            }
            val_cd /= val.size();
            val_emd /= val.size();
            val_disp /= val.size();
        }
        res.val_displacement.push_back(val_disp);
        EpochLog entry{epoch, lr, epoch_loss / cfg.steps_per_epoch, val_cd, val_emd};
        res.log.push_back(entry);
        csv.row(entry);
        if (val_emd < res.best_val) {
            res.best_val = val_emd;
            res.best_epoch = epoch;
            best_snapshot = snapshot_params(model.uninet());
            if (!ckpt_path.empty()) save_model(ckpt_path, model);
        }
    }

    if (res.aborted && !best_snapshot.empty())
        restore_params(model.uninet(), best_snapshot);

    // freeze contract: stage 2 must not have touched the backbone
    const Checkpoint backbone_after = snapshot_params(model.backbone());
    for (const auto& [name, tensor] : backbone_before)
        if (backbone_after.at(name).values != tensor.values)
            throw invalid_state("train_uninet: backbone changed despite freeze");
    return res;
}

}  // namespace gpcd
