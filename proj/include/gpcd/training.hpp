#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpcd/denoiser.hpp"
#include "gpcd/point_cloud.hpp"
#include "gpcd/rng.hpp"

namespace gpcd {

struct TrainingConfig {
    int epochs = 100;
    double lr0 = 2e-4;
    std::vector<int> lr_milestones{30, 60, 90};
    double lr_decay = 0.8;
    int batch = 8;            // patches per optimizer step
    int steps_per_epoch = 50;
    int patch_size = 1000;
    double noise_min = 0.005;  // Gaussian std range, unit-sphere cloud units
    double noise_max = 0.02;
    double scale_min = 0.8;  // augmentation
    double scale_max = 1.2;
    int k_target = 4;    // clean neighbors averaged into the score target
    int pool = 256;      // precomputed rollout pairs for the UniNet stage
    int val_pairs = 8;
    int start_epoch = 1;  // > 1 when resuming from a checkpoint
    uint64_t seed = 0;

    void validate() const;
};

// lr for a 1-based epoch: decayed once per milestone already completed, so
// epoch 91 runs at lr0 * decay^3 with the default milestones.
double learning_rate(const TrainingConfig& cfg, int epoch);

// One synthesized dataset entry: a Poisson-disk cloud normalized to the unit
// sphere, plus the transform that undoes the normalization.
struct DatasetEntry {
    std::string mesh_id;
    int count = 0;
    std::string path;
    Vec3 center;
    double scale = 1.0;
};

struct Dataset {
    std::vector<DatasetEntry> entries;
    std::vector<PointCloud> clouds;  // parallel to entries
};

std::string manifest_line(const DatasetEntry& entry);
DatasetEntry parse_manifest_line(const std::string& line, int lineno);
void save_manifest(const std::string& path, const std::vector<DatasetEntry>& entries);
std::vector<DatasetEntry> load_manifest(const std::string& path);

// Loads every cloud named by the manifest; relative paths resolve against
// the manifest's directory.
Dataset load_dataset(const std::string& manifest_path);

// Samples each mesh at each count with Poisson-disk sampling, normalizes to
// the unit sphere, writes <stem>_<count>.xyz files plus manifest.txt into
// out_dir, and returns the entries. Per-entry seeds derive from (seed,
// entry index), so adding meshes does not reshuffle earlier clouds.
std::vector<DatasetEntry> build_dataset(const std::vector<std::string>& mesh_paths,
                                        const std::vector<int>& counts, uint64_t seed,
                                        const std::string& out_dir);

// A supervised patch pair in the normalized frame the network sees: the
// noisy patch is centered on its centroid and scaled to max norm 1, the
// clean patch shares that transform, and targets point from each noisy
// point toward the mean of its k_target nearest clean points.
struct TrainingPair {
    std::vector<Vec3> noisy;
    std::vector<Vec3> clean;
    std::vector<Vec3> targets;
    double sigma = 0.0;  // cloud-unit noise std used
};

// Augmentation applied to a clean patch about its centroid, exposed so the
// identity case is testable.
std::vector<Vec3> augment_patch(const std::vector<Vec3>& points, const Vec3& axis,
                                double angle, double scale_factor);

TrainingPair sample_training_pair(const PointCloud& clean, const TrainingConfig& cfg,
                                  Rng& rng);

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_cd = 0.0;
    double val_emd = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    double best_val = 0.0;
    int best_epoch = 0;
    bool aborted = false;               // divergence; checkpoint holds last good state
    double identity_val_emd = 0.0;      // UniNet stage: val EMD of zero displacement
    std::vector<double> val_displacement;  // UniNet stage: mean |u| per epoch
};

// Stage 1: score regression on the backbone. Trains model.backbone() in
// place, leaves the UniNet untouched, writes the best-by-validation-CD model
// to ckpt_path and a CSV log (epoch,lr,train_loss,val_cd,val_emd) to
// log_path. Empty paths skip the corresponding output.
TrainResult pretrain_backbone(const Dataset& dataset, const TrainingConfig& cfg,
                              DenoiserModel& model, const std::string& ckpt_path,
                              const std::string& log_path);

// Stage 2: loads the stage-1 checkpoint (refusing to run without one),
// freezes the backbone, trains the UniNet on EMD over frozen-backbone
// rollouts (a random t in [t_act, T] gradient-ascent steps, then one
// refinement), and writes the best-by-validation-EMD model to ckpt_path.
TrainResult train_uninet(const Dataset& dataset, const std::string& backbone_ckpt,
                         const TrainingConfig& cfg, const DenoiseSchedule& schedule,
                         const std::string& ckpt_path, const std::string& log_path);

}  // namespace gpcd
