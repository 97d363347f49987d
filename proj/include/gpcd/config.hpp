#pragma once

#include <istream>
#include <string>

#include "gpcd/denoiser.hpp"
#include "gpcd/noise.hpp"
#include "gpcd/training.hpp"

namespace gpcd {

// Flat key=value experiment configuration: one schema spanning the noise,
// schedule, model, and training knobs. Unknown keys are rejected so typos
// cannot silently fall back to defaults.
struct ExperimentConfig {
    NoiseSpec noise;
    DenoiseSchedule schedule;
    int denoise_patch_size = 1000;
    double denoise_coverage = 3.0;
    int k_feat = 16;
    int k_uninet = 8;
    int l_uninet = 2;
    TrainingConfig train;

    void validate() const;
};

// One key=value assignment; unknown key or malformed value throws
// invalid_argument naming the key.
void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                        const std::string& value);

// key = value lines, '#' comments, blank lines ignored. origin names the
// source in error messages.
ExperimentConfig parse_config(std::istream& in, const std::string& origin);
ExperimentConfig load_config(const std::string& path);

// Every schema key with its default and meaning, for --help.
std::string config_help();

}  // namespace gpcd
