#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pabnet/loss.hpp"
#include "pabnet/network.hpp"
#include "pabnet/optimizer.hpp"

namespace pabnet {

struct TrainConfig {
    int batch_size = 32;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double margin = 1.0;
    ImpostorForm impostor_form = ImpostorForm::squared_hinge;
    int steps = 500;
    std::uint64_t seed = 1;

    void validate() const;
};

struct TrainLogEntry {
    int step = 0;
    double loss = 0.0;
};

struct EpochSummary {
    int epoch = 0;
    double mean_loss = 0.0;
    double genuine_mean_distance = 0.0;
    double impostor_mean_distance = 0.0;
};

struct TrainLog {
    std::vector<TrainLogEntry> entries;
    std::vector<EpochSummary> epochs;
    std::uint64_t seed = 0;
};

inline constexpr const char* kTrainLogHeader = "#pab-trainlog-v1";

void write_train_log(const std::string& path, const TrainLog& log,
                     const std::string& config_echo);

// Runs the optimization loop over the coupled network. Only the projection
// heads and the attention block receive updates; the shared prefix and the
// pose provider stay fixed, so their feature maps are computed once and
// cached. Deterministic for a fixed seed.
//
// `pose` may be null when the network has attention disabled.
TrainLog train(CoupledNet& net, const PoseFeatureProvider* pose,
               const std::vector<ImageSample>& samples,
               const std::vector<ManifestRecord>& records, const TrainConfig& config);

// --- gradient verification -------------------------------------------------

struct GradCheckReport {
    std::string component;
    double max_rel_error = 0.0;
    std::string worst_param;
    double threshold = 0.0;
    double epsilon = 0.0;
    bool pass = false;
};

// Central finite differences against the analytic gradients of the named
// component ("loss" or "pab") on a tiny double-precision instance.
GradCheckReport grad_check(const std::string& component, std::uint64_t seed = 7);

GradCheckReport grad_check_loss(std::uint64_t seed = 7);
GradCheckReport grad_check_pab(std::uint64_t seed = 7);

}  // namespace pabnet
