#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pabnet/data.hpp"
#include "pabnet/network.hpp"
#include "pabnet/trainer.hpp"

#include "json.hpp"

namespace pabnet {

// Flat, schema-validated configuration document covering the full pipeline.
// Unknown keys are rejected; absent keys fall back to the defaults below and
// the resolved document is echoed into every output artifact.
struct RunConfig {
    // dataset synthesis
    int n_identities = 25;
    std::vector<double> yaw_grid = {-90, -75, -60, -45, -30, -15, 0, 15, 30, 45, 60, 75, 90};
    int image_size = 64;
    std::vector<double> illumination_levels = {1.0};
    double train_fraction = 0.6;

    // backbone / embedding
    std::vector<int> stage_widths = {16, 32, 48};
    int target_channels = 64;
    int target_size = 3;
    int embedding_dim = 128;
    double frontal_threshold_deg = 15.0;

    // pose provider
    int pose_channels = 32;
    int pose_spatial = 7;
    std::vector<int> pose_widths = {12, 24};
    int pose_pretrain_steps = 200;
    int pose_pretrain_batch = 16;
    double pose_pretrain_lr = 1e-3;

    // attention block
    bool attention_enabled = true;
    int pab_hidden = 128;
    std::string attention_order = "channel_then_spatial";
    std::string spam_variant = "conv3x3_stride2";

    // optimization
    int batch_size = 32;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double margin = 1.0;
    std::string impostor_form = "squared_hinge";
    int steps = 500;
    std::uint64_t seed = 1;

    // evaluation
    int eval_pairs = 700;
    int n_folds = 10;
    std::vector<double> far_targets = {0.01, 0.001};
    int rank_k = 5;
    int hist_bins = 40;
    std::string score_metric = "cosine";

    static RunConfig from_json(const nlohmann::json& doc);
    static RunConfig from_file(const std::string& path);

    // Full resolved document, every key present, sorted by key.
    nlohmann::json to_json() const;
    std::string echo() const { return to_json().dump(); }

    // Cross-field validation (shape reachability, value ranges).
    void validate() const;

    SynthConfig synth_config() const;
    ModelConfig model_config() const;
    TrainConfig train_config() const;
};

}  // namespace pabnet
