#pragma once

#include <iosfwd>
#include <string>

#include "pabnet/runconfig.hpp"

namespace pabnet {

// Exit codes shared by every subcommand.
enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,
    kExitDivergence = 3,
    kExitFormat = 4,
    kExitProtocol = 5,
    kExitVerification = 6,
};

inline constexpr const char* kMetricsHeader = "#pab-metrics-v1";

// Generates the synthetic dataset into out_dir (images/ + manifest.tsv).
int cmd_synth(const RunConfig& config, const std::string& out_dir, std::ostream& out);

struct TrainPaths {
    std::string manifest;
    std::string checkpoint;
    std::string trainlog;  // defaults to "<checkpoint>.trainlog.tsv" when empty
};

int cmd_train(const RunConfig& config, const TrainPaths& paths, std::ostream& out);

struct EmbedOptions {
    std::string checkpoint;
    std::string manifest;
    std::string out_path;
    std::string split;          // keep only records with this split tag when set
    std::string pose_features;  // external feature maps instead of the bundled provider
};

int cmd_embed(const EmbedOptions& options, std::ostream& out);

struct EvalOptions {
    std::string embeddings;
    std::string protocol;  // verify | identify | folds
    std::string out_dir;
    std::string config_path;  // optional override; default is the embedded echo
    bool seed_override = false;
    std::uint64_t seed = 0;
};

int cmd_eval(const EvalOptions& options, std::ostream& out);

int cmd_gradcheck(const std::string& component, std::uint64_t seed, std::ostream& out);

// Argument parsing plus exception-to-exit-code mapping.
int run_cli(int argc, char** argv);

}  // namespace pabnet
