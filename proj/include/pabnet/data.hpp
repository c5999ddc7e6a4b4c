#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pabnet/loss.hpp"
#include "pabnet/rng.hpp"
#include "pabnet/tensor.hpp"

namespace pabnet {

enum class View { frontal, profile };

// One dataset entry: 3xSxS pixels in [0,1] plus labels.
struct ImageSample {
    std::string id;        // stable sample identifier (the manifest path)
    std::string identity;
    double yaw_degrees = 0.0;
    View view = View::frontal;
    Tensor3 pixels;
};

struct ManifestRecord {
    std::string path;
    std::string identity;
    double yaw_degrees = 0.0;
    std::string split;
};

struct SynthConfig {
    int n_identities = 25;
    std::vector<double> yaw_grid = {-90, -75, -60, -45, -30, -15, 0, 15, 30, 45, 60, 75, 90};
    int image_size = 64;
    std::vector<double> illumination_levels = {1.0};
    std::uint64_t seed = 1;
    double train_fraction = 0.6;  // leading identities tagged "train", rest "test"
};

struct SynthDataset {
    std::vector<ManifestRecord> records;
    std::vector<Tensor3> images;  // parallel to records
};

// Renders every identity at every yaw (and illumination level): a per-identity
// low-frequency texture with landmark blobs, compressed and sheared
// horizontally as |yaw| grows, then scaled by the illumination level.
// Deterministic for a fixed config.
SynthDataset generate_synthetic(const SynthConfig& config);

// Pair descriptor indexing into a record/sample array.
struct PairDescriptor {
    int profile_index = 0;
    int frontal_index = 0;
    PairLabel label = PairLabel::genuine;
};

// Draws n_pairs/2 genuine and n_pairs/2 impostor (profile, frontal) pairs
// with replacement. Profile members have |yaw| above the frontal threshold,
// frontal members at or below it.
std::vector<PairDescriptor> sample_balanced_pairs(const std::vector<ManifestRecord>& records,
                                                  int n_pairs, Rng& rng,
                                                  double frontal_threshold_deg = 15.0);

struct FoldSplit {
    std::vector<std::vector<PairDescriptor>> folds;
    int dropped = 0;  // pairs discarded to keep folds identity-disjoint and balanced
};

// Identity-stratified partition: record indices per group, no identity in
// more than one group. Deterministic for a fixed seed.
std::vector<std::vector<int>> partition_identities(const std::vector<ManifestRecord>& records,
                                                   int k, std::uint64_t seed);

// Identity-disjoint k-fold split: identities are partitioned first, pairs
// whose members straddle partitions are dropped, and every fold is trimmed to
// the same genuine/impostor count.
FoldSplit split_folds(const std::vector<PairDescriptor>& pairs,
                      const std::vector<ManifestRecord>& records, int k, std::uint64_t seed);

// Nearest bucket center among {15,30,45,60,75,90} for |yaw|; ties go up.
int yaw_bucket(double yaw_degrees);
std::map<int, std::vector<int>> bucket_by_yaw(const std::vector<ManifestRecord>& records);

View view_of(double yaw_degrees, double frontal_threshold_deg = 15.0);

// --- file formats ---------------------------------------------------------

inline constexpr const char* kManifestHeader = "#pab-manifest-v1";

void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> read_manifest(const std::string& path);

void write_ppm(const std::string& path, const Tensor3& image);
Tensor3 read_ppm(const std::string& path);

// Writes images (PPM under <out_dir>/images/) plus <out_dir>/manifest.tsv.
std::string write_dataset(const SynthDataset& dataset, const std::string& out_dir);

// Loads every manifest record's image; paths are resolved against the
// manifest's directory. View tags derive from yaw and the threshold.
std::vector<ImageSample> load_samples(const std::string& manifest_path,
                                      double frontal_threshold_deg = 15.0);

}  // namespace pabnet
