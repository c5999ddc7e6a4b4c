#pragma once

#include <string>
#include <vector>

#include "pabnet/tensor.hpp"

namespace pabnet {

// Labeled similarity scores; higher means more likely genuine.
struct ScoreSet {
    Vec genuine;
    Vec impostor;
};

struct RocPoint {
    double threshold = 0.0;
    double far = 0.0;  // fraction of impostor scores >= threshold
    double gar = 0.0;  // fraction of genuine scores >= threshold
};

struct CmcCurve {
    Vec accuracy;  // accuracy.at(k-1) = fraction of probes matched within rank k
};

struct Histogram {
    Vec bin_low;
    Vec bin_high;
    Vec genuine_density;
    Vec impostor_density;
};

double cosine_similarity(const Vec& a, const Vec& b);

// Threshold sweep over the sorted union of scores plus a sentinel above the
// maximum, ascending. Both rates are non-increasing along the sweep.
std::vector<RocPoint> roc_curve(const ScoreSet& scores);

// Operating point where the false accept rate equals the false reject rate,
// linearly interpolated between the two sweep points bracketing the crossing.
double eer(const ScoreSet& scores);

// Genuine accept rate at the most permissive threshold that keeps the false
// accept rate strictly below far_target; 0 when no threshold achieves it.
double gar_at_far(const ScoreSet& scores, double far_target);

// Closed-set identification. Gallery labels must be unique and cover every
// probe label. Ties in similarity keep the gallery order (stable sort).
CmcCurve rank_k_identification(const std::vector<Vec>& probes,
                               const std::vector<std::string>& probe_labels,
                               const std::vector<Vec>& gallery,
                               const std::vector<std::string>& gallery_labels, int max_rank);

// Mean and sample standard deviation (n-1 divisor; 0 when n < 2).
std::pair<double, double> kfold_stats(const Vec& fold_values);

// Per-class normalized counts over equal-width bins spanning [-1, 1].
// Out-of-range scores clamp into the end bins.
Histogram similarity_histogram(const ScoreSet& scores, int n_bins);

// Fraction of correct accept/reject decisions at threshold t (accept >= t).
double verification_accuracy(const ScoreSet& scores, double threshold);

// Threshold from the score sweep that maximizes verification accuracy;
// the lowest such threshold on ties.
double best_accuracy_threshold(const ScoreSet& scores);

}  // namespace pabnet
