#pragma once

#include <string>
#include <vector>

#include "pabnet/tensor.hpp"

namespace pabnet {

// Pair label: genuine = same identity, impostor = different identities.
enum class PairLabel : int { genuine = 0, impostor = 1 };

// Shape of the impostor-side penalty.
//   squared_hinge:      0.5 * max(0, m - D)^2        (default)
//   hinge_sq_distance:  0.5 * max(0, m - D^2)
enum class ImpostorForm { squared_hinge, hinge_sq_distance };

double euclidean_distance(const Vec& a, const Vec& b);

double contrastive_pair_loss(const Vec& z_profile, const Vec& z_frontal, PairLabel label,
                             double margin,
                             ImpostorForm form = ImpostorForm::squared_hinge);

// d(loss)/d(z_profile) and d(loss)/d(z_frontal), scaled by `weight`.
// At the hinge kinks (D = 0 for an impostor, D = m for the squared hinge)
// the zero subgradient is used.
void contrastive_pair_grad(const Vec& z_profile, const Vec& z_frontal, PairLabel label,
                           double margin, ImpostorForm form, double weight, Vec& d_profile,
                           Vec& d_frontal);

struct EmbeddingPair {
    Vec profile;
    Vec frontal;
    PairLabel label = PairLabel::genuine;
};

// Mean per-pair loss over a sampled batch.
double batch_loss(const std::vector<EmbeddingPair>& batch, double margin,
                  ImpostorForm form = ImpostorForm::squared_hinge);

// Exhaustive evaluation over every (profile, frontal) cross pair; labels are
// derived from identity equality. Reports the overall mean together with the
// per-class means so the balanced-sampling estimator can be checked.
struct CrossLossStats {
    double overall = 0.0;
    double genuine_mean = 0.0;
    double impostor_mean = 0.0;
    std::size_t genuine_count = 0;
    std::size_t impostor_count = 0;
};

CrossLossStats exhaustive_cross_loss(const std::vector<Vec>& profiles,
                                     const std::vector<std::string>& profile_ids,
                                     const std::vector<Vec>& frontals,
                                     const std::vector<std::string>& frontal_ids, double margin,
                                     ImpostorForm form = ImpostorForm::squared_hinge);

std::string to_string(ImpostorForm f);
ImpostorForm impostor_form_from_string(const std::string& s);

}  // namespace pabnet
