#include "pabnet/loss.hpp"

#include <cmath>

#include "pabnet/errors.hpp"

namespace pabnet {

double euclidean_distance(const Vec& a, const Vec& b) {
    if (a.size() != b.size())
        throw ShapeError("distance between vectors of size " + std::to_string(a.size()) +
                         " and " + std::to_string(b.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

double contrastive_pair_loss(const Vec& z_profile, const Vec& z_frontal, PairLabel label,
                             double margin, ImpostorForm form) {
    if (margin <= 0.0) throw InvalidInputError("margin must be positive");
    const double dist = euclidean_distance(z_profile, z_frontal);
    if (label == PairLabel::genuine) return 0.5 * dist * dist;
    if (form == ImpostorForm::squared_hinge) {
        const double gap = margin - dist;
        return gap > 0.0 ? 0.5 * gap * gap : 0.0;
    }
    const double gap = margin - dist * dist;
    return gap > 0.0 ? 0.5 * gap : 0.0;
}

void contrastive_pair_grad(const Vec& z_profile, const Vec& z_frontal, PairLabel label,
                           double margin, ImpostorForm form, double weight, Vec& d_profile,
                           Vec& d_frontal) {
    if (margin <= 0.0) throw InvalidInputError("margin must be positive");
    const std::size_t n = z_profile.size();
    if (z_frontal.size() != n)
        throw ShapeError("gradient of pair with mismatched embedding sizes");
    if (d_profile.size() != n) d_profile.assign(n, 0.0);
    if (d_frontal.size() != n) d_frontal.assign(n, 0.0);

    const double dist = euclidean_distance(z_profile, z_frontal);

    // coeff multiplies (z_profile - z_frontal).
    double coeff = 0.0;
    if (label == PairLabel::genuine) {
        coeff = 1.0;
    } else if (form == ImpostorForm::squared_hinge) {
        if (dist > 0.0 && dist < margin) coeff = -(margin - dist) / dist;
    } else {
        if (dist * dist < margin) coeff = -1.0;
    }

    const double s = coeff * weight;
    for (std::size_t i = 0; i < n; ++i) {
        const double diff = z_profile[i] - z_frontal[i];
        d_profile[i] += s * diff;
        d_frontal[i] -= s * diff;
    }
}

double batch_loss(const std::vector<EmbeddingPair>& batch, double margin, ImpostorForm form) {
    if (batch.empty()) throw InvalidInputError("batch_loss over an empty batch");
    double acc = 0.0;
    for (const auto& p : batch)
        acc += contrastive_pair_loss(p.profile, p.frontal, p.label, margin, form);
    return acc / static_cast<double>(batch.size());
}

CrossLossStats exhaustive_cross_loss(const std::vector<Vec>& profiles,
                                     const std::vector<std::string>& profile_ids,
                                     const std::vector<Vec>& frontals,
                                     const std::vector<std::string>& frontal_ids, double margin,
                                     ImpostorForm form) {
    if (profiles.empty() || frontals.empty())
        throw InvalidInputError("exhaustive_cross_loss needs both profile and frontal sets");
    if (profiles.size() != profile_ids.size() || frontals.size() != frontal_ids.size())
        throw ShapeError("embedding/id count mismatch");

    CrossLossStats st;
    double genuine_sum = 0.0;
    double impostor_sum = 0.0;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        for (std::size_t j = 0; j < frontals.size(); ++j) {
            const PairLabel label =
                profile_ids[i] == frontal_ids[j] ? PairLabel::genuine : PairLabel::impostor;
            const double l = contrastive_pair_loss(profiles[i], frontals[j], label, margin, form);
            if (label == PairLabel::genuine) {
                genuine_sum += l;
                ++st.genuine_count;
            } else {
                impostor_sum += l;
                ++st.impostor_count;
            }
        }
    }
    const double total = genuine_sum + impostor_sum;
    const std::size_t n = st.genuine_count + st.impostor_count;
    st.overall = total / static_cast<double>(n);
    st.genuine_mean = st.genuine_count ? genuine_sum / static_cast<double>(st.genuine_count) : 0.0;
    st.impostor_mean =
        st.impostor_count ? impostor_sum / static_cast<double>(st.impostor_count) : 0.0;
    return st;
}

std::string to_string(ImpostorForm f) {
    return f == ImpostorForm::squared_hinge ? "squared_hinge" : "hinge_sq_distance";
}

ImpostorForm impostor_form_from_string(const std::string& s) {
    if (s == "squared_hinge") return ImpostorForm::squared_hinge;
    if (s == "hinge_sq_distance") return ImpostorForm::hinge_sq_distance;
    throw ConfigError("unknown impostor_form: " + s);
}

}  // namespace pabnet
