#include "pabnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pabnet/errors.hpp"

namespace pabnet {

namespace {

void check_scores(const ScoreSet& s) {
    if (s.genuine.empty() || s.impostor.empty())
        throw InvalidInputError("score set needs both genuine and impostor scores");
    for (double x : s.genuine)
        if (!std::isfinite(x)) throw InvalidInputError("non-finite genuine score");
    for (double x : s.impostor)
        if (!std::isfinite(x)) throw InvalidInputError("non-finite impostor score");
}

// Fraction of v at or above t.
double frac_at_least(const Vec& sorted, double t) {
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), t);
    return static_cast<double>(sorted.end() - it) / static_cast<double>(sorted.size());
}

}  // namespace

double cosine_similarity(const Vec& a, const Vec& b) {
    if (a.size() != b.size())
        throw ShapeError("cosine of vectors with sizes " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0)
        throw InvalidInputError("cosine similarity of a zero vector is undefined");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<RocPoint> roc_curve(const ScoreSet& scores) {
    check_scores(scores);
    Vec genuine = scores.genuine;
    Vec impostor = scores.impostor;
    std::sort(genuine.begin(), genuine.end());
    std::sort(impostor.begin(), impostor.end());

    Vec thresholds;
    thresholds.reserve(genuine.size() + impostor.size() + 1);
    thresholds.insert(thresholds.end(), genuine.begin(), genuine.end());
    thresholds.insert(thresholds.end(), impostor.begin(), impostor.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    thresholds.push_back(thresholds.back() + 1.0);  // sentinel: nothing accepted

    std::vector<RocPoint> curve;
    curve.reserve(thresholds.size());
    for (double t : thresholds)
        curve.push_back({t, frac_at_least(impostor, t), frac_at_least(genuine, t)});
    return curve;
}

double eer(const ScoreSet& scores) {
    const auto curve = roc_curve(scores);
    // d = FAR - FRR runs from +1 down through the crossing.
    double prev_d = 0.0;
    for (std::size_t i = 0; i < curve.size(); ++i) {
        const double frr = 1.0 - curve[i].gar;
        const double d = curve[i].far - frr;
        if (d == 0.0) return curve[i].far;
        if (d < 0.0) {
            if (i == 0) return 0.5 * (curve[i].far + frr);
            const double alpha = prev_d / (prev_d - d);
            const double prev_frr = 1.0 - curve[i - 1].gar;
            const double far = curve[i - 1].far + alpha * (curve[i].far - curve[i - 1].far);
            const double frr_x = prev_frr + alpha * (frr - prev_frr);
            return 0.5 * (far + frr_x);
        }
        prev_d = d;
    }
    return 0.0;  // FAR stayed above FRR through the sentinel: degenerate, separable
}

double gar_at_far(const ScoreSet& scores, double far_target) {
    if (!(far_target > 0.0 && far_target < 1.0))
        throw InvalidInputError("far_target must lie strictly between 0 and 1");
    const auto curve = roc_curve(scores);
    for (const auto& p : curve)
        if (p.far < far_target) return p.gar;
    return 0.0;
}

CmcCurve rank_k_identification(const std::vector<Vec>& probes,
                               const std::vector<std::string>& probe_labels,
                               const std::vector<Vec>& gallery,
                               const std::vector<std::string>& gallery_labels, int max_rank) {
    if (probes.size() != probe_labels.size() || gallery.size() != gallery_labels.size())
        throw ShapeError("embedding/label count mismatch");
    if (probes.empty() || gallery.empty())
        throw InvalidInputError("identification needs non-empty probe and gallery sets");
    if (max_rank < 1 || max_rank > static_cast<int>(gallery.size()))
        throw InvalidInputError("max_rank must be in [1, gallery size]");

    for (std::size_t i = 0; i < gallery_labels.size(); ++i)
        for (std::size_t j = i + 1; j < gallery_labels.size(); ++j)
            if (gallery_labels[i] == gallery_labels[j])
                throw ProtocolError("duplicate gallery label: " + gallery_labels[i]);

    CmcCurve cmc;
    cmc.accuracy.assign(max_rank, 0.0);
    std::vector<std::size_t> order(gallery.size());

    for (std::size_t p = 0; p < probes.size(); ++p) {
        const auto found =
            std::find(gallery_labels.begin(), gallery_labels.end(), probe_labels[p]);
        if (found == gallery_labels.end())
            throw ProtocolError("probe label missing from gallery: " + probe_labels[p]);

        Vec sims(gallery.size());
        for (std::size_t g = 0; g < gallery.size(); ++g)
            sims[g] = cosine_similarity(probes[p], gallery[g]);

        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });

        for (int k = 0; k < max_rank; ++k) {
            if (gallery_labels[order[k]] == probe_labels[p]) {
                for (int r = k; r < max_rank; ++r) cmc.accuracy[r] += 1.0;
                break;
            }
        }
    }
    for (double& a : cmc.accuracy) a /= static_cast<double>(probes.size());
    return cmc;
}

std::pair<double, double> kfold_stats(const Vec& fold_values) {
    if (fold_values.empty()) throw InvalidInputError("kfold_stats over an empty list");
    const double n = static_cast<double>(fold_values.size());
    const double mean = std::accumulate(fold_values.begin(), fold_values.end(), 0.0) / n;
    if (fold_values.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double v : fold_values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

double verification_accuracy(const ScoreSet& scores, double threshold) {
    check_scores(scores);
    std::size_t correct = 0;
    for (double s : scores.genuine)
        if (s >= threshold) ++correct;
    for (double s : scores.impostor)
        if (s < threshold) ++correct;
    return static_cast<double>(correct) /
           static_cast<double>(scores.genuine.size() + scores.impostor.size());
}

double best_accuracy_threshold(const ScoreSet& scores) {
    const auto curve = roc_curve(scores);
    double best_t = curve.front().threshold;
    double best_acc = -1.0;
    const double ng = static_cast<double>(scores.genuine.size());
    const double ni = static_cast<double>(scores.impostor.size());
    for (const auto& p : curve) {
        const double acc = (p.gar * ng + (1.0 - p.far) * ni) / (ng + ni);
        if (acc > best_acc) {
            best_acc = acc;
            best_t = p.threshold;
        }
    }
    return best_t;
}

Histogram similarity_histogram(const ScoreSet& scores, int n_bins) {
    if (n_bins < 2) throw InvalidInputError("histogram needs at least 2 bins");
    Histogram h;
    h.bin_low.resize(n_bins);
    h.bin_high.resize(n_bins);
    h.genuine_density.assign(n_bins, 0.0);
    h.impostor_density.assign(n_bins, 0.0);
    const double width = 2.0 / n_bins;
    for (int i = 0; i < n_bins; ++i) {
        h.bin_low[i] = -1.0 + i * width;
        h.bin_high[i] = -1.0 + (i + 1) * width;
    }
    auto fill = [&](const Vec& v, Vec& density) {
        if (v.empty()) return;
        for (double s : v) {
            int bin = static_cast<int>(std::floor((s + 1.0) / width));
            bin = std::clamp(bin, 0, n_bins - 1);
            density[bin] += 1.0;
        }
        for (double& d : density) d /= static_cast<double>(v.size());
    };
    fill(scores.genuine, h.genuine_density);
    fill(scores.impostor, h.impostor_density);
    return h;
}

}  // namespace pabnet
