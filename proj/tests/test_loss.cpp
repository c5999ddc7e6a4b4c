#include "doctest.h"

#include <cmath>

#include "pabnet/errors.hpp"
#include "pabnet/loss.hpp"
#include "pabnet/rng.hpp"

using namespace pabnet;

TEST_CASE("euclidean distance basics") {
    CHECK(euclidean_distance({1, 2, 3}, {1, 2, 3}) == 0.0);
    Vec a(8, 0.0), b(8, 0.0);
    a[0] = 1.0;
    b[1] = 1.0;
    CHECK(euclidean_distance(a, b) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(euclidean_distance({1, 2}, {1, 2, 3}), ShapeError);

    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
        Vec x(5), y(5);
        for (double& v : x) v = rng.uniform(-2, 2);
        for (double& v : y) v = rng.uniform(-2, 2);
        CHECK(euclidean_distance(x, y) == doctest::Approx(euclidean_distance(y, x)));
    }
}

TEST_CASE("pair loss: hand-derived values") {
    // Impostor with margin 1 and distance 0.4.
    Vec zp{0.4, 0.0}, zf{0.0, 0.0};
    const double impostor =
        contrastive_pair_loss(zp, zf, PairLabel::impostor, 1.0, ImpostorForm::squared_hinge);
    CHECK(std::fabs(impostor - 0.18) < 1e-12);
    // Genuine at the same distance.
    const double genuine =
        contrastive_pair_loss(zp, zf, PairLabel::genuine, 1.0, ImpostorForm::squared_hinge);
    CHECK(std::fabs(genuine - 0.08) < 1e-12);
}

TEST_CASE("pair loss: trivial zeros") {
    Vec z{0.3, -0.7, 0.1};
    CHECK(contrastive_pair_loss(z, z, PairLabel::genuine, 1.0) == 0.0);
    Vec far_apart{5.0, 0.0};
    Vec origin{0.0, 0.0};
    CHECK(contrastive_pair_loss(far_apart, origin, PairLabel::impostor, 1.0) == 0.0);
}

TEST_CASE("pair loss: the literal squared-distance hinge variant") {
    Vec zp{0.4, 0.0}, zf{0.0, 0.0};  // distance 0.4, squared 0.16
    const double v =
        contrastive_pair_loss(zp, zf, PairLabel::impostor, 1.0, ImpostorForm::hinge_sq_distance);
    CHECK(v == doctest::Approx(0.5 * (1.0 - 0.16)).epsilon(1e-12));
    Vec far_apart{1.2, 0.0};  // squared distance 1.44 > margin
    CHECK(contrastive_pair_loss(far_apart, zf, PairLabel::impostor, 1.0,
                                ImpostorForm::hinge_sq_distance) == 0.0);
}

TEST_CASE("pair loss: monotonic in distance") {
    double prev_genuine = -1.0;
    double prev_impostor = 1e9;
    for (double d = 0.0; d <= 2.0; d += 0.05) {
        Vec zp{d, 0.0}, zf{0.0, 0.0};
        const double g = contrastive_pair_loss(zp, zf, PairLabel::genuine, 1.0);
        const double i = contrastive_pair_loss(zp, zf, PairLabel::impostor, 1.0);
        CHECK(g >= 0.0);
        CHECK(i >= 0.0);
        if (d > 0.0) {
            CHECK(g > prev_genuine);
            CHECK(i <= prev_impostor);
        }
        if (d >= 1.0) CHECK(i == 0.0);
        prev_genuine = g;
        prev_impostor = i;
    }
}

TEST_CASE("pair loss: margin homogeneity of the squared hinge") {
    for (double d : {0.2, 0.7, 1.3, 1.9}) {
        Vec zp2{d, 0.0}, zf{0.0, 0.0};
        Vec zp1{d / 2.0, 0.0};
        const double with_m2 = contrastive_pair_loss(zp2, zf, PairLabel::impostor, 2.0);
        const double with_m1 = contrastive_pair_loss(zp1, zf, PairLabel::impostor, 1.0);
        CHECK(with_m2 == doctest::Approx(4.0 * with_m1).epsilon(1e-12));
    }
}

TEST_CASE("pair gradients: pull together, push apart") {
    Vec zp{1.0, 0.5}, zf{0.2, 0.1};
    Vec dp, df;
    contrastive_pair_grad(zp, zf, PairLabel::genuine, 1.0, ImpostorForm::squared_hinge, 1.0, dp,
                          df);
    // Genuine: the step -grad moves z_profile toward z_frontal.
    for (std::size_t i = 0; i < zp.size(); ++i)
        CHECK((zf[i] - zp[i]) * (-dp[i]) > 0.0);

    Vec close_p{0.3, 0.2}, close_f{0.25, 0.18};
    Vec dpi, dfi;
    contrastive_pair_grad(close_p, close_f, PairLabel::impostor, 1.0,
                          ImpostorForm::squared_hinge, 1.0, dpi, dfi);
    for (std::size_t i = 0; i < close_p.size(); ++i)
        CHECK((close_f[i] - close_p[i]) * (-dpi[i]) < 0.0);
}

TEST_CASE("pair gradients: dead region has exact zeros") {
    Vec zp{3.0, 0.0}, zf{0.0, 0.0};  // impostor beyond the margin
    Vec dp, df;
    contrastive_pair_grad(zp, zf, PairLabel::impostor, 1.0, ImpostorForm::squared_hinge, 1.0, dp,
                          df);
    for (double v : dp) CHECK(v == 0.0);
    for (double v : df) CHECK(v == 0.0);
}

TEST_CASE("batch loss: mean semantics") {
    Vec zp1{0.4, 0.0}, zf{0.0, 0.0};
    std::vector<EmbeddingPair> batch;
    batch.push_back({zp1, zf, PairLabel::impostor});  // 0.18
    batch.push_back({zp1, zf, PairLabel::genuine});   // 0.08
    CHECK(batch_loss(batch, 1.0) == doctest::Approx(0.13).epsilon(1e-12));

    // One genuine pair at zero distance.
    std::vector<EmbeddingPair> zero{{zf, zf, PairLabel::genuine}};
    CHECK(batch_loss(zero, 1.0) == 0.0);

    // Duplicating every pair cannot move the mean.
    std::vector<EmbeddingPair> doubled = batch;
    doubled.insert(doubled.end(), batch.begin(), batch.end());
    CHECK(batch_loss(doubled, 1.0) == doctest::Approx(batch_loss(batch, 1.0)).epsilon(1e-15));

    CHECK_THROWS_AS(batch_loss({}, 1.0), InvalidInputError);
}

TEST_CASE("exhaustive cross loss matches the balanced-sampling expectation") {
    Rng rng(99);
    const int dim = 4;
    std::vector<Vec> profiles, frontals;
    std::vector<std::string> pid, fid;
    for (int i = 0; i < 6; ++i) {
        Vec p(dim), f(dim);
        for (double& v : p) v = rng.uniform(-1, 1);
        for (double& v : f) v = rng.uniform(-1, 1);
        profiles.push_back(p);
        frontals.push_back(f);
        pid.push_back("id" + std::to_string(i % 3));
        fid.push_back("id" + std::to_string(i % 3));
    }
    const auto stats = exhaustive_cross_loss(profiles, pid, frontals, fid, 1.0);
    CHECK(stats.genuine_count + stats.impostor_count == 36);

    // The N^2 mean decomposes into the class means weighted by class counts.
    const double recombined =
        (stats.genuine_mean * stats.genuine_count + stats.impostor_mean * stats.impostor_count) /
        36.0;
    CHECK(stats.overall == doctest::Approx(recombined).epsilon(1e-12));

    // A balanced sampler draws both classes equally, so its expectation is the
    // unweighted mean of the two class means; estimate it by direct sampling.
    Rng sampler(7);
    double acc = 0.0;
    const int draws = 20000;
    for (int t = 0; t < draws; ++t) {
        const bool genuine = t % 2 == 0;
        while (true) {
            const std::size_t i = sampler.index(profiles.size());
            const std::size_t j = sampler.index(frontals.size());
            if ((pid[i] == fid[j]) == genuine) {
                acc += contrastive_pair_loss(profiles[i], frontals[j],
                                             genuine ? PairLabel::genuine : PairLabel::impostor,
                                             1.0);
                break;
            }
        }
    }
    const double balanced_expectation = 0.5 * (stats.genuine_mean + stats.impostor_mean);
    CHECK(acc / draws == doctest::Approx(balanced_expectation).epsilon(0.05));
}

TEST_CASE("loss gradient matches finite differences away from the kinks") {
    Rng rng(11);
    const double eps = 1e-6;
    for (ImpostorForm form : {ImpostorForm::squared_hinge, ImpostorForm::hinge_sq_distance}) {
        for (PairLabel label : {PairLabel::genuine, PairLabel::impostor}) {
            Vec zp(6), zf(6);
            for (int attempt = 0; attempt < 50; ++attempt) {
                for (double& v : zp) v = rng.uniform(-1, 1);
                for (double& v : zf) v = rng.uniform(-1, 1);
                const double d = euclidean_distance(zp, zf);
                if (d > 0.1 && std::fabs(d - 1.0) > 0.1 && std::fabs(d * d - 1.0) > 0.1) break;
            }
            Vec dp, df;
            contrastive_pair_grad(zp, zf, label, 1.0, form, 1.0, dp, df);
            for (std::size_t i = 0; i < zp.size(); ++i) {
                const double keep = zp[i];
                zp[i] = keep + eps;
                const double hi = contrastive_pair_loss(zp, zf, label, 1.0, form);
                zp[i] = keep - eps;
                const double lo = contrastive_pair_loss(zp, zf, label, 1.0, form);
                zp[i] = keep;
                const double numeric = (hi - lo) / (2 * eps);
                if (std::fabs(dp[i]) > 1e-7 || std::fabs(numeric) > 1e-7)
                    CHECK(std::fabs(dp[i] - numeric) /
                              std::max(std::fabs(dp[i]), std::fabs(numeric)) <
                          1e-5);
            }
        }
    }
}
