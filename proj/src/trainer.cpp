#include "pabnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>

#include "pabnet/errors.hpp"

namespace pabnet {

void TrainConfig::validate() const {
    if (batch_size < 2 || batch_size % 2 != 0)
        throw ConfigError("batch_size must be even and at least 2");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw ConfigError("adam betas must lie in [0, 1)");
    if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
    if (!(margin > 0.0)) throw ConfigError("margin must be positive");
    if (steps < 0) throw ConfigError("steps must be non-negative");
}

void write_train_log(const std::string& path, const TrainLog& log,
                     const std::string& config_echo) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open train log for writing: " + path);
    f << kTrainLogHeader << "\n";
    f << "#cfg\t" << config_echo << "\n";
    f << "#seed\t" << log.seed << "\n";
    char buf[64];
    for (const auto& e : log.entries) {
        std::snprintf(buf, sizeof(buf), "%.17g", e.loss);
        f << e.step << "\t" << buf << "\n";
    }
    for (const auto& ep : log.epochs) {
        std::snprintf(buf, sizeof(buf), "%.17g", ep.mean_loss);
        f << "#epoch\t" << ep.epoch << "\t" << buf;
        std::snprintf(buf, sizeof(buf), "%.17g", ep.genuine_mean_distance);
        f << "\t" << buf;
        std::snprintf(buf, sizeof(buf), "%.17g", ep.impostor_mean_distance);
        f << "\t" << buf << "\n";
    }
    if (!f) throw FormatError("failed writing train log: " + path);
}

namespace {

// Gradient buffers aligned with a trainable ParamRefs list, addressable by
// parameter name.
struct GradBuffers {
    std::vector<Vec> bufs;
    std::vector<std::string> names;

    explicit GradBuffers(const ParamRefs& refs) {
        for (const auto& r : refs) {
            bufs.emplace_back(r.data->size(), 0.0);
            names.push_back(r.name);
        }
    }

    void zero() {
        for (auto& b : bufs) std::fill(b.begin(), b.end(), 0.0);
    }

    Vec& by_name(const std::string& name) {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return bufs[i];
        throw StateError("no gradient buffer for " + name);
    }
};

void accumulate_mlp_grads(const MlpGrads& src, const std::string& prefix, GradBuffers& g) {
    auto add = [](const Vec& from, Vec& to) {
        for (std::size_t i = 0; i < from.size(); ++i) to[i] += from[i];
    };
    add(src.w1.v, g.by_name(prefix + ".w1"));
    add(src.b1, g.by_name(prefix + ".b1"));
    add(src.w2.v, g.by_name(prefix + ".w2"));
    add(src.b2, g.by_name(prefix + ".b2"));
}

}  // namespace

TrainLog train(CoupledNet& net, const PoseFeatureProvider* pose,
               const std::vector<ImageSample>& samples,
               const std::vector<ManifestRecord>& records, const TrainConfig& config) {
    config.validate();
    if (samples.size() != records.size())
        throw ShapeError("sample/record count mismatch");
    if (samples.empty()) throw InvalidInputError("training needs a non-empty dataset");
    if (net.attention_enabled() && pose == nullptr)
        throw StateError("attention-enabled training requires a pose provider");

    const ModelConfig& mcfg = net.config();

    // The prefix and the pose provider are fixed, so their outputs per sample
    // are constants of the run.
    const std::size_t n = samples.size();
    std::vector<Tensor3> prefix_maps(n);
    std::vector<Vec> pooled_maps(n);
    std::vector<Tensor3> pose_maps;
    if (net.attention_enabled()) pose_maps.resize(n);
    std::size_t profile_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        prefix_maps[i] = net.prefix_features(samples[i].pixels);
        pooled_maps[i] = global_average_pool(prefix_maps[i]);
        if (net.attention_enabled()) pose_maps[i] = pose->features(samples[i]);
        if (samples[i].view == View::profile) ++profile_count;
    }

    ParamRefs trainable = net.trainable_params();
    GradBuffers grads(trainable);
    std::vector<Vec*> param_ptrs;
    std::vector<const Vec*> grad_ptrs;
    for (std::size_t i = 0; i < trainable.size(); ++i) {
        param_ptrs.push_back(trainable[i].data);
        grad_ptrs.push_back(&grads.bufs[i]);
    }

    AdamState adam_state;
    AdamConfig adam{config.learning_rate, config.adam_beta1, config.adam_beta2,
                    config.adam_epsilon};

    // One epoch: as many sampled pairs as there are profile images. The pair
    // schedule is seeded per batch slot, so every epoch replays the same
    // sampled pair set (a fixed epoch dataset, as in ordinary epoch training).
    const int steps_per_epoch =
        std::max(1, static_cast<int>((profile_count + config.batch_size - 1) /
                                     static_cast<std::size_t>(config.batch_size)));

    TrainLog log;
    log.seed = config.seed;
    double last_finite_loss = 0.0;
    double epoch_loss = 0.0, epoch_gen_dist = 0.0, epoch_imp_dist = 0.0;
    int epoch_steps = 0;
    std::size_t epoch_gen = 0, epoch_imp = 0;

    const double inv_pair = 1.0 / config.batch_size;
    PabCache cache;
    std::optional<PabGrads> pab_grads;
    if (net.attention_enabled()) pab_grads.emplace(net.pab());

    for (int step = 0; step < config.steps; ++step) {
        Rng rng(mix_seed(config.seed,
                         0xBA7C4 + static_cast<std::uint64_t>(step % steps_per_epoch)));
        const auto pairs = sample_balanced_pairs(records, config.batch_size, rng,
                                                 mcfg.frontal_threshold_deg);
        grads.zero();

        double loss_sum = 0.0;
        for (const auto& pair : pairs) {
            const int pi = pair.profile_index;
            const int fi = pair.frontal_index;

            // Profile branch.
            Vec pooled_p;
            if (net.attention_enabled()) {
                const Tensor3 refined =
                    pab_forward(pose_maps[pi], prefix_maps[pi], net.pab(), &cache);
                pooled_p = global_average_pool(refined);
            } else {
                pooled_p = pooled_maps[pi];
            }
            const Vec z_p = net.project_profile(pooled_p);
            const Vec z_f = net.project_frontal(pooled_maps[fi]);

            const double pair_loss = contrastive_pair_loss(z_p, z_f, pair.label, config.margin,
                                                           config.impostor_form);
            loss_sum += pair_loss;

            const double dist = euclidean_distance(z_p, z_f);
            if (pair.label == PairLabel::genuine) {
                epoch_gen_dist += dist;
                ++epoch_gen;
            } else {
                epoch_imp_dist += dist;
                ++epoch_imp;
            }

            Vec dz_p, dz_f;
            contrastive_pair_grad(z_p, z_f, pair.label, config.margin, config.impostor_form,
                                  inv_pair, dz_p, dz_f);

            // Projection heads.
            {
                Mat dw(net.profile_head_w().rows, net.profile_head_w().cols);
                outer_accum(dw, dz_p, pooled_p);
                Vec& gw = grads.by_name("profile.proj.w");
                for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += dw.v[i];
                Vec& gb = grads.by_name("profile.proj.b");
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += dz_p[i];
            }
            {
                Mat dw(net.frontal_head_w().rows, net.frontal_head_w().cols);
                outer_accum(dw, dz_f, pooled_maps[fi]);
                Vec& gw = grads.by_name("frontal.proj.w");
                for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += dw.v[i];
                Vec& gb = grads.by_name("frontal.proj.b");
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += dz_f[i];
            }

            // Into the attention block.
            if (net.attention_enabled()) {
                Vec d_pooled(pooled_p.size(), 0.0);
                affine_transpose_accum(net.profile_head_w(), dz_p, d_pooled);
                const Tensor3& f = prefix_maps[pi];
                Tensor3 d_refined(f.channels, f.height, f.width);
                const double inv_hw = 1.0 / f.spatial_size();
                for (int c = 0; c < f.channels; ++c) {
                    const double dc = d_pooled[c] * inv_hw;
                    for (int i = 0; i < f.spatial_size(); ++i)
                        d_refined.v[static_cast<std::size_t>(c) * f.spatial_size() + i] = dc;
                }
                pab_backward(net.pab(), cache, d_refined, *pab_grads);
            }
        }

        if (net.attention_enabled()) {
            accumulate_mlp_grads(pab_grads->mlp1, "pab.mlp1", grads);
            accumulate_mlp_grads(pab_grads->mlp2, "pab.mlp2", grads);
            Vec& gw = grads.by_name("pab.spam.conv.w");
            for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += pab_grads->conv_w[i];
            grads.by_name("pab.spam.conv.b")[0] += pab_grads->conv_b[0];
            // Reset the accumulators for the next step.
            std::fill(pab_grads->conv_w.begin(), pab_grads->conv_w.end(), 0.0);
            std::fill(pab_grads->conv_b.begin(), pab_grads->conv_b.end(), 0.0);
            auto zero_mlp = [](MlpGrads& g) {
                std::fill(g.w1.v.begin(), g.w1.v.end(), 0.0);
                std::fill(g.b1.begin(), g.b1.end(), 0.0);
                std::fill(g.w2.v.begin(), g.w2.v.end(), 0.0);
                std::fill(g.b2.begin(), g.b2.end(), 0.0);
            };
            zero_mlp(pab_grads->mlp1);
            zero_mlp(pab_grads->mlp2);
        }

        const double mean_loss = loss_sum / pairs.size();
        if (!std::isfinite(mean_loss))
            throw DivergenceError("non-finite loss at step " + std::to_string(step) +
                                  "; last finite loss " + std::to_string(last_finite_loss));
        last_finite_loss = mean_loss;
        log.entries.push_back({step, mean_loss});

        adam_step(param_ptrs, grad_ptrs, adam_state, adam);

        epoch_loss += mean_loss;
        ++epoch_steps;
        if (epoch_steps == steps_per_epoch || step == config.steps - 1) {
            EpochSummary s;
            s.epoch = static_cast<int>(log.epochs.size());
            s.mean_loss = epoch_loss / epoch_steps;
            s.genuine_mean_distance = epoch_gen ? epoch_gen_dist / epoch_gen : 0.0;
            s.impostor_mean_distance = epoch_imp ? epoch_imp_dist / epoch_imp : 0.0;
            log.epochs.push_back(s);
            epoch_loss = epoch_gen_dist = epoch_imp_dist = 0.0;
            epoch_steps = 0;
            epoch_gen = epoch_imp = 0;
        }
    }
    return log;
}

// --- gradient verification ---------------------------------------------------

namespace {

double rel_error(double a, double b) {
    const double mag = std::max(std::fabs(a), std::fabs(b));
    if (mag < 1e-7) return 0.0;
    return std::fabs(a - b) / mag;
}

}  // namespace

GradCheckReport grad_check_loss(std::uint64_t seed) {
    GradCheckReport report;
    report.component = "loss";
    report.threshold = 1e-5;
    report.epsilon = 1e-6;

    Rng rng(mix_seed(seed, 101));
    const int dim = 8;
    const double margin = 1.0;

    for (ImpostorForm form : {ImpostorForm::squared_hinge, ImpostorForm::hinge_sq_distance}) {
        for (PairLabel label : {PairLabel::genuine, PairLabel::impostor}) {
            Vec z_p(dim), z_f(dim);
            // Keep the pair away from the hinge kinks.
            for (int attempt = 0; attempt < 100; ++attempt) {
                for (double& v : z_p) v = rng.uniform(-1.0, 1.0);
                for (double& v : z_f) v = rng.uniform(-1.0, 1.0);
                const double d = euclidean_distance(z_p, z_f);
                const double d_sq_gap = std::fabs(margin - d * d);
                if (d > 0.05 && std::fabs(d - margin) > 0.05 && d_sq_gap > 0.05) break;
            }

            Vec d_p, d_f;
            contrastive_pair_grad(z_p, z_f, label, margin, form, 1.0, d_p, d_f);

            auto loss_at = [&]() {
                return contrastive_pair_loss(z_p, z_f, label, margin, form);
            };
            for (int side = 0; side < 2; ++side) {
                Vec& z = side == 0 ? z_p : z_f;
                const Vec& analytic = side == 0 ? d_p : d_f;
                for (int i = 0; i < dim; ++i) {
                    const double keep = z[i];
                    z[i] = keep + report.epsilon;
                    const double hi = loss_at();
                    z[i] = keep - report.epsilon;
                    const double lo = loss_at();
                    z[i] = keep;
                    const double numeric = (hi - lo) / (2.0 * report.epsilon);
                    const double err = rel_error(analytic[i], numeric);
                    if (err > report.max_rel_error) {
                        report.max_rel_error = err;
                        report.worst_param = (side == 0 ? "z_profile[" : "z_frontal[") +
                                             std::to_string(i) + "] " + to_string(form);
                    }
                }
            }
        }
    }
    report.pass = report.max_rel_error < report.threshold;
    return report;
}

GradCheckReport grad_check_pab(std::uint64_t seed) {
    GradCheckReport report;
    report.component = "pab";
    report.threshold = 1e-4;
    report.epsilon = 1e-5;

    for (SpamVariant variant : {SpamVariant::conv3x3_stride2, SpamVariant::conv1x1_maxpool}) {
        Rng rng(mix_seed(seed, 202));
        PabParams params = PabParams::init(4, 4, 3, variant,
                                           AttentionOrder::channel_then_spatial, rng);
        Tensor3 pose(4, 5, 5), target(4, 2, 2), readout(4, 2, 2);
        for (double& v : pose.v) v = rng.uniform(-1.0, 1.0);
        for (double& v : target.v) v = rng.uniform(-1.0, 1.0);
        for (double& v : readout.v) v = rng.uniform(-1.0, 1.0);

        auto scalar = [&]() {
            const Tensor3 out = pab_forward(pose, target, params);
            double acc = 0.0;
            for (std::size_t i = 0; i < out.v.size(); ++i) acc += readout.v[i] * out.v[i];
            return acc;
        };

        PabCache cache;
        pab_forward(pose, target, params, &cache);
        PabGrads grads(params);
        pab_backward(params, cache, readout, grads);

        struct Entry {
            const char* name;
            Vec* values;
            const Vec* grad;
        };
        const std::string tag = to_string(variant);
        Entry entries[] = {
            {"mlp1.w1", &params.mlp1.w1.v, &grads.mlp1.w1.v},
            {"mlp1.b1", &params.mlp1.b1, &grads.mlp1.b1},
            {"mlp1.w2", &params.mlp1.w2.v, &grads.mlp1.w2.v},
            {"mlp1.b2", &params.mlp1.b2, &grads.mlp1.b2},
            {"mlp2.w1", &params.mlp2.w1.v, &grads.mlp2.w1.v},
            {"mlp2.b1", &params.mlp2.b1, &grads.mlp2.b1},
            {"mlp2.w2", &params.mlp2.w2.v, &grads.mlp2.w2.v},
            {"mlp2.b2", &params.mlp2.b2, &grads.mlp2.b2},
            {"spam.conv.w", &params.conv.w, &grads.conv_w},
            {"spam.conv.b", &params.conv.b, &grads.conv_b},
        };
        for (const auto& e : entries) {
            for (std::size_t i = 0; i < e.values->size(); ++i) {
                double& p = (*e.values)[i];
                const double keep = p;
                p = keep + report.epsilon;
                const double hi = scalar();
                p = keep - report.epsilon;
                const double lo = scalar();
                p = keep;
                const double numeric = (hi - lo) / (2.0 * report.epsilon);
                const double err = rel_error((*e.grad)[i], numeric);
                if (err > report.max_rel_error) {
                    report.max_rel_error = err;
                    report.worst_param =
                        tag + ":" + e.name + "[" + std::to_string(i) + "]";
                }
            }
        }
    }
    report.pass = report.max_rel_error < report.threshold;
    return report;
}

GradCheckReport grad_check(const std::string& component, std::uint64_t seed) {
    if (component == "loss") return grad_check_loss(seed);
    if (component == "pab") return grad_check_pab(seed);
    throw ConfigError("unknown gradcheck component: " + component +
                      " (expected 'loss' or 'pab')");
}

}  // namespace pabnet
