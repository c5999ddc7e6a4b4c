#include "pabnet/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "pabnet/checkpoint.hpp"
#include "pabnet/embedding_io.hpp"
#include "pabnet/errors.hpp"
#include "pabnet/metrics.hpp"
#include "pabnet/trainer.hpp"

namespace fs = std::filesystem;

namespace pabnet {

namespace {

std::string fmt(double v, const char* format = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), format, v);
    return buf;
}

std::ofstream open_table(const std::string& path, const std::string& config_echo,
                         const std::string& protocol) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open output table: " + path);
    f << kMetricsHeader << "\n";
    f << "#cfg\t" << config_echo << "\n";
    f << "#protocol\t" << protocol << "\n";
    return f;
}

double pair_score(const Vec& a, const Vec& b, const std::string& metric) {
    if (metric == "euclidean") return -euclidean_distance(a, b);
    return cosine_similarity(a, b);
}

std::vector<ManifestRecord> records_of(const EmbeddingFile& emb) {
    std::vector<ManifestRecord> records;
    records.reserve(emb.records.size());
    for (const auto& r : emb.records) records.push_back({r.id, r.identity, r.yaw_degrees, ""});
    return records;
}

ScoreSet score_pairs(const EmbeddingFile& emb, const std::vector<PairDescriptor>& pairs,
                     const std::string& metric) {
    ScoreSet scores;
    for (const auto& p : pairs) {
        const double s = pair_score(emb.records[p.profile_index].values,
                                    emb.records[p.frontal_index].values, metric);
        (p.label == PairLabel::genuine ? scores.genuine : scores.impostor).push_back(s);
    }
    return scores;
}

}  // namespace

int cmd_synth(const RunConfig& config, const std::string& out_dir, std::ostream& out) {
    const SynthDataset ds = generate_synthetic(config.synth_config());
    const std::string manifest = write_dataset(ds, out_dir);

    std::set<std::string> identities;
    std::map<int, int> bucket_counts;
    int frontal = 0;
    for (const auto& r : ds.records) {
        identities.insert(r.identity);
        if (view_of(r.yaw_degrees, config.frontal_threshold_deg) == View::frontal)
            ++frontal;
        else
            ++bucket_counts[yaw_bucket(r.yaw_degrees)];
    }

    out << "wrote " << ds.records.size() << " images for " << identities.size()
        << " identities to " << out_dir << "\n";
    out << "manifest: " << manifest << "\n";
    out << "frontal records: " << frontal << "\n";
    for (const auto& [bucket, count] : bucket_counts)
        out << "profile records in +-" << bucket << " bucket: " << count << "\n";
    return kExitOk;
}

int cmd_train(const RunConfig& config, const TrainPaths& paths, std::ostream& out) {
    const ModelConfig mcfg = config.model_config();
    const TrainConfig tcfg = config.train_config();

    const auto all_samples = load_samples(paths.manifest, config.frontal_threshold_deg);
    const auto all_records = read_manifest(paths.manifest);

    // Train on the records tagged "train"; fall back to everything when the
    // manifest carries no such tag.
    std::vector<ImageSample> samples;
    std::vector<ManifestRecord> records;
    for (std::size_t i = 0; i < all_records.size(); ++i) {
        if (all_records[i].split == "train") {
            samples.push_back(all_samples[i]);
            records.push_back(all_records[i]);
        }
    }
    if (records.empty()) {
        samples = all_samples;
        records = all_records;
    }

    CoupledNet net = CoupledNet::init(mcfg, config.seed);
    std::unique_ptr<YawPoseNet> pose;
    if (mcfg.attention_enabled) {
        pose = std::make_unique<YawPoseNet>(YawPoseNet::build(mcfg, config.seed));
        pose->pretrain(samples, mcfg.pose_pretrain_steps, mcfg.pose_pretrain_batch,
                       mcfg.pose_pretrain_lr, config.seed);
        out << "pose provider pretrained for " << mcfg.pose_pretrain_steps << " steps\n";
    }

    ParamRefs all_params;
    net.collect_params(all_params);
    if (pose) pose->collect_params(all_params);
    // Parameters live in float32 in the checkpoint; snap them now so the
    // saved file reproduces the in-memory model exactly.
    quantize_params_f32(all_params);

    const TrainLog log = train(net, pose.get(), samples, records, tcfg);

    save_checkpoint(paths.checkpoint, config.to_json(), all_params);
    const std::string log_path =
        paths.trainlog.empty() ? paths.checkpoint + ".trainlog.tsv" : paths.trainlog;
    write_train_log(log_path, log, config.echo());

    out << "trained " << tcfg.steps << " steps on " << records.size() << " records\n";
    if (!log.entries.empty()) {
        out << "first loss: " << fmt(log.entries.front().loss) << "\n";
        out << "last loss: " << fmt(log.entries.back().loss) << "\n";
    }
    out << "checkpoint: " << paths.checkpoint << "\n";
    out << "trainlog: " << log_path << "\n";
    return kExitOk;
}

int cmd_embed(const EmbedOptions& options, std::ostream& out) {
    const CheckpointData data = load_checkpoint(options.checkpoint);
    const RunConfig config = RunConfig::from_json(data.config);
    const ModelConfig mcfg = config.model_config();

    CoupledNet net = CoupledNet::init(mcfg, config.seed);
    ParamRefs net_params;
    net.collect_params(net_params);
    restore_params(data, net_params);

    std::unique_ptr<PoseFeatureProvider> pose;
    if (mcfg.attention_enabled) {
        if (!options.pose_features.empty()) {
            pose = std::make_unique<FilePoseProvider>(
                FilePoseProvider::load(options.pose_features));
        } else {
            auto net_pose = std::make_unique<YawPoseNet>(YawPoseNet::build(mcfg, config.seed));
            ParamRefs pose_params;
            net_pose->collect_params(pose_params);
            restore_params(data, pose_params);
            net_pose->mark_initialized();
            pose = std::move(net_pose);
        }
        if (pose->channels() != mcfg.pose_channels || pose->spatial() != mcfg.pose_spatial)
            throw FormatError("pose provider shape " + std::to_string(pose->channels()) + "x" +
                              std::to_string(pose->spatial()) + "x" +
                              std::to_string(pose->spatial()) +
                              " does not match the checkpoint configuration");
    }

    auto samples = load_samples(options.manifest, config.frontal_threshold_deg);
    const auto records = read_manifest(options.manifest);
    EmbeddingFile emb;
    emb.dim = mcfg.embedding_dim;
    emb.metric = config.score_metric;
    emb.config_echo = config.echo();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!options.split.empty() && records[i].split != options.split) continue;
        const ImageSample& s = samples[i];
        EmbeddingRecord r;
        r.id = s.id;
        r.identity = s.identity;
        r.yaw_degrees = s.yaw_degrees;
        r.values = s.view == View::frontal ? net.encode_frontal(s)
                                           : net.encode_profile(s, pose.get());
        emb.records.push_back(std::move(r));
    }
    if (emb.records.empty()) throw InvalidInputError("no records to embed after split filter");

    write_embeddings(options.out_path, emb);
    out << "embedded " << emb.records.size() << " records (dim " << emb.dim << ") to "
        << options.out_path << "\n";
    return kExitOk;
}

namespace {

int eval_verify(const EmbeddingFile& emb, const RunConfig& config, const std::string& out_dir,
                std::ostream& out) {
    const auto records = records_of(emb);
    Rng rng(mix_seed(config.seed, 0xE7A1));
    const auto pairs =
        sample_balanced_pairs(records, config.eval_pairs, rng, config.frontal_threshold_deg);
    const ScoreSet scores = score_pairs(emb, pairs, emb.metric);

    const auto curve = roc_curve(scores);
    const double eer_value = eer(scores);

    auto roc_table = open_table((fs::path(out_dir) / "roc.tsv").string(), emb.config_echo,
                                "verify");
    roc_table << "threshold\tfar\tgar\n";
    for (const auto& p : curve)
        roc_table << fmt(p.threshold, "%.10g") << "\t" << fmt(p.far, "%.10g") << "\t"
                  << fmt(p.gar, "%.10g") << "\n";

    auto summary = open_table((fs::path(out_dir) / "verify_summary.tsv").string(),
                              emb.config_echo, "verify");
    summary << "metric\tvalue\n";
    summary << "n_genuine\t" << scores.genuine.size() << "\n";
    summary << "n_impostor\t" << scores.impostor.size() << "\n";
    summary << "eer\t" << fmt(eer_value, "%.10g") << "\n";
    out << "verify: " << scores.genuine.size() << " genuine / " << scores.impostor.size()
        << " impostor pairs\n";
    out << "eer: " << fmt(eer_value) << "\n";
    for (double target : config.far_targets) {
        const double gar = gar_at_far(scores, target);
        summary << "gar_at_far_" << fmt(target, "%g") << "\t" << fmt(gar, "%.10g") << "\n";
        out << "gar@far=" << fmt(target, "%g") << ": " << fmt(gar) << "\n";
    }

    const Histogram hist = similarity_histogram(scores, config.hist_bins);
    auto hist_table = open_table((fs::path(out_dir) / "score_histogram.tsv").string(),
                                 emb.config_echo, "verify");
    hist_table << "bin_low\tbin_high\tgenuine_density\timpostor_density\n";
    for (std::size_t i = 0; i < hist.bin_low.size(); ++i)
        hist_table << fmt(hist.bin_low[i], "%.10g") << "\t" << fmt(hist.bin_high[i], "%.10g")
                   << "\t" << fmt(hist.genuine_density[i], "%.10g") << "\t"
                   << fmt(hist.impostor_density[i], "%.10g") << "\n";
    return kExitOk;
}

int eval_identify(const EmbeddingFile& emb, const RunConfig& config, const std::string& out_dir,
                  std::ostream& out) {
    // Gallery: the closest-to-frontal record per identity, in file order.
    std::map<std::string, int> gallery_pick;
    for (std::size_t i = 0; i < emb.records.size(); ++i) {
        const auto& r = emb.records[i];
        const auto it = gallery_pick.find(r.identity);
        if (it == gallery_pick.end() ||
            std::fabs(r.yaw_degrees) <
                std::fabs(emb.records[it->second].yaw_degrees))
            gallery_pick[r.identity] = static_cast<int>(i);
    }

    std::vector<Vec> gallery;
    std::vector<std::string> gallery_labels;
    std::set<int> gallery_indices;
    for (const auto& [identity, idx] : gallery_pick) {
        const auto& r = emb.records[idx];
        if (view_of(r.yaw_degrees, config.frontal_threshold_deg) != View::frontal)
            throw ProtocolError("identity " + identity + " has no frontal gallery image");
        gallery.push_back(r.values);
        gallery_labels.push_back(identity);
        gallery_indices.insert(idx);
    }

    std::vector<Vec> probes;
    std::vector<std::string> probe_labels;
    std::vector<ManifestRecord> probe_records;
    for (std::size_t i = 0; i < emb.records.size(); ++i) {
        if (gallery_indices.count(static_cast<int>(i))) continue;
        probes.push_back(emb.records[i].values);
        probe_labels.push_back(emb.records[i].identity);
        probe_records.push_back(
            {emb.records[i].id, emb.records[i].identity, emb.records[i].yaw_degrees, ""});
    }
    if (probes.empty()) throw ProtocolError("no probe records outside the gallery");

    const int max_rank = std::min<int>(config.rank_k, static_cast<int>(gallery.size()));
    const CmcCurve cmc =
        rank_k_identification(probes, probe_labels, gallery, gallery_labels, max_rank);

    auto cmc_table = open_table((fs::path(out_dir) / "cmc.tsv").string(), emb.config_echo,
                                "identify");
    cmc_table << "#tie_break\tstable-gallery-order\n";
    cmc_table << "rank\taccuracy\n";
    for (int k = 0; k < max_rank; ++k)
        cmc_table << (k + 1) << "\t" << fmt(cmc.accuracy[k], "%.10g") << "\n";

    // Rank-1 per |yaw| bucket, widest pose first.
    const auto buckets = bucket_by_yaw(probe_records);
    auto bucket_table = open_table((fs::path(out_dir) / "rank1_by_yaw.tsv").string(),
                                   emb.config_echo, "identify");
    bucket_table << "bucket\tn_probes\trank1\n";
    out << "identify: " << probes.size() << " probes vs " << gallery.size()
        << " gallery identities\n";
    for (auto it = buckets.rbegin(); it != buckets.rend(); ++it) {
        std::vector<Vec> bucket_probes;
        std::vector<std::string> bucket_labels;
        for (int idx : it->second) {
            bucket_probes.push_back(probes[idx]);
            bucket_labels.push_back(probe_labels[idx]);
        }
        const CmcCurve bucket_cmc =
            rank_k_identification(bucket_probes, bucket_labels, gallery, gallery_labels, 1);
        bucket_table << "+-" << it->first << "\t" << it->second.size() << "\t"
                     << fmt(bucket_cmc.accuracy[0], "%.10g") << "\n";
        out << "rank-1 @ +-" << it->first << ": " << fmt(bucket_cmc.accuracy[0]) << "\n";
    }
    out << "rank-" << max_rank << " accuracy: " << fmt(cmc.accuracy[max_rank - 1]) << "\n";
    return kExitOk;
}

int eval_folds(const EmbeddingFile& emb, const RunConfig& config, const std::string& out_dir,
               std::ostream& out) {
    const auto records = records_of(emb);

    // Identities are split into disjoint folds first, then each fold gets its
    // own balanced pair sample, so every fold carries both pair classes.
    const auto groups = partition_identities(records, config.n_folds, config.seed);
    const int pairs_per_fold = std::max(2, config.eval_pairs / config.n_folds / 2 * 2);
    std::vector<std::vector<PairDescriptor>> folds(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        std::vector<ManifestRecord> group_records;
        for (int idx : groups[g]) group_records.push_back(records[idx]);
        Rng rng(mix_seed(config.seed, 0xF01D + g));
        const auto local = sample_balanced_pairs(group_records, pairs_per_fold, rng,
                                                 config.frontal_threshold_deg);
        for (const auto& p : local)
            folds[g].push_back({groups[g][p.profile_index], groups[g][p.frontal_index],
                                p.label});
    }

    std::vector<ScoreSet> fold_scores(folds.size());
    for (std::size_t f = 0; f < folds.size(); ++f)
        fold_scores[f] = score_pairs(emb, folds[f], emb.metric);

    Vec accuracies, eers;
    auto table = open_table((fs::path(out_dir) / "folds.tsv").string(), emb.config_echo,
                            "folds");
    table << "fold\tn_genuine\tn_impostor\taccuracy\teer\n";
    for (std::size_t f = 0; f < folds.size(); ++f) {
        // Threshold fitted on the other folds, applied to this one.
        ScoreSet rest;
        for (std::size_t g = 0; g < folds.size(); ++g) {
            if (g == f) continue;
            rest.genuine.insert(rest.genuine.end(), fold_scores[g].genuine.begin(),
                                fold_scores[g].genuine.end());
            rest.impostor.insert(rest.impostor.end(), fold_scores[g].impostor.begin(),
                                 fold_scores[g].impostor.end());
        }
        const double threshold = best_accuracy_threshold(rest);
        const double acc = verification_accuracy(fold_scores[f], threshold);
        const double fold_eer = eer(fold_scores[f]);
        accuracies.push_back(acc);
        eers.push_back(fold_eer);
        table << f << "\t" << fold_scores[f].genuine.size() << "\t"
              << fold_scores[f].impostor.size() << "\t" << fmt(acc, "%.10g") << "\t"
              << fmt(fold_eer, "%.10g") << "\n";
    }

    const auto [acc_mean, acc_std] = kfold_stats(accuracies);
    const auto [eer_mean, eer_std] = kfold_stats(eers);
    const std::string acc_cell = fmt(acc_mean * 100.0, "%.2f") + "(" +
                                 fmt(acc_std * 100.0, "%.2f") + ")";
    const std::string eer_cell = fmt(eer_mean * 100.0, "%.2f") + "(" +
                                 fmt(eer_std * 100.0, "%.2f") + ")";
    table << "#summary\taccuracy\t" << acc_cell << "\teer\t" << eer_cell << "\n";
    out << "folds: " << folds.size() << " identity-disjoint folds, " << pairs_per_fold
        << " pairs each\n";
    out << "accuracy: " << acc_cell << "\n";
    out << "eer: " << eer_cell << "\n";
    return kExitOk;
}

}  // namespace

int cmd_eval(const EvalOptions& options, std::ostream& out) {
    const EmbeddingFile emb = read_embeddings(options.embeddings);

    RunConfig config;
    if (!options.config_path.empty()) {
        config = RunConfig::from_file(options.config_path);
    } else {
        nlohmann::json echoed;
        try {
            echoed = nlohmann::json::parse(emb.config_echo);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("embedding file carries an unparseable #cfg line: ") +
                              e.what());
        }
        config = RunConfig::from_json(echoed);
    }
    if (options.seed_override) config.seed = options.seed;

    fs::create_directories(options.out_dir);
    if (options.protocol == "verify") return eval_verify(emb, config, options.out_dir, out);
    if (options.protocol == "identify") return eval_identify(emb, config, options.out_dir, out);
    if (options.protocol == "folds") return eval_folds(emb, config, options.out_dir, out);
    throw ConfigError("unknown eval protocol: " + options.protocol +
                      " (expected verify, identify or folds)");
}

int cmd_gradcheck(const std::string& component, std::uint64_t seed, std::ostream& out) {
    const GradCheckReport report = grad_check(component, seed);
    out << "component: " << report.component << "\n";
    out << "epsilon: " << fmt(report.epsilon, "%g") << "\n";
    out << "max relative error: " << fmt(report.max_rel_error, "%.6g") << " (threshold "
        << fmt(report.threshold, "%g") << ")\n";
    if (!report.pass)
        throw VerificationError("gradient check failed for " + report.component +
                                ": worst parameter " + report.worst_param + " at error " +
                                fmt(report.max_rel_error, "%.6g"));
    out << "pass\n";
    return kExitOk;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"pose-attention coupled embedding toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_path, manifest, checkpoint, trainlog, split, pose_features;
    std::string embeddings, protocol, component = "loss";
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool deterministic = false;  // single-threaded already; accepted for interface stability

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "configuration file (JSON)");
        cmd->add_option("--seed", seed, "override the configured seed")
            ->each([&](const std::string&) { seed_given = true; });
        cmd->add_flag("--deterministic", deterministic, "force byte-stable single-threaded mode");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate the synthetic dataset");
    add_common(synth);
    synth->add_option("--out", out_path, "output directory")->required();

    CLI::App* train_cmd = app.add_subcommand("train", "train the coupled network");
    add_common(train_cmd);
    train_cmd->add_option("--manifest", manifest, "dataset manifest")->required();
    train_cmd->add_option("--out", out_path, "output checkpoint path")->required();
    train_cmd->add_option("--trainlog", trainlog, "train log path");

    CLI::App* embed = app.add_subcommand("embed", "embed manifest records with a checkpoint");
    add_common(embed);
    embed->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    embed->add_option("--manifest", manifest, "dataset manifest")->required();
    embed->add_option("--out", out_path, "output embedding file")->required();
    embed->add_option("--split", split, "embed only records with this split tag");
    embed->add_option("--pose-features", pose_features, "externally exported pose feature maps");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate an embedding file");
    add_common(eval_cmd);
    eval_cmd->add_option("--embeddings", embeddings, "embedding file")->required();
    eval_cmd->add_option("--protocol", protocol, "verify | identify | folds")->required();
    eval_cmd->add_option("--out", out_path, "output directory for metric tables")->required();

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
    add_common(gradcheck);
    gradcheck->add_option("--component", component, "loss | pab")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitConfig;
    }

    try {
        auto load_config = [&]() {
            RunConfig c = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
            if (seed_given) c.seed = seed;
            return c;
        };

        if (synth->parsed()) return cmd_synth(load_config(), out_path, std::cout);
        if (train_cmd->parsed())
            return cmd_train(load_config(), {manifest, out_path, trainlog}, std::cout);
        if (embed->parsed())
            return cmd_embed({checkpoint, manifest, out_path, split, pose_features}, std::cout);
        if (eval_cmd->parsed()) {
            EvalOptions opt;
            opt.embeddings = embeddings;
            opt.protocol = protocol;
            opt.out_dir = out_path;
            opt.config_path = config_path;
            opt.seed_override = seed_given;
            opt.seed = seed;
            return cmd_eval(opt, std::cout);
        }
        if (gradcheck->parsed())
            return cmd_gradcheck(component, seed_given ? seed : 7, std::cout);
        return kExitConfig;
    } catch (const DivergenceError& e) {
        std::cerr << "error (divergence): " << e.what() << "\n";
        return kExitDivergence;
    } catch (const FormatError& e) {
        std::cerr << "error (format): " << e.what() << "\n";
        return kExitFormat;
    } catch (const ShapeError& e) {
        std::cerr << "error (shape): " << e.what() << "\n";
        return kExitFormat;
    } catch (const ProtocolError& e) {
        std::cerr << "error (protocol): " << e.what() << "\n";
        return kExitProtocol;
    } catch (const VerificationError& e) {
        std::cerr << "error (verification): " << e.what() << "\n";
        return kExitVerification;
    } catch (const ConfigError& e) {
        std::cerr << "error (config): " << e.what() << "\n";
        return kExitConfig;
    } catch (const InvalidInputError& e) {
        std::cerr << "error (input): " << e.what() << "\n";
        return kExitConfig;
    } catch (const StateError& e) {
        std::cerr << "error (state): " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}

}  // namespace pabnet
