#include "pabnet/network.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "pabnet/errors.hpp"
#include "pabnet/optimizer.hpp"

namespace pabnet {

namespace {

// Conv widths for a prefix running from `image_size` down to extent `to`.
std::vector<int> plan_widths(const std::vector<int>& intermediate, int final_channels,
                             int image_size, int to, const char* what) {
    const auto chain = conv_extent_chain(image_size, to);
    if (chain.size() < 2)
        throw ConfigError(std::string(what) + ": extent " + std::to_string(to) +
                          " is not reachable from image_size " + std::to_string(image_size) +
                          " with kernel-3/stride-2 layers");
    const std::size_t n_layers = chain.size() - 1;
    if (intermediate.size() != n_layers - 1)
        throw ConfigError(std::string(what) + ": needs " + std::to_string(n_layers - 1) +
                          " intermediate widths for image_size " + std::to_string(image_size) +
                          " -> " + std::to_string(to) + ", got " +
                          std::to_string(intermediate.size()));
    std::vector<int> widths = intermediate;
    widths.push_back(final_channels);
    return widths;
}

ConvStack build_stack(const std::vector<int>& widths, std::uint64_t seed) {
    ConvStack stack;
    Rng rng(seed);
    int in_ch = 3;
    for (int w : widths) {
        stack.layers.push_back(ConvLayer::init(in_ch, w, 3, 2, rng));
        in_ch = w;
    }
    return stack;
}

void collect_stack(ConvStack& stack, const std::string& prefix, ParamRefs& out) {
    for (std::size_t i = 0; i < stack.layers.size(); ++i) {
        ConvLayer& l = stack.layers[i];
        const std::string base = prefix + ".conv" + std::to_string(i);
        out.push_back({base + ".w",
                       {static_cast<std::size_t>(l.out_ch), static_cast<std::size_t>(l.in_ch),
                        static_cast<std::size_t>(l.kernel), static_cast<std::size_t>(l.kernel)},
                       &l.w});
        out.push_back({base + ".b", {static_cast<std::size_t>(l.out_ch)}, &l.b});
    }
}

void collect_mlp(MlpParams& mlp, const std::string& prefix, ParamRefs& out) {
    out.push_back({prefix + ".w1",
                   {static_cast<std::size_t>(mlp.w1.rows), static_cast<std::size_t>(mlp.w1.cols)},
                   &mlp.w1.v});
    out.push_back({prefix + ".b1", {mlp.b1.size()}, &mlp.b1});
    out.push_back({prefix + ".w2",
                   {static_cast<std::size_t>(mlp.w2.rows), static_cast<std::size_t>(mlp.w2.cols)},
                   &mlp.w2.v});
    out.push_back({prefix + ".b2", {mlp.b2.size()}, &mlp.b2});
}

}  // namespace

void ModelConfig::validate() const {
    if (image_size < 8) throw ConfigError("image_size must be at least 8");
    if (target_channels < 1) throw ConfigError("target_channels must be positive");
    if (target_size < 1) throw ConfigError("target_size must be positive");
    if (embedding_dim < 1) throw ConfigError("embedding_dim must be positive");
    if (!(frontal_threshold_deg >= 0.0 && frontal_threshold_deg < 90.0))
        throw ConfigError("frontal_threshold_deg must lie in [0, 90)");
    for (int w : stage_widths)
        if (w < 1) throw ConfigError("stage_widths entries must be positive");
    plan_widths(stage_widths, target_channels, image_size, target_size, "stage_widths");

    if (attention_enabled) {
        if (pab_hidden < 1) throw ConfigError("pab_hidden must be positive");
        if (pose_channels < 1) throw ConfigError("pose_channels must be positive");
        for (int w : pose_widths)
            if (w < 1) throw ConfigError("pose_widths entries must be positive");
        plan_widths(pose_widths, pose_channels, image_size, pose_spatial, "pose_widths");
        // Both spatial heads shrink by (n-3)/2+1.
        if (pose_spatial < 3 || (pose_spatial - 3) / 2 + 1 != target_size)
            throw ConfigError("pose_spatial " + std::to_string(pose_spatial) +
                              " does not map onto target_size " + std::to_string(target_size) +
                              " through the spatial attention head");
        if (pose_pretrain_steps < 0 || pose_pretrain_batch < 1)
            throw ConfigError("pose pretraining needs a non-negative step count and a positive batch");
        if (!(pose_pretrain_lr > 0.0)) throw ConfigError("pose_pretrain_lr must be positive");
    }
}

// --- YawPoseNet -------------------------------------------------------------

YawPoseNet YawPoseNet::build(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    YawPoseNet net;
    const auto widths = plan_widths(config.pose_widths, config.pose_channels, config.image_size,
                                    config.pose_spatial, "pose_widths");
    net.stack_ = build_stack(widths, mix_seed(seed, 21));
    Rng rng(mix_seed(seed, 22));
    const double bound = std::sqrt(6.0 / static_cast<double>(config.pose_channels));
    net.head_w.assign(config.pose_channels, 0.0);
    for (double& w : net.head_w) w = rng.uniform(-bound, bound);
    net.head_b.assign(1, rng.uniform(-bound, bound));
    net.channels_ = config.pose_channels;
    net.spatial_ = config.pose_spatial;
    return net;
}

double YawPoseNet::predict_yaw_norm(const Tensor3& pixels) const {
    const Tensor3 map = stack_.forward(pixels);
    const Vec pooled = global_average_pool(map);
    double acc = head_b[0];
    for (std::size_t i = 0; i < pooled.size(); ++i) acc += head_w[i] * pooled[i];
    return acc;
}

void YawPoseNet::pretrain(const std::vector<ImageSample>& samples, int steps, int batch_size,
                          double lr, std::uint64_t seed) {
    if (samples.empty()) throw InvalidInputError("pose pretraining needs samples");

    ParamRefs refs;
    collect_params(refs);
    std::vector<Vec*> param_ptrs;
    std::vector<Vec> grad_bufs(refs.size());
    std::vector<const Vec*> grad_ptrs;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        param_ptrs.push_back(refs[i].data);
        grad_bufs[i].assign(refs[i].data->size(), 0.0);
        grad_ptrs.push_back(&grad_bufs[i]);
    }

    AdamState state;
    AdamConfig adam;
    adam.learning_rate = lr;
    adam.beta1 = 0.9;  // plain regression target, no coupling
    adam.beta2 = 0.999;

    const std::size_t head_w_idx = refs.size() - 2;
    const std::size_t head_b_idx = refs.size() - 1;

    for (int step = 0; step < steps; ++step) {
        Rng rng(mix_seed(seed, 0x705E + static_cast<std::uint64_t>(step)));
        for (auto& g : grad_bufs) std::fill(g.begin(), g.end(), 0.0);

        std::vector<ConvLayerGrads> stack_grads;
        for (int b = 0; b < batch_size; ++b) {
            const ImageSample& s = samples[rng.index(samples.size())];
            ConvStackCache cache;
            const Tensor3 map = stack_.forward(s.pixels, &cache);
            const Vec pooled = global_average_pool(map);
            double pred = head_b[0];
            for (std::size_t i = 0; i < pooled.size(); ++i) pred += head_w[i] * pooled[i];
            const double err = pred - s.yaw_degrees / 90.0;
            const double dpred = 2.0 * err / batch_size;

            for (std::size_t i = 0; i < pooled.size(); ++i)
                grad_bufs[head_w_idx][i] += dpred * pooled[i];
            grad_bufs[head_b_idx][0] += dpred;

            Tensor3 dmap(map.channels, map.height, map.width);
            const double inv_hw = 1.0 / map.spatial_size();
            for (int c = 0; c < map.channels; ++c) {
                const double dc = dpred * head_w[c] * inv_hw;
                for (int i = 0; i < map.spatial_size(); ++i)
                    dmap.v[static_cast<std::size_t>(c) * map.spatial_size() + i] = dc;
            }
            stack_.backward(cache, dmap, stack_grads);
        }

        for (std::size_t li = 0; li < stack_.layers.size(); ++li) {
            grad_bufs[2 * li] = stack_grads[li].w;
            grad_bufs[2 * li + 1] = stack_grads[li].b;
        }
        adam_step(param_ptrs, grad_ptrs, state, adam);
    }
    initialized_ = true;
}

Tensor3 YawPoseNet::features(const ImageSample& sample) const {
    if (!initialized_)
        throw StateError("pose provider used before initialization");
    return stack_.forward(sample.pixels);
}

void YawPoseNet::collect_params(ParamRefs& out) {
    collect_stack(stack_, "pose", out);
    out.push_back({"pose.head.w", {head_w.size()}, &head_w});
    out.push_back({"pose.head.b", {1}, &head_b});
}

// --- FilePoseProvider --------------------------------------------------------

namespace {

float read_f32_le(std::istream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    const std::uint32_t u = static_cast<std::uint32_t>(b[0]) |
                            (static_cast<std::uint32_t>(b[1]) << 8) |
                            (static_cast<std::uint32_t>(b[2]) << 16) |
                            (static_cast<std::uint32_t>(b[3]) << 24);
    return std::bit_cast<float>(u);
}

void write_f32_le(std::ostream& f, float value) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(value);
    const unsigned char b[4] = {static_cast<unsigned char>(u & 0xff),
                                static_cast<unsigned char>((u >> 8) & 0xff),
                                static_cast<unsigned char>((u >> 16) & 0xff),
                                static_cast<unsigned char>((u >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

void write_pose_features(const std::string& path, const std::vector<std::string>& ids,
                         const std::vector<Tensor3>& maps) {
    if (ids.size() != maps.size()) throw ShapeError("pose feature id/map count mismatch");
    if (ids.empty()) throw InvalidInputError("no pose features to write");
    const int c = maps[0].channels;
    const int s = maps[0].height;
    for (const auto& m : maps)
        if (m.channels != c || m.height != s || m.width != s)
            throw ShapeError("pose feature maps must share one shape");

    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open pose feature file for writing: " + path);
    f << kPoseFeatureHeader << "\t" << c << "\t" << s << "\t" << ids.size() << "\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        f << ids[i] << "\n";
        for (double v : maps[i].v) write_f32_le(f, static_cast<float>(v));
    }
    if (!f) throw FormatError("failed writing pose features: " + path);
}

FilePoseProvider FilePoseProvider::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open pose feature file: " + path);
    std::string header;
    if (!std::getline(f, header)) throw FormatError("empty pose feature file: " + path);
    std::stringstream ss(header);
    std::string magic;
    int channels = 0, spatial = 0;
    std::size_t count = 0;
    ss >> magic >> channels >> spatial >> count;
    if (magic != kPoseFeatureHeader || channels < 1 || spatial < 1)
        throw FormatError("bad pose feature header: " + header);

    FilePoseProvider p;
    p.channels_ = channels;
    p.spatial_ = spatial;
    for (std::size_t i = 0; i < count; ++i) {
        std::string id;
        if (!std::getline(f, id)) throw FormatError("truncated pose feature file: " + path);
        Tensor3 map(channels, spatial, spatial);
        for (double& v : map.v) v = static_cast<double>(read_f32_le(f));
        if (!f) throw FormatError("truncated pose feature data for " + id);
        p.maps_[id] = std::move(map);
    }
    return p;
}

Tensor3 FilePoseProvider::features(const ImageSample& sample) const {
    const auto it = maps_.find(sample.id);
    if (it == maps_.end())
        throw StateError("no exported pose features for sample " + sample.id);
    return it->second;
}

// --- CoupledNet ---------------------------------------------------------------

CoupledNet CoupledNet::init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    CoupledNet net;
    net.cfg_ = config;
    const auto widths = plan_widths(config.stage_widths, config.target_channels,
                                    config.image_size, config.target_size, "stage_widths");
    net.prefix_ = build_stack(widths, mix_seed(seed, 11));

    const double bound = std::sqrt(6.0 / static_cast<double>(config.target_channels));
    auto init_head = [&](Mat& w, Vec& b, std::uint64_t stream) {
        Rng rng(mix_seed(seed, stream));
        w = Mat(config.embedding_dim, config.target_channels);
        for (double& x : w.v) x = rng.uniform(-bound, bound);
        b.assign(config.embedding_dim, 0.0);
        for (double& x : b) x = rng.uniform(-bound, bound);
    };
    init_head(net.proj_frontal_w_, net.proj_frontal_b_, 12);
    init_head(net.proj_profile_w_, net.proj_profile_b_, 13);

    if (config.attention_enabled) {
        Rng rng(mix_seed(seed, 14));
        net.pab_ = PabParams::init(config.pose_channels, config.target_channels,
                                   config.pab_hidden, config.spam_variant,
                                   config.attention_order, rng);
    }
    return net;
}

Tensor3 CoupledNet::prefix_features(const Tensor3& pixels) const {
    return prefix_.forward(pixels);
}

Vec CoupledNet::project_frontal(const Vec& pooled) const {
    return affine(proj_frontal_w_, proj_frontal_b_, pooled);
}

Vec CoupledNet::project_profile(const Vec& pooled) const {
    return affine(proj_profile_w_, proj_profile_b_, pooled);
}

Vec CoupledNet::encode_frontal(const ImageSample& sample) const {
    if (sample.view != View::frontal)
        throw InvalidInputError("encode_frontal called with a non-frontal sample: " + sample.id);
    const Tensor3 f = prefix_features(sample.pixels);
    return project_frontal(global_average_pool(f));
}

Vec CoupledNet::encode_profile(const ImageSample& sample, const PoseFeatureProvider* pose) const {
    if (sample.view != View::profile)
        throw InvalidInputError("encode_profile called with a non-profile sample: " + sample.id);
    Tensor3 f = prefix_features(sample.pixels);
    if (pab_) {
        if (!pose) throw StateError("attention requires a pose feature provider");
        const Tensor3 p = pose->features(sample);
        f = pab_forward(p, f, *pab_);
    }
    return project_profile(global_average_pool(f));
}

void CoupledNet::collect_params(ParamRefs& out) {
    collect_stack(prefix_, "backbone", out);
    out.push_back({"frontal.proj.w",
                   {static_cast<std::size_t>(proj_frontal_w_.rows),
                    static_cast<std::size_t>(proj_frontal_w_.cols)},
                   &proj_frontal_w_.v});
    out.push_back({"frontal.proj.b", {proj_frontal_b_.size()}, &proj_frontal_b_});
    out.push_back({"profile.proj.w",
                   {static_cast<std::size_t>(proj_profile_w_.rows),
                    static_cast<std::size_t>(proj_profile_w_.cols)},
                   &proj_profile_w_.v});
    out.push_back({"profile.proj.b", {proj_profile_b_.size()}, &proj_profile_b_});
    if (pab_) {
        collect_mlp(pab_->mlp1, "pab.mlp1", out);
        collect_mlp(pab_->mlp2, "pab.mlp2", out);
        out.push_back({"pab.spam.conv.w",
                       {2, static_cast<std::size_t>(pab_->conv.kernel),
                        static_cast<std::size_t>(pab_->conv.kernel)},
                       &pab_->conv.w});
        out.push_back({"pab.spam.conv.b", {1}, &pab_->conv.b});
    }
}

ParamRefs CoupledNet::trainable_params() {
    ParamRefs all;
    collect_params(all);
    ParamRefs out;
    for (auto& p : all)
        if (p.name.rfind("backbone.", 0) != 0) out.push_back(p);
    return out;
}

Tensor3 pose_features(const ImageSample& sample, const PoseFeatureProvider& provider) {
    return provider.features(sample);
}

}  // namespace pabnet
