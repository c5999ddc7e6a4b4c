#include "pabnet/attention.hpp"

#include <algorithm>
#include <cmath>

#include "pabnet/errors.hpp"

namespace pabnet {

namespace {

void fill_fan_in_uniform(Vec& dst, int fan_in, Rng& rng) {
    // Rectifier-friendly uniform bound, sqrt(6/fan_in): keeps activation
    // scale roughly constant through stacked layers.
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& x : dst) x = rng.uniform(-bound, bound);
}

// Hidden pre-activation of one MLP branch: h = w1 u + b1.
Vec mlp_hidden(const MlpParams& p, const Vec& u) { return affine(p.w1, p.b1, u); }

// Output of one branch from its cached hidden pre-activation.
Vec mlp_output(const MlpParams& p, const Vec& h) {
    Vec a(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) a[i] = h[i] > 0.0 ? h[i] : 0.0;
    return affine(p.w2, p.b2, a);
}

// Backward through one branch of the shared MLP. dy is d(loss)/d(output of
// this branch); u and h are the branch input and hidden pre-activation.
void mlp_branch_backward(const MlpParams& p, const Vec& u, const Vec& h, const Vec& dy,
                         MlpGrads& g) {
    Vec a(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) a[i] = h[i] > 0.0 ? h[i] : 0.0;

    outer_accum(g.w2, dy, a);
    for (std::size_t i = 0; i < dy.size(); ++i) g.b2[i] += dy[i];

    Vec da(h.size(), 0.0);
    affine_transpose_accum(p.w2, dy, da);
    for (std::size_t i = 0; i < h.size(); ++i)
        if (h[i] <= 0.0) da[i] = 0.0;

    outer_accum(g.w1, da, u);
    for (std::size_t i = 0; i < da.size(); ++i) g.b1[i] += da[i];
}

// sigmoid(mlp(avg) + mlp(max)), caching both hidden pre-activations.
Vec gated_sum(const MlpParams& p, const Vec& avg, const Vec& max, Vec* h_avg_out,
              Vec* h_max_out) {
    Vec h_avg = mlp_hidden(p, avg);
    Vec h_max = mlp_hidden(p, max);
    Vec s = mlp_output(p, h_avg);
    Vec s_max = mlp_output(p, h_max);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = sigmoid(s[i] + s_max[i]);
    if (h_avg_out) *h_avg_out = std::move(h_avg);
    if (h_max_out) *h_max_out = std::move(h_max);
    return s;
}

void check_pose_input(const Tensor3& x) {
    if (x.channels < 1 || x.height < 1 || x.width < 1)
        throw InvalidInputError("feature map has empty extent: " + x.shape_str());
}

}  // namespace

MlpParams MlpParams::init(int input, int hidden, int output, Rng& rng) {
    if (input < 1 || hidden < 1 || output < 1)
        throw ConfigError("mlp dimensions must be positive");
    MlpParams p;
    p.w1 = Mat(hidden, input);
    p.b1.assign(hidden, 0.0);
    p.w2 = Mat(output, hidden);
    p.b2.assign(output, 0.0);
    fill_fan_in_uniform(p.w1.v, input, rng);
    fill_fan_in_uniform(p.b1, input, rng);
    fill_fan_in_uniform(p.w2.v, hidden, rng);
    fill_fan_in_uniform(p.b2, hidden, rng);
    return p;
}

ConvParams ConvParams::init(int kernel, int stride, Rng& rng) {
    if (kernel < 1 || stride < 1) throw ConfigError("conv kernel/stride must be positive");
    ConvParams c;
    c.kernel = kernel;
    c.stride = stride;
    c.w.assign(static_cast<std::size_t>(2) * kernel * kernel, 0.0);
    c.b.assign(1, 0.0);
    fill_fan_in_uniform(c.w, 2 * kernel * kernel, rng);
    fill_fan_in_uniform(c.b, 2 * kernel * kernel, rng);
    return c;
}

PabParams PabParams::init(int pose_channels, int target_channels, int hidden,
                          SpamVariant variant, AttentionOrder order, Rng& rng) {
    PabParams p;
    p.mlp1 = MlpParams::init(pose_channels, hidden, target_channels, rng);
    p.mlp2 = MlpParams::init(pose_channels, hidden, pose_channels, rng);
    p.conv = variant == SpamVariant::conv3x3_stride2 ? ConvParams::init(3, 2, rng)
                                                     : ConvParams::init(1, 1, rng);
    p.variant = variant;
    p.order = order;
    return p;
}

PoolStats global_pool_stats(const Tensor3& x) {
    check_pose_input(x);
    PoolStats s;
    s.avg.resize(x.channels);
    s.max.resize(x.channels);
    s.argmax.resize(x.channels);
    const int hw = x.spatial_size();
    for (int c = 0; c < x.channels; ++c) {
        const double* p = &x.v[static_cast<std::size_t>(c) * hw];
        double sum = 0.0;
        double best = p[0];
        int best_i = 0;
        for (int i = 0; i < hw; ++i) {
            sum += p[i];
            if (p[i] > best) {
                best = p[i];
                best_i = i;
            }
        }
        s.avg[c] = sum / hw;
        s.max[c] = best;
        s.argmax[c] = best_i;
    }
    return s;
}

int spam_output_size(int n, const ConvParams& conv, SpamVariant variant) {
    if (variant == SpamVariant::conv3x3_stride2) {
        if (n < conv.kernel) return 0;
        return (n - conv.kernel) / conv.stride + 1;
    }
    // 1x1 conv keeps the extent; the 3x3/stride-2 max pool shrinks it.
    if (n < 3) return 0;
    return (n - 3) / 2 + 1;
}

Vec acam_forward(const Tensor3& x, const MlpParams& mlp1) {
    check_pose_input(x);
    if (mlp1.input_dim() != x.channels)
        throw ShapeError("channel attention expects " + std::to_string(mlp1.input_dim()) +
                         " input channels, got " + std::to_string(x.channels));
    PoolStats s = global_pool_stats(x);
    return gated_sum(mlp1, s.avg, s.max, nullptr, nullptr);
}

Tensor3 spam_channel_refine(const Tensor3& x, const MlpParams& mlp2) {
    check_pose_input(x);
    if (mlp2.input_dim() != x.channels || mlp2.output_dim() != x.channels)
        throw ShapeError("refine gate must map " + std::to_string(x.channels) + " -> " +
                         std::to_string(x.channels) + " channels, got " +
                         std::to_string(mlp2.input_dim()) + " -> " +
                         std::to_string(mlp2.output_dim()));
    PoolStats s = global_pool_stats(x);
    Vec gate = gated_sum(mlp2, s.avg, s.max, nullptr, nullptr);
    Tensor3 out(x.channels, x.height, x.width);
    const int hw = x.spatial_size();
    for (int c = 0; c < x.channels; ++c) {
        const double g = gate[c];
        const double* src = &x.v[static_cast<std::size_t>(c) * hw];
        double* dst = &out.v[static_cast<std::size_t>(c) * hw];
        for (int i = 0; i < hw; ++i) dst[i] = g * src[i];
    }
    return out;
}

namespace {

// Channel-axis mean and max of a refined map, per spatial position.
void pool_over_channels(const Tensor3& x, Mat& avg, Mat& max, std::vector<int>& argmax) {
    avg = Mat(x.height, x.width);
    max = Mat(x.height, x.width);
    argmax.assign(static_cast<std::size_t>(x.height) * x.width, 0);
    const int hw = x.spatial_size();
    for (int i = 0; i < hw; ++i) {
        double sum = 0.0;
        double best = x.v[i];
        int best_c = 0;
        for (int c = 0; c < x.channels; ++c) {
            const double val = x.v[static_cast<std::size_t>(c) * hw + i];
            sum += val;
            if (val > best) {
                best = val;
                best_c = c;
            }
        }
        avg.v[i] = sum / x.channels;
        max.v[i] = best;
        argmax[i] = best_c;
    }
}

// Stride-2 3x3 convolution on the (avg, max) pair; one output channel.
Mat conv_pair(const Mat& avg, const Mat& max, const ConvParams& conv) {
    const int oh = (avg.rows - conv.kernel) / conv.stride + 1;
    const int ow = (avg.cols - conv.kernel) / conv.stride + 1;
    Mat out(oh, ow);
    for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
            double acc = conv.b[0];
            for (int ky = 0; ky < conv.kernel; ++ky) {
                for (int kx = 0; kx < conv.kernel; ++kx) {
                    const int y = i * conv.stride + ky;
                    const int x = j * conv.stride + kx;
                    acc += conv.wat(0, ky, kx) * avg.at(y, x);
                    acc += conv.wat(1, ky, kx) * max.at(y, x);
                }
            }
            out.at(i, j) = acc;
        }
    }
    return out;
}

// 3x3/stride-2 max pool; records the flat source index per output cell.
Mat max_pool_3x3_s2(const Mat& in, std::vector<int>& argmax) {
    const int oh = (in.rows - 3) / 2 + 1;
    const int ow = (in.cols - 3) / 2 + 1;
    Mat out(oh, ow);
    argmax.assign(static_cast<std::size_t>(oh) * ow, 0);
    for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
            double best = in.at(i * 2, j * 2);
            int best_idx = i * 2 * in.cols + j * 2;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const int y = i * 2 + ky;
                    const int x = j * 2 + kx;
                    if (in.at(y, x) > best) {
                        best = in.at(y, x);
                        best_idx = y * in.cols + x;
                    }
                }
            }
            out.at(i, j) = best;
            argmax[static_cast<std::size_t>(i) * ow + j] = best_idx;
        }
    }
    return out;
}

// Spatial head from the channel-refined map; fills the tail of the cache.
Mat spatial_head(const Tensor3& refined, const ConvParams& conv, SpamVariant variant,
                 PabCache* cache) {
    Mat pooled_avg, pooled_max;
    std::vector<int> pooled_argmax;
    pool_over_channels(refined, pooled_avg, pooled_max, pooled_argmax);

    Mat pre;
    Mat conv_pre;
    std::vector<int> pool_argmax;
    if (variant == SpamVariant::conv3x3_stride2) {
        if (refined.height < conv.kernel || refined.width < conv.kernel)
            throw InvalidInputError("spatial extent " + std::to_string(refined.height) + "x" +
                                    std::to_string(refined.width) +
                                    " smaller than attention kernel " +
                                    std::to_string(conv.kernel));
        pre = conv_pair(pooled_avg, pooled_max, conv);
    } else {
        if (refined.height < 3 || refined.width < 3)
            throw InvalidInputError("spatial extent " + std::to_string(refined.height) + "x" +
                                    std::to_string(refined.width) +
                                    " smaller than the 3x3 pooling window");
        conv_pre = Mat(refined.height, refined.width);
        for (std::size_t i = 0; i < conv_pre.v.size(); ++i)
            conv_pre.v[i] = conv.wat(0, 0, 0) * pooled_avg.v[i] +
                            conv.wat(1, 0, 0) * pooled_max.v[i] + conv.b[0];
        pre = max_pool_3x3_s2(conv_pre, pool_argmax);
    }

    Mat map(pre.rows, pre.cols);
    for (std::size_t i = 0; i < pre.v.size(); ++i) map.v[i] = sigmoid(pre.v[i]);

    if (cache) {
        cache->pooled_avg = std::move(pooled_avg);
        cache->pooled_max = std::move(pooled_max);
        cache->pooled_argmax = std::move(pooled_argmax);
        cache->conv_pre = std::move(conv_pre);
        cache->pool_argmax = std::move(pool_argmax);
        cache->spatial_pre = std::move(pre);
    }
    return map;
}

}  // namespace

Mat spam_forward(const Tensor3& x, const MlpParams& mlp2, const ConvParams& conv,
                 SpamVariant variant) {
    Tensor3 refined = spam_channel_refine(x, mlp2);
    return spatial_head(refined, conv, variant, nullptr);
}

Tensor3 apply_pab(const Tensor3& f, const Vec& mc, const Mat& ms, AttentionOrder order) {
    if (static_cast<int>(mc.size()) != f.channels)
        throw ShapeError("channel map length " + std::to_string(mc.size()) +
                         " does not match " + std::to_string(f.channels) + " channels");
    if (ms.rows != f.height || ms.cols != f.width)
        throw ShapeError("spatial map " + std::to_string(ms.rows) + "x" +
                         std::to_string(ms.cols) + " does not match feature extent " +
                         std::to_string(f.height) + "x" + std::to_string(f.width));
    Tensor3 out(f.channels, f.height, f.width);
    const int hw = f.spatial_size();
    for (int c = 0; c < f.channels; ++c) {
        for (int i = 0; i < hw; ++i) {
            const std::size_t idx = static_cast<std::size_t>(c) * hw + i;
            if (order == AttentionOrder::channel_then_spatial)
                out.v[idx] = (f.v[idx] * mc[c]) * ms.v[i];
            else
                out.v[idx] = (f.v[idx] * ms.v[i]) * mc[c];
        }
    }
    return out;
}

Tensor3 pab_forward(const Tensor3& pose, const Tensor3& target, const PabParams& params,
                    PabCache* cache) {
    check_pose_input(pose);
    if (params.mlp1.input_dim() != pose.channels || params.mlp2.input_dim() != pose.channels ||
        params.mlp2.output_dim() != pose.channels)
        throw ShapeError("attention block configured for " +
                         std::to_string(params.mlp1.input_dim()) +
                         " pose channels, got " + std::to_string(pose.channels));
    if (params.mlp1.output_dim() != target.channels)
        throw ShapeError("channel map length " + std::to_string(params.mlp1.output_dim()) +
                         " does not match target channels " + std::to_string(target.channels));
    const int oh = spam_output_size(pose.height, params.conv, params.variant);
    const int ow = spam_output_size(pose.width, params.conv, params.variant);
    if (oh != target.height || ow != target.width)
        throw ShapeError("spatial head yields " + std::to_string(oh) + "x" + std::to_string(ow) +
                         " but target extent is " + std::to_string(target.height) + "x" +
                         std::to_string(target.width));

    PoolStats stats = global_pool_stats(pose);

    Vec h1_avg, h1_max, h2_avg, h2_max;
    Vec mc = gated_sum(params.mlp1, stats.avg, stats.max, &h1_avg, &h1_max);
    Vec gate = gated_sum(params.mlp2, stats.avg, stats.max, &h2_avg, &h2_max);

    Tensor3 refined(pose.channels, pose.height, pose.width);
    const int hw = pose.spatial_size();
    for (int c = 0; c < pose.channels; ++c) {
        const double g = gate[c];
        for (int i = 0; i < hw; ++i) {
            const std::size_t idx = static_cast<std::size_t>(c) * hw + i;
            refined.v[idx] = g * pose.v[idx];
        }
    }

    Mat ms = spatial_head(refined, params.conv, params.variant, cache);
    Tensor3 out = apply_pab(target, mc, ms, params.order);

    if (cache) {
        cache->stats = std::move(stats);
        cache->mlp1_h_avg = std::move(h1_avg);
        cache->mlp1_h_max = std::move(h1_max);
        cache->mlp2_h_avg = std::move(h2_avg);
        cache->mlp2_h_max = std::move(h2_max);
        cache->channel_map = std::move(mc);
        cache->refine_gate = std::move(gate);
        cache->refined = std::move(refined);
        cache->spatial_map = ms;
        cache->pose = pose;
        cache->target = target;
    }
    return out;
}

void pab_backward(const PabParams& params, const PabCache& cache, const Tensor3& d_out,
                  PabGrads& grads) {
    const Tensor3& f = cache.target;
    const Tensor3& pose = cache.pose;
    const Vec& mc = cache.channel_map;
    const Mat& ms = cache.spatial_map;
    if (!d_out.same_shape(f))
        throw ShapeError("gradient shape " + d_out.shape_str() + " does not match output " +
                         f.shape_str());

    const int hw = f.spatial_size();
    Vec d_mc(mc.size(), 0.0);
    Mat d_ms(ms.rows, ms.cols);
    if (grads.d_target.size() != f.size()) grads.d_target = Tensor3(f.channels, f.height, f.width);

    for (int c = 0; c < f.channels; ++c) {
        for (int i = 0; i < hw; ++i) {
            const std::size_t idx = static_cast<std::size_t>(c) * hw + i;
            const double g = d_out.v[idx];
            d_mc[c] += g * f.v[idx] * ms.v[i];
            d_ms.v[i] += g * f.v[idx] * mc[c];
            grads.d_target.v[idx] = g * mc[c] * ms.v[i];
        }
    }

    // Channel branch: through the sigmoid, then the shared MLP on both
    // pooled descriptors.
    Vec ds1(d_mc.size());
    for (std::size_t i = 0; i < d_mc.size(); ++i) ds1[i] = d_mc[i] * mc[i] * (1.0 - mc[i]);
    mlp_branch_backward(params.mlp1, cache.stats.avg, cache.mlp1_h_avg, ds1, grads.mlp1);
    mlp_branch_backward(params.mlp1, cache.stats.max, cache.mlp1_h_max, ds1, grads.mlp1);

    // Spatial branch.
    Mat d_pre(cache.spatial_pre.rows, cache.spatial_pre.cols);
    for (std::size_t i = 0; i < d_pre.v.size(); ++i)
        d_pre.v[i] = d_ms.v[i] * ms.v[i] * (1.0 - ms.v[i]);

    Mat d_pooled_avg(cache.pooled_avg.rows, cache.pooled_avg.cols);
    Mat d_pooled_max(cache.pooled_max.rows, cache.pooled_max.cols);

    const ConvParams& conv = params.conv;
    if (params.variant == SpamVariant::conv3x3_stride2) {
        for (int i = 0; i < d_pre.rows; ++i) {
            for (int j = 0; j < d_pre.cols; ++j) {
                const double dp = d_pre.at(i, j);
                grads.conv_b[0] += dp;
                for (int ky = 0; ky < conv.kernel; ++ky) {
                    for (int kx = 0; kx < conv.kernel; ++kx) {
                        const int y = i * conv.stride + ky;
                        const int x = j * conv.stride + kx;
                        grads.conv_w[(0 * conv.kernel + ky) * conv.kernel + kx] +=
                            dp * cache.pooled_avg.at(y, x);
                        grads.conv_w[(1 * conv.kernel + ky) * conv.kernel + kx] +=
                            dp * cache.pooled_max.at(y, x);
                        d_pooled_avg.at(y, x) += dp * conv.wat(0, ky, kx);
                        d_pooled_max.at(y, x) += dp * conv.wat(1, ky, kx);
                    }
                }
            }
        }
    } else {
        // Route through the max pool, then the 1x1 convolution.
        Mat d_conv_pre(cache.conv_pre.rows, cache.conv_pre.cols);
        for (std::size_t i = 0; i < d_pre.v.size(); ++i)
            d_conv_pre.v[cache.pool_argmax[i]] += d_pre.v[i];
        for (std::size_t i = 0; i < d_conv_pre.v.size(); ++i) {
            const double dp = d_conv_pre.v[i];
            grads.conv_w[0] += dp * cache.pooled_avg.v[i];
            grads.conv_w[1] += dp * cache.pooled_max.v[i];
            grads.conv_b[0] += dp;
            d_pooled_avg.v[i] = dp * conv.wat(0, 0, 0);
            d_pooled_max.v[i] = dp * conv.wat(1, 0, 0);
        }
    }

    // Through the channel-axis pools into the refine gate.
    Vec d_gate(cache.refine_gate.size(), 0.0);
    const int pose_hw = pose.spatial_size();
    for (int i = 0; i < pose_hw; ++i) {
        const double da = d_pooled_avg.v[i] / pose.channels;
        const int max_c = cache.pooled_argmax[i];
        for (int c = 0; c < pose.channels; ++c) {
            double dr = da;
            if (c == max_c) dr += d_pooled_max.v[i];
            d_gate[c] += dr * pose.v[static_cast<std::size_t>(c) * pose_hw + i];
        }
    }

    Vec ds2(d_gate.size());
    for (std::size_t i = 0; i < d_gate.size(); ++i)
        ds2[i] = d_gate[i] * cache.refine_gate[i] * (1.0 - cache.refine_gate[i]);
    mlp_branch_backward(params.mlp2, cache.stats.avg, cache.mlp2_h_avg, ds2, grads.mlp2);
    mlp_branch_backward(params.mlp2, cache.stats.max, cache.mlp2_h_max, ds2, grads.mlp2);
}

std::string to_string(SpamVariant v) {
    return v == SpamVariant::conv3x3_stride2 ? "conv3x3_stride2" : "conv1x1_maxpool";
}

std::string to_string(AttentionOrder o) {
    return o == AttentionOrder::channel_then_spatial ? "channel_then_spatial"
                                                     : "spatial_then_channel";
}

SpamVariant spam_variant_from_string(const std::string& s) {
    if (s == "conv3x3_stride2") return SpamVariant::conv3x3_stride2;
    if (s == "conv1x1_maxpool") return SpamVariant::conv1x1_maxpool;
    throw ConfigError("unknown spam_variant: " + s);
}

AttentionOrder attention_order_from_string(const std::string& s) {
    if (s == "channel_then_spatial") return AttentionOrder::channel_then_spatial;
    if (s == "spatial_then_channel") return AttentionOrder::spatial_then_channel;
    throw ConfigError("unknown attention_order: " + s);
}

}  // namespace pabnet
