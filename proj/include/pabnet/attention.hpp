#pragma once

#include <string>
#include <vector>

#include "pabnet/rng.hpp"
#include "pabnet/tensor.hpp"

namespace pabnet {

// Two-layer perceptron with a rectifier hidden layer, shared across the
// pooled descriptors it gates.
struct MlpParams {
    Mat w1;  // hidden x input
    Vec b1;
    Mat w2;  // output x hidden
    Vec b2;

    int input_dim() const { return w1.cols; }
    int hidden_dim() const { return w1.rows; }
    int output_dim() const { return w2.rows; }

    static MlpParams init(int input, int hidden, int output, Rng& rng);
};

struct MlpGrads {
    Mat w1;
    Vec b1;
    Mat w2;
    Vec b2;

    explicit MlpGrads(const MlpParams& p)
        : w1(p.w1.rows, p.w1.cols),
          b1(p.b1.size(), 0.0),
          w2(p.w2.rows, p.w2.cols),
          b2(p.b2.size(), 0.0) {}
};

enum class SpamVariant {
    conv3x3_stride2,  // 3x3 convolution, stride 2, on the 2-channel pooled stack
    conv1x1_maxpool,  // 1x1 convolution followed by a 3x3/stride-2 max pool
};

enum class AttentionOrder { channel_then_spatial, spatial_then_channel };

// Spatial head parameters: a 2-input-channel, 1-output-channel convolution.
// w is laid out [input channel (avg=0, max=1)][ky][kx]; b holds one bias.
struct ConvParams {
    int kernel = 3;
    int stride = 2;
    Vec w;  // 2 * kernel * kernel
    Vec b;  // 1

    double wat(int ch, int ky, int kx) const {
        return w[(static_cast<std::size_t>(ch) * kernel + ky) * kernel + kx];
    }
    double& wat(int ch, int ky, int kx) {
        return w[(static_cast<std::size_t>(ch) * kernel + ky) * kernel + kx];
    }

    static ConvParams init(int kernel, int stride, Rng& rng);
};

struct PabParams {
    MlpParams mlp1;   // pooled pose descriptors -> channel map over target channels
    MlpParams mlp2;   // pooled pose descriptors -> per-channel refine gate
    ConvParams conv;  // spatial head
    SpamVariant variant = SpamVariant::conv3x3_stride2;
    AttentionOrder order = AttentionOrder::channel_then_spatial;

    // pose_channels: channel count of the incoming pose feature map;
    // target_channels: channel count of the map the attention is applied to.
    static PabParams init(int pose_channels, int target_channels, int hidden, SpamVariant variant,
                          AttentionOrder order, Rng& rng);
};

// Per-channel global average and maximum over the spatial extent.
// argmax stores the flat spatial index of the maximum for each channel.
struct PoolStats {
    Vec avg;
    Vec max;
    std::vector<int> argmax;
};

PoolStats global_pool_stats(const Tensor3& x);

// Spatial output size of the attention head for an input extent of n.
int spam_output_size(int n, const ConvParams& conv, SpamVariant variant);

// Channel attention map: sigmoid(MLP(avg) + MLP(max)); length = mlp1.output_dim().
Vec acam_forward(const Tensor3& x, const MlpParams& mlp1);

// Channel-refined features: the sigmoid gate from mlp2 broadcast over x.
Tensor3 spam_channel_refine(const Tensor3& x, const MlpParams& mlp2);

// Spatial attention map from the channel-refined features.
Mat spam_forward(const Tensor3& x, const MlpParams& mlp2, const ConvParams& conv,
                 SpamVariant variant = SpamVariant::conv3x3_stride2);

// out[c,h,w] = f[c,h,w] * mc[c] * ms[h,w]; order selects the multiplication
// sequence (identical in exact arithmetic).
Tensor3 apply_pab(const Tensor3& f, const Vec& mc, const Mat& ms, AttentionOrder order);

// ---------------------------------------------------------------------------
// Fused differentiable block. Forward keeps every intermediate needed by the
// backward pass; backward produces gradients for all block parameters plus
// the incoming target map.
// ---------------------------------------------------------------------------

struct PabCache {
    PoolStats stats;          // pooled pose descriptors
    Vec mlp1_h_avg, mlp1_h_max;  // hidden pre-activations, per descriptor
    Vec mlp2_h_avg, mlp2_h_max;
    Vec channel_map;          // mc
    Vec refine_gate;          // sigmoid gate of the refine stage
    Tensor3 refined;          // gate (x) pose features
    Mat pooled_avg, pooled_max;  // per-position channel mean / max of refined
    std::vector<int> pooled_argmax;  // channel index of the max, per position
    Mat conv_pre;             // conv output before the max pool (1x1 variant)
    std::vector<int> pool_argmax;    // flat index into conv_pre, per output cell
    Mat spatial_pre;          // pre-sigmoid spatial logits
    Mat spatial_map;          // ms
    Tensor3 pose;             // input copies for the backward pass
    Tensor3 target;
};

struct PabGrads {
    MlpGrads mlp1;
    MlpGrads mlp2;
    Vec conv_w;
    Vec conv_b;
    Tensor3 d_target;

    explicit PabGrads(const PabParams& p)
        : mlp1(p.mlp1),
          mlp2(p.mlp2),
          conv_w(p.conv.w.size(), 0.0),
          conv_b(p.conv.b.size(), 0.0) {}
};

// Full block: pose features -> (channel map, spatial map) -> refined target.
Tensor3 pab_forward(const Tensor3& pose, const Tensor3& target, const PabParams& params,
                    PabCache* cache = nullptr);

// Accumulates parameter gradients into `grads` given d(loss)/d(output).
void pab_backward(const PabParams& params, const PabCache& cache, const Tensor3& d_out,
                  PabGrads& grads);

std::string to_string(SpamVariant v);
std::string to_string(AttentionOrder o);
SpamVariant spam_variant_from_string(const std::string& s);
AttentionOrder attention_order_from_string(const std::string& s);

}  // namespace pabnet
