#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pabnet/attention.hpp"
#include "pabnet/checkpoint.hpp"
#include "pabnet/conv.hpp"
#include "pabnet/data.hpp"
#include "pabnet/tensor.hpp"

namespace pabnet {

// Shape and wiring of the coupled model. Desk defaults keep everything small
// enough to train on a CPU in seconds; the configuration schema also accepts
// the full-size constants (2048x7x7 pose map, 1792x3x3 target, 512-D).
struct ModelConfig {
    int image_size = 64;
    std::vector<int> stage_widths = {16, 32, 48};  // frozen prefix; the final
                                                   // conv emits target_channels
    int target_channels = 64;
    int target_size = 3;  // penultimate extent (square)
    int embedding_dim = 128;
    double frontal_threshold_deg = 15.0;

    bool attention_enabled = true;
    int pab_hidden = 128;
    SpamVariant spam_variant = SpamVariant::conv3x3_stride2;
    AttentionOrder attention_order = AttentionOrder::channel_then_spatial;

    int pose_channels = 32;
    int pose_spatial = 7;
    std::vector<int> pose_widths = {12, 24};
    int pose_pretrain_steps = 200;
    int pose_pretrain_batch = 16;
    double pose_pretrain_lr = 1e-3;

    void validate() const;
};

// Frozen source of pose-encoding feature maps.
class PoseFeatureProvider {
  public:
    virtual ~PoseFeatureProvider() = default;
    virtual Tensor3 features(const ImageSample& sample) const = 0;
    virtual int channels() const = 0;
    virtual int spatial() const = 0;
};

// Small convolutional yaw regressor; its last feature map is served after a
// short in-repo pretraining pass, after which all parameters stay fixed.
class YawPoseNet final : public PoseFeatureProvider {
  public:
    YawPoseNet() = default;

    static YawPoseNet build(const ModelConfig& config, std::uint64_t seed);

    // Adam on the squared error of normalized yaw (yaw/90). Marks the
    // provider initialized.
    void pretrain(const std::vector<ImageSample>& samples, int steps, int batch_size, double lr,
                  std::uint64_t seed);

    // Serve without pretraining (tests, attention-only pipelines).
    void mark_initialized() { initialized_ = true; }

    Tensor3 features(const ImageSample& sample) const override;
    int channels() const override { return channels_; }
    int spatial() const override { return spatial_; }

    double predict_yaw_norm(const Tensor3& pixels) const;

    void collect_params(ParamRefs& out);
    bool initialized() const { return initialized_; }

  private:
    ConvStack stack_;
    Vec head_w;
    Vec head_b;  // single element
    int channels_ = 0;
    int spatial_ = 0;
    bool initialized_ = false;
};

// Provider backed by feature maps exported from an external pose network,
// keyed by sample id.
class FilePoseProvider final : public PoseFeatureProvider {
  public:
    static FilePoseProvider load(const std::string& path);

    Tensor3 features(const ImageSample& sample) const override;
    int channels() const override { return channels_; }
    int spatial() const override { return spatial_; }

    std::size_t count() const { return maps_.size(); }

  private:
    std::map<std::string, Tensor3> maps_;
    int channels_ = 0;
    int spatial_ = 0;
};

inline constexpr const char* kPoseFeatureHeader = "pab-posefeat-v1";

void write_pose_features(const std::string& path, const std::vector<std::string>& ids,
                         const std::vector<Tensor3>& maps);

// Coupled embedding model: a shared frozen conv prefix, one projection head
// per branch, and the attention block on the profile side.
class CoupledNet {
  public:
    static CoupledNet init(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }

    // Penultimate feature map of the shared prefix.
    Tensor3 prefix_features(const Tensor3& pixels) const;

    Vec encode_frontal(const ImageSample& sample) const;
    Vec encode_profile(const ImageSample& sample, const PoseFeatureProvider* pose) const;

    // Projection heads applied to a pooled penultimate map.
    Vec project_frontal(const Vec& pooled) const;
    Vec project_profile(const Vec& pooled) const;

    bool attention_enabled() const { return pab_.has_value(); }
    PabParams& pab() { return *pab_; }
    const PabParams& pab() const { return *pab_; }

    Mat& profile_head_w() { return proj_profile_w_; }
    Vec& profile_head_b() { return proj_profile_b_; }
    Mat& frontal_head_w() { return proj_frontal_w_; }
    Vec& frontal_head_b() { return proj_frontal_b_; }

    // All named parameters (prefix, heads, attention).
    void collect_params(ParamRefs& out);

    // Exactly the parameters past the pooling stage plus the attention
    // block; the frozen prefix is excluded.
    ParamRefs trainable_params();

  private:
    ModelConfig cfg_;
    ConvStack prefix_;
    Mat proj_frontal_w_;
    Vec proj_frontal_b_;
    Mat proj_profile_w_;
    Vec proj_profile_b_;
    std::optional<PabParams> pab_;
};

// Convenience wrapper mirroring the provider interface.
Tensor3 pose_features(const ImageSample& sample, const PoseFeatureProvider& provider);

}  // namespace pabnet
