#pragma once

#include <vector>

#include "pabnet/rng.hpp"
#include "pabnet/tensor.hpp"

namespace pabnet {

// Valid (zero-padding) convolution layer with a rectifier.
struct ConvLayer {
    int in_ch = 0;
    int out_ch = 0;
    int kernel = 3;
    int stride = 2;
    Vec w;  // [out][in][ky][kx]
    Vec b;  // [out]

    static ConvLayer init(int in_ch, int out_ch, int kernel, int stride, Rng& rng);

    int out_size(int n) const { return (n - kernel) / stride + 1; }

    double wat(int o, int c, int ky, int kx) const {
        return w[((static_cast<std::size_t>(o) * in_ch + c) * kernel + ky) * kernel + kx];
    }

    // Pre-activation output.
    Tensor3 forward(const Tensor3& x) const;
};

Tensor3 relu(const Tensor3& x);

struct ConvStackCache {
    std::vector<Tensor3> inputs;   // input to each layer
    std::vector<Tensor3> pre_act;  // conv output before the rectifier
};

struct ConvLayerGrads {
    Vec w;
    Vec b;
};

// A chain of conv+relu layers; the final rectified map is the feature output.
struct ConvStack {
    std::vector<ConvLayer> layers;

    Tensor3 forward(const Tensor3& x, ConvStackCache* cache = nullptr) const;

    // d_out is the gradient w.r.t. the final rectified map. Returns the
    // gradient w.r.t. the stack input; layer parameter gradients are
    // accumulated into `grads` (sized like `layers`).
    Tensor3 backward(const ConvStackCache& cache, const Tensor3& d_out,
                     std::vector<ConvLayerGrads>& grads) const;
};

// Chain of spatial extents produced by repeated kernel-3/stride-2 layers,
// starting at `from` and ending at or below `to`. Empty if `to` is not
// reachable exactly.
std::vector<int> conv_extent_chain(int from, int to);

// Mean over the spatial extent, per channel.
Vec global_average_pool(const Tensor3& x);

}  // namespace pabnet
