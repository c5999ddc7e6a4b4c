#include "pabnet/conv.hpp"

#include <cmath>

#include "pabnet/errors.hpp"

namespace pabnet {

ConvLayer ConvLayer::init(int in_ch, int out_ch, int kernel, int stride, Rng& rng) {
    if (in_ch < 1 || out_ch < 1 || kernel < 1 || stride < 1)
        throw ConfigError("conv layer dimensions must be positive");
    ConvLayer l;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.kernel = kernel;
    l.stride = stride;
    l.w.assign(static_cast<std::size_t>(out_ch) * in_ch * kernel * kernel, 0.0);
    l.b.assign(out_ch, 0.0);
    const int fan_in = in_ch * kernel * kernel;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& x : l.w) x = rng.uniform(-bound, bound);
    for (double& x : l.b) x = rng.uniform(-bound, bound);
    return l;
}

Tensor3 ConvLayer::forward(const Tensor3& x) const {
    if (x.channels != in_ch)
        throw ShapeError("conv layer expects " + std::to_string(in_ch) + " channels, got " +
                         std::to_string(x.channels));
    if (x.height < kernel || x.width < kernel)
        throw InvalidInputError("conv input " + x.shape_str() + " smaller than kernel " +
                                std::to_string(kernel));
    const int oh = out_size(x.height);
    const int ow = out_size(x.width);
    Tensor3 out(out_ch, oh, ow);
    for (int o = 0; o < out_ch; ++o) {
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                double acc = b[o];
                for (int c = 0; c < in_ch; ++c)
                    for (int ky = 0; ky < kernel; ++ky)
                        for (int kx = 0; kx < kernel; ++kx)
                            acc += wat(o, c, ky, kx) * x.at(c, i * stride + ky, j * stride + kx);
                out.at(o, i, j) = acc;
            }
        }
    }
    return out;
}

Tensor3 relu(const Tensor3& x) {
    Tensor3 out = x;
    for (double& v : out.v)
        if (v < 0.0) v = 0.0;
    return out;
}

Tensor3 ConvStack::forward(const Tensor3& x, ConvStackCache* cache) const {
    if (cache) {
        cache->inputs.clear();
        cache->pre_act.clear();
    }
    Tensor3 cur = x;
    for (const auto& layer : layers) {
        if (cache) cache->inputs.push_back(cur);
        Tensor3 pre = layer.forward(cur);
        if (cache) cache->pre_act.push_back(pre);
        cur = relu(pre);
    }
    return cur;
}

Tensor3 ConvStack::backward(const ConvStackCache& cache, const Tensor3& d_out,
                            std::vector<ConvLayerGrads>& grads) const {
    if (cache.inputs.size() != layers.size())
        throw StateError("conv stack cache does not match layer count");
    if (grads.size() != layers.size()) {
        grads.resize(layers.size());
        for (std::size_t i = 0; i < layers.size(); ++i) {
            grads[i].w.assign(layers[i].w.size(), 0.0);
            grads[i].b.assign(layers[i].b.size(), 0.0);
        }
    }

    Tensor3 dy = d_out;
    for (int li = static_cast<int>(layers.size()) - 1; li >= 0; --li) {
        const ConvLayer& layer = layers[li];
        const Tensor3& x = cache.inputs[li];
        const Tensor3& pre = cache.pre_act[li];

        // Through the rectifier.
        Tensor3 dz = dy;
        for (std::size_t i = 0; i < dz.v.size(); ++i)
            if (pre.v[i] <= 0.0) dz.v[i] = 0.0;

        Tensor3 dx(x.channels, x.height, x.width);
        ConvLayerGrads& g = grads[li];
        for (int o = 0; o < layer.out_ch; ++o) {
            for (int i = 0; i < dz.height; ++i) {
                for (int j = 0; j < dz.width; ++j) {
                    const double d = dz.at(o, i, j);
                    if (d == 0.0) continue;
                    g.b[o] += d;
                    for (int c = 0; c < layer.in_ch; ++c) {
                        for (int ky = 0; ky < layer.kernel; ++ky) {
                            for (int kx = 0; kx < layer.kernel; ++kx) {
                                const int y = i * layer.stride + ky;
                                const int xx = j * layer.stride + kx;
                                g.w[((static_cast<std::size_t>(o) * layer.in_ch + c) *
                                         layer.kernel +
                                     ky) *
                                        layer.kernel +
                                    kx] += d * x.at(c, y, xx);
                                dx.at(c, y, xx) += d * layer.wat(o, c, ky, kx);
                            }
                        }
                    }
                }
            }
        }
        dy = std::move(dx);
    }
    return dy;
}

std::vector<int> conv_extent_chain(int from, int to) {
    std::vector<int> chain{from};
    int n = from;
    while (n > to) {
        if (n < 3) return {};
        n = (n - 3) / 2 + 1;
        chain.push_back(n);
    }
    return n == to ? chain : std::vector<int>{};
}

Vec global_average_pool(const Tensor3& x) {
    if (x.spatial_size() == 0) throw InvalidInputError("average pool over empty extent");
    Vec out(x.channels, 0.0);
    const int hw = x.spatial_size();
    for (int c = 0; c < x.channels; ++c) {
        const double* p = &x.v[static_cast<std::size_t>(c) * hw];
        double sum = 0.0;
        for (int i = 0; i < hw; ++i) sum += p[i];
        out[c] = sum / hw;
    }
    return out;
}

}  // namespace pabnet
