#include "hsdnet/chain.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "hsdnet/engine.hpp"

namespace hsdnet {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv3x3: return "conv3x3";
        case LayerKind::Conv1x1: return "conv1x1";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool2x2: return "maxpool2x2";
        case LayerKind::GlobalAvgPool: return "global-avg-pool";
        case LayerKind::Dense: return "dense";
        case LayerKind::Softmax: return "softmax";
    }
    return "?";
}

ChainConfig vgg16_config(int class_count, int image_size) {
    ChainConfig cfg;
    cfg.conv_widths = {64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512};
    cfg.pool_after = {2, 4, 7, 10, 13};
    cfg.class_count = class_count;
    cfg.input_shape = {3, image_size, image_size};
    return cfg;
}

int ChainNet::conv_count() const {
    int n = 0;
    for (const auto& l : layers) {
        if (l.kind == LayerKind::Conv3x3 || l.kind == LayerKind::Conv1x1) ++n;
    }
    return n;
}

int ChainNet::conv_position(int conv_index) const {
    int n = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].kind == LayerKind::Conv3x3 || layers[i].kind == LayerKind::Conv1x1) {
            if (++n == conv_index) return static_cast<int>(i);
        }
    }
    throw std::runtime_error("conv layer index " + std::to_string(conv_index) + " out of range");
}

int ChainNet::conv_width(int conv_index) const {
    return layers[static_cast<std::size_t>(conv_position(conv_index))].out_channels;
}

int ChainNet::conv_in_channels(int conv_index) const {
    return layers[static_cast<std::size_t>(conv_position(conv_index))].in_channels;
}

bool ChainNet::pool_follows(int conv_index) const {
    const int pos = conv_position(conv_index);
    for (std::size_t i = static_cast<std::size_t>(pos) + 1; i < layers.size(); ++i) {
        switch (layers[i].kind) {
            case LayerKind::Relu:
                continue;
            case LayerKind::MaxPool2x2:
                return true;
            default:
                return false;
        }
    }
    return false;
}

namespace {

std::string conv_name(int conv_index) { return "conv" + std::to_string(conv_index); }

Tensor uniform_init(std::vector<int> shape, double bound, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t.data) v = dist(rng);
    return t;
}

}  // namespace

ChainNet build_chain(const ChainConfig& cfg) {
    if (cfg.conv_widths.empty()) {
        throw std::invalid_argument("build_chain: at least one conv layer required");
    }
    if (cfg.class_count < 2) {
        throw std::invalid_argument("build_chain: need at least two classes");
    }
    for (int p : cfg.pool_after) {
        if (p < 1 || p > static_cast<int>(cfg.conv_widths.size())) {
            throw std::invalid_argument("build_chain: pool position " + std::to_string(p) +
                                        " outside conv range");
        }
    }

    ChainNet net;
    net.input_shape = cfg.input_shape;
    for (int c = 0; c < cfg.class_count; ++c) {
        net.class_list.push_back("c" + std::to_string(c));
    }

    int h = cfg.input_shape[1], w = cfg.input_shape[2];
    int in_c = cfg.input_shape[0];
    for (std::size_t i = 0; i < cfg.conv_widths.size(); ++i) {
        const int conv_index = static_cast<int>(i) + 1;
        LayerSpec conv;
        conv.kind = LayerKind::Conv3x3;
        conv.in_channels = in_c;
        conv.out_channels = cfg.conv_widths[i];
        conv.stride = 1;
        conv.padding = 1;
        conv.affine = cfg.affine;
        net.layers.push_back(conv);
        net.layers.push_back({LayerKind::Relu, conv.out_channels, conv.out_channels, 1, 0, false});
        in_c = conv.out_channels;
        if (std::find(cfg.pool_after.begin(), cfg.pool_after.end(), conv_index) != cfg.pool_after.end()) {
            if (h % 2 != 0 || w % 2 != 0) {
                throw std::invalid_argument("build_chain: odd spatial extent " + std::to_string(h) + "x" +
                                            std::to_string(w) + " reaches the pool after conv" +
                                            std::to_string(conv_index));
            }
            net.layers.push_back({LayerKind::MaxPool2x2, in_c, in_c, 2, 0, false});
            h /= 2;
            w /= 2;
        }
    }
    net.layers.push_back({LayerKind::GlobalAvgPool, in_c, in_c, 1, 0, false});
    net.layers.push_back({LayerKind::Dense, in_c, cfg.class_count, 1, 0, false});
    net.layers.push_back({LayerKind::Softmax, cfg.class_count, cfg.class_count, 1, 0, false});

    std::mt19937_64 rng(cfg.seed);
    int conv_index = 0;
    for (const auto& l : net.layers) {
        if (l.kind == LayerKind::Conv3x3 || l.kind == LayerKind::Conv1x1) {
            ++conv_index;
            const int k = l.kind == LayerKind::Conv3x3 ? 3 : 1;
            const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_channels) * k * k);
            net.params.put(conv_name(conv_index) + "/filter",
                           uniform_init({l.out_channels, l.in_channels, k, k}, bound, rng));
            net.params.put(conv_name(conv_index) + "/bias",
                           uniform_init({l.out_channels}, bound, rng));
            if (l.affine) {
                net.params.put(conv_name(conv_index) + "/scale", Tensor::filled({l.out_channels}, 1.0));
                net.params.put(conv_name(conv_index) + "/shift", Tensor::zeros({l.out_channels}));
            }
        } else if (l.kind == LayerKind::Dense) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_channels));
            net.params.put("head/weight", uniform_init({l.out_channels, l.in_channels}, bound, rng));
            net.params.put("head/bias", uniform_init({l.out_channels}, bound, rng));
        }
    }
    return net;
}

namespace {

std::vector<int> fingerprint(const ChainNet& net) {
    std::vector<int> fp;
    fp.push_back(static_cast<int>(net.layers.size()));
    for (const auto& l : net.layers) {
        fp.push_back(static_cast<int>(l.kind));
        fp.push_back(l.in_channels);
        fp.push_back(l.out_channels);
    }
    fp.push_back(net.input_shape[0]);
    fp.push_back(net.input_shape[1]);
    fp.push_back(net.input_shape[2]);
    return fp;
}

}  // namespace

ChainForward forward(const ChainNet& net, const Tensor& batch, const std::optional<ProbeSpec>& probe) {
    if (batch.rank() != 4 || batch.shape[1] != net.input_shape[0] ||
        batch.shape[2] != net.input_shape[1] || batch.shape[3] != net.input_shape[2]) {
        throw std::runtime_error("forward: batch shape " + shape_string(batch.shape) +
                                 " does not match network input (C,H,W)=(" +
                                 std::to_string(net.input_shape[0]) + "," +
                                 std::to_string(net.input_shape[1]) + "," +
                                 std::to_string(net.input_shape[2]) + ")");
    }
    if (probe) {
        const int k = net.conv_width(probe->conv_layer);
        if (static_cast<int>(probe->scales.size()) != k) {
            throw std::runtime_error("forward: probe at conv" + std::to_string(probe->conv_layer) +
                                     " needs " + std::to_string(k) + " scales, got " +
                                     std::to_string(probe->scales.size()));
        }
    }

    ChainForward fr;
    fr.input = batch;
    fr.probe = probe;
    fr.net_fingerprint = fingerprint(net);
    fr.outs.reserve(net.layers.size());

    const Tensor* x = &batch;
    int conv_index = 0;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        Tensor y;
        switch (l.kind) {
            case LayerKind::Conv3x3:
            case LayerKind::Conv1x1: {
                ++conv_index;
                const std::string base = conv_name(conv_index);
                try {
                    y = conv2d(*x, net.params.at(base + "/filter"), net.params.at(base + "/bias"),
                               l.stride, l.padding);
                } catch (const std::exception& e) {
                    throw std::runtime_error("layer " + std::to_string(i) + " (" + base + "): " + e.what());
                }
                if (l.affine) {
                    y = channel_affine(y, net.params.at(base + "/scale"), net.params.at(base + "/shift"));
                }
                if (probe && probe->conv_layer == conv_index) {
                    fr.probe_raw = y;
                    y = scale_channels(y, probe->scales);
                }
                break;
            }
            case LayerKind::Relu:
                y = relu(*x);
                break;
            case LayerKind::MaxPool2x2:
                try {
                    y = maxpool2x2(*x);
                } catch (const std::exception& e) {
                    throw std::runtime_error("layer " + std::to_string(i) + " (maxpool): " + e.what());
                }
                break;
            case LayerKind::GlobalAvgPool:
                y = global_avg_pool(*x);
                break;
            case LayerKind::Dense:
                y = dense(*x, net.params.at("head/weight"), net.params.at("head/bias"));
                break;
            case LayerKind::Softmax:
                y = softmax_rows(*x);
                break;
        }
        fr.outs.push_back(std::move(y));
        x = &fr.outs.back();
    }
    return fr;
}

GradientStore backward(const ChainNet& net, const ChainForward& fr, const Tensor& grad_at_output,
                       const std::vector<int>& probe_grad_layers, bool at_logits) {
    if (fr.net_fingerprint != fingerprint(net)) {
        throw std::runtime_error("backward: forward result is stale for this network");
    }
    if (fr.outs.size() != net.layers.size()) {
        throw std::runtime_error("backward: forward result layer count mismatch");
    }

    GradientStore gs;
    for (int l : probe_grad_layers) {
        gs.probe_scales[l] = {};
    }

    const int last = static_cast<int>(net.layers.size()) - 1;
    Tensor grad;
    if (at_logits) {
        if (!grad_at_output.same_shape(fr.outs[static_cast<std::size_t>(last) - 1])) {
            throw std::runtime_error("backward: logit gradient shape mismatch");
        }
        grad = grad_at_output;
    } else {
        if (!grad_at_output.same_shape(fr.outs.back())) {
            throw std::runtime_error("backward: output gradient shape mismatch");
        }
        grad = softmax_backward(fr.outs.back(), grad_at_output);
    }

    // walk layers in reverse, skipping the softmax which is folded in above
    int conv_index = net.conv_count();
    for (int i = last - 1; i >= 0; --i) {
        const LayerSpec& l = net.layers[static_cast<std::size_t>(i)];
        const Tensor& x = i == 0 ? fr.input : fr.outs[static_cast<std::size_t>(i) - 1];
        switch (l.kind) {
            case LayerKind::Conv3x3:
            case LayerKind::Conv1x1: {
                const std::string base = conv_name(conv_index);
                const bool probed = fr.probe && fr.probe->conv_layer == conv_index;
                auto want = gs.probe_scales.find(conv_index);
                if (probed) {
                    // out = scales (.) pre; scale grad comes from the raw pre-activation
                    gs.probe_scales[conv_index] = scale_channels_grad(fr.probe_raw, grad);
                    grad = scale_channels_backward_input(grad, fr.probe->scales);
                } else if (want != gs.probe_scales.end()) {
                    // virtual all-ones probe: d/ds_k = sum over positions of pre * grad
                    want->second = scale_channels_grad(fr.outs[static_cast<std::size_t>(i)], grad);
                }
                if (l.affine) {
                    // recover the affine input: conv output before scale/shift
                    Tensor conv_out = conv2d(x, net.params.at(base + "/filter"),
                                             net.params.at(base + "/bias"), l.stride, l.padding);
                    Tensor gx, gscale, gshift;
                    channel_affine_backward(conv_out, net.params.at(base + "/scale"), grad,
                                            &gx, &gscale, &gshift);
                    gs.params[base + "/scale"] = std::move(gscale);
                    gs.params[base + "/shift"] = std::move(gshift);
                    grad = std::move(gx);
                }
                Tensor gx, gw, gb;
                conv2d_backward(x, net.params.at(base + "/filter"), grad, l.stride, l.padding,
                                i > 0 ? &gx : nullptr, &gw, &gb);
                gs.params[base + "/filter"] = std::move(gw);
                gs.params[base + "/bias"] = std::move(gb);
                if (i > 0) grad = std::move(gx);
                --conv_index;
                break;
            }
            case LayerKind::Relu:
                grad = relu_backward(x, grad);
                break;
            case LayerKind::MaxPool2x2:
                grad = maxpool2x2_backward(x, grad);
                break;
            case LayerKind::GlobalAvgPool:
                grad = global_avg_pool_backward(x, grad);
                break;
            case LayerKind::Dense: {
                Tensor gx, gw, gb;
                dense_backward(x, net.params.at("head/weight"), grad, &gx, &gw, &gb);
                gs.params["head/weight"] = std::move(gw);
                gs.params["head/bias"] = std::move(gb);
                grad = std::move(gx);
                break;
            }
            case LayerKind::Softmax:
                throw std::runtime_error("backward: unexpected inner softmax layer");
        }
    }
    return gs;
}

void sgd_step(ParamStore& params, const GradientStore& grads, double lr) {
    if (!(lr > 0.0)) {
        throw std::invalid_argument("sgd_step: learning rate must be positive");
    }
    for (const auto& [name, g] : grads.params) {
        Tensor& p = params.at(name);
        if (!p.same_shape(g)) {
            throw std::runtime_error("sgd_step: gradient shape mismatch for " + name);
        }
        if (!all_finite(g)) {
            throw std::runtime_error("sgd_step: non-finite gradient for " + name + "; training halted");
        }
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            p.data[i] -= lr * g.data[i];
        }
    }
}

std::uint64_t count_params(const ChainNet& net) {
    std::uint64_t n = 0;
    int conv_index = 0;
    for (const auto& l : net.layers) {
        switch (l.kind) {
            case LayerKind::Conv3x3:
            case LayerKind::Conv1x1: {
                ++conv_index;
                const std::uint64_t k = l.kind == LayerKind::Conv3x3 ? 3 : 1;
                n += static_cast<std::uint64_t>(l.out_channels) * l.in_channels * k * k;
                n += static_cast<std::uint64_t>(l.out_channels);
                if (l.affine) n += 2ull * l.out_channels;
                break;
            }
            case LayerKind::Dense:
                n += static_cast<std::uint64_t>(l.out_channels) * l.in_channels;
                n += static_cast<std::uint64_t>(l.out_channels);
                break;
            default:
                break;
        }
    }
    return n;
}

std::uint64_t count_macs(const ChainNet& net, const std::array<int, 3>& input_shape) {
    std::uint64_t n = 0;
    int h = input_shape[1], w = input_shape[2];
    for (const auto& l : net.layers) {
        switch (l.kind) {
            case LayerKind::Conv3x3:
            case LayerKind::Conv1x1: {
                const int k = l.kind == LayerKind::Conv3x3 ? 3 : 1;
                const int oh = (h + 2 * l.padding - k) / l.stride + 1;
                const int ow = (w + 2 * l.padding - k) / l.stride + 1;
                if (oh <= 0 || ow <= 0) {
                    throw std::runtime_error("count_macs: input too small for network");
                }
                n += static_cast<std::uint64_t>(l.out_channels) * l.in_channels * k * k *
                     static_cast<std::uint64_t>(oh) * ow;
                h = oh;
                w = ow;
                break;
            }
            case LayerKind::MaxPool2x2:
                h /= 2;
                w /= 2;
                break;
            case LayerKind::Dense:
                n += static_cast<std::uint64_t>(l.out_channels) * l.in_channels;
                break;
            default:
                break;
        }
    }
    return n;
}

}  // namespace hsdnet
