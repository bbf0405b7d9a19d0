#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hsdnet/tensor.hpp"

namespace hsdnet {

enum class LayerKind {
    Conv3x3,
    Conv1x1,
    Relu,
    MaxPool2x2,
    GlobalAvgPool,
    Dense,
    Softmax,
};

const char* layer_kind_name(LayerKind k);

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int in_channels = 0;
    int out_channels = 0;
    int stride = 1;
    int padding = 0;
    bool affine = false;  // optional per-channel scale/shift after the conv
};

struct ChainConfig {
    std::vector<int> conv_widths;
    std::vector<int> pool_after;  // 1-based conv indices followed by a 2x2 max-pool
    int class_count = 0;
    std::array<int, 3> input_shape = {3, 32, 32};  // C,H,W
    bool affine = false;
    std::uint64_t seed = 0;
};

// Returns the layer widths and pool placement of the 13-conv network used for
// 32x32 inputs: widths 64,64,128,128,256x3,512x3,512x3, pools after conv
// 2,4,7,10,13, then global average pooling and one dense head.
ChainConfig vgg16_config(int class_count, int image_size = 32);

// Single-path convolutional classifier: every layer has exactly one successor.
struct ChainNet {
    std::vector<LayerSpec> layers;
    ParamStore params;
    std::vector<std::string> class_list;
    std::array<int, 3> input_shape = {0, 0, 0};

    int conv_count() const;
    // position in `layers` of the 1-based conv index
    int conv_position(int conv_index) const;
    int conv_width(int conv_index) const;
    int conv_in_channels(int conv_index) const;
    bool pool_follows(int conv_index) const;
    int class_count() const { return static_cast<int>(class_list.size()); }
};

ChainNet build_chain(const ChainConfig& cfg);

// Virtual per-channel multiplier inserted after one conv layer's
// pre-activation; all-ones scales leave the network bit-identical.
struct ProbeSpec {
    int conv_layer = 0;  // 1-based
    std::vector<double> scales;
};

struct ChainForward {
    Tensor input;
    std::vector<Tensor> outs;  // one entry per layer position; back() is the class probabilities
    std::optional<ProbeSpec> probe;
    Tensor probe_raw;  // unscaled pre-activation at the probed layer
    std::vector<int> net_fingerprint;

    const Tensor& probs() const { return outs.back(); }
};

ChainForward forward(const ChainNet& net, const Tensor& batch,
                     const std::optional<ProbeSpec>& probe = {});

struct GradientStore {
    std::map<std::string, Tensor> params;
    // conv layer -> d(objective)/d(per-channel scale), evaluated at the scales
    // used in the forward pass (1 everywhere when no probe was inserted)
    std::map<int, std::vector<double>> probe_scales;
};

// grad_at_output is the objective gradient at the softmax output; set
// at_logits=true when it is already expressed at the logits.
// probe_grad_layers requests per-channel scale gradients for extra conv
// layers beyond the forward probe.
GradientStore backward(const ChainNet& net, const ChainForward& fr, const Tensor& grad_at_output,
                       const std::vector<int>& probe_grad_layers = {}, bool at_logits = false);

void sgd_step(ParamStore& params, const GradientStore& grads, double lr);

std::uint64_t count_params(const ChainNet& net);
std::uint64_t count_macs(const ChainNet& net, const std::array<int, 3>& input_shape);

}  // namespace hsdnet
