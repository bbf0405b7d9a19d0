#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hsdnet/tensor.hpp"

namespace hsdnet {

struct Dataset {
    std::vector<Tensor> images;  // each (C,H,W), shared shape
    std::vector<int> labels;
    std::vector<std::string> class_list;
    std::string split = "train";

    int size() const { return static_cast<int>(images.size()); }
    int class_count() const { return static_cast<int>(class_list.size()); }
    std::array<int, 3> image_shape() const;
};

struct SynthSpec {
    int class_count = 8;
    int per_class = 100;
    int image_size = 16;
    std::uint64_t seed = 0;
    std::string split = "train";
};

// Procedural images whose class is a (shape pattern, color family) pair:
// class c draws shape c % (count/2) in the warm or cool palette c / (count/2).
// Deterministic per (seed, split).
Dataset synth_dataset(const SynthSpec& spec);

struct ChannelStats {
    std::array<double, 3> mean = {0, 0, 0};
    std::array<double, 3> stdev = {1, 1, 1};
};

ChannelStats compute_channel_stats(const Dataset& data);
void standardize(Dataset& data, const ChannelStats& stats);

// Reads 3073-byte records (label byte + 32x32x3 planes, R then G then B),
// scales pixels to [0,1] and standardizes with per-channel statistics of the
// file itself. Pass `use_stats` to standardize a held-out split with the
// training statistics instead; `out_stats` reports the statistics applied.
Dataset load_cifar_binary(const std::string& path, const std::vector<std::string>& class_list,
                          const std::string& split = "train",
                          const ChannelStats* use_stats = nullptr,
                          ChannelStats* out_stats = nullptr);

// Samples of one class stacked into a batch tensor.
Tensor stack_images(const Dataset& data, const std::vector<int>& indices);

}  // namespace hsdnet
