#pragma once

#include <map>
#include <vector>

#include "hsdnet/chain.hpp"
#include "hsdnet/data.hpp"

namespace hsdnet {

// Per-layer impact scores: row c holds, for each channel of the layer, the
// summed magnitude of the true-class probability's sensitivity to a virtual
// per-channel scale, accumulated over that class's samples.
struct IscvTable {
    int layer = 0;     // 1-based conv layer index
    int channels = 0;  // K of the layer
    std::vector<std::vector<double>> raw;   // one row per class
    std::vector<std::vector<double>> norm;  // rows divided by their maximum; empty until normalized
    std::vector<bool> present;              // false when the class had no samples

    int class_count() const { return static_cast<int>(raw.size()); }
};

// Raw scores for one conv layer.
IscvTable impact_scores(const ChainNet& net, const Dataset& data, int layer);

// Divides every row by its maximum entry; all-zero rows stay all-zero.
IscvTable normalize_iscv(IscvTable table);

// Raw + normalized scores for several layers from a single pass over the
// data: each sample contributes every requested layer's scale gradients from
// one shared forward/backward evaluation.
std::map<int, IscvTable> iscv_all_layers(const ChainNet& net, const Dataset& data,
                                         const std::vector<int>& layers);

// Every conv layer of the network, 1..conv_count.
std::vector<int> all_conv_layers(const ChainNet& net);

}  // namespace hsdnet
