#pragma once

// Shared fixtures: small chains and synthetic score tables that drive the
// decomposition without a training run.

#include <map>
#include <random>
#include <vector>

#include "hsdnet/chain.hpp"
#include "hsdnet/decompose.hpp"
#include "hsdnet/sensitivity.hpp"

namespace fixtures {

inline hsdnet::ChainConfig desk_config(int classes = 8, int image = 16, std::uint64_t seed = 7) {
    hsdnet::ChainConfig cfg;
    cfg.conv_widths = {16, 16, 32, 32, 64, 64};
    cfg.pool_after = {2, 4, 6};
    cfg.class_count = classes;
    cfg.input_shape = {3, image, image};
    cfg.seed = seed;
    return cfg;
}

inline hsdnet::ChainConfig tiny_config(int classes = 6, std::uint64_t seed = 3) {
    hsdnet::ChainConfig cfg;
    cfg.conv_widths = {6, 8, 8};
    cfg.pool_after = {1, 3};
    cfg.class_count = classes;
    cfg.input_shape = {3, 8, 8};
    cfg.seed = seed;
    return cfg;
}

// Uniform random tables, normalized; every class present.
inline std::map<int, hsdnet::IscvTable> random_iscv(const hsdnet::ChainNet& net,
                                                    std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    std::map<int, hsdnet::IscvTable> out;
    for (int l = 1; l <= net.conv_count(); ++l) {
        hsdnet::IscvTable t;
        t.layer = l;
        t.channels = net.conv_width(l);
        t.raw.assign(static_cast<std::size_t>(net.class_count()),
                     std::vector<double>(static_cast<std::size_t>(t.channels)));
        t.present.assign(static_cast<std::size_t>(net.class_count()), true);
        for (auto& row : t.raw) {
            for (double& v : row) v = dist(rng);
        }
        out[l] = hsdnet::normalize_iscv(std::move(t));
    }
    return out;
}

// Two well-separated class groups: the first `left` classes score high on the
// first half of every layer's channels, the rest on the second half, so Ward
// splits along the group boundary wherever clustering is allowed.
inline std::map<int, hsdnet::IscvTable> separable_iscv(const hsdnet::ChainNet& net, int left,
                                                       std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(0.0, 0.05);
    std::map<int, hsdnet::IscvTable> out;
    for (int l = 1; l <= net.conv_count(); ++l) {
        hsdnet::IscvTable t;
        t.layer = l;
        t.channels = net.conv_width(l);
        t.raw.assign(static_cast<std::size_t>(net.class_count()),
                     std::vector<double>(static_cast<std::size_t>(t.channels)));
        t.present.assign(static_cast<std::size_t>(net.class_count()), true);
        for (int c = 0; c < net.class_count(); ++c) {
            const bool lo = c < left;
            for (int k = 0; k < t.channels; ++k) {
                const bool first_half = k < t.channels / 2;
                t.raw[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)] =
                    (lo == first_half ? 0.9 : 0.0) + noise(rng);
            }
        }
        out[l] = hsdnet::normalize_iscv(std::move(t));
    }
    return out;
}

}  // namespace fixtures
