#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hsdnet/chain.hpp"
#include "hsdnet/tree.hpp"

namespace hsdnet {

struct SlicePlan {
    std::string edge;              // label used in error messages
    std::vector<int> out_channels; // selection into the source filter's output axis
    std::vector<int> in_channels;  // selection into the source filter's input axis
};

struct SlicedFilter {
    Tensor filter;  // (|O|, |I|, kh, kw)
    Tensor bias;    // (|O|)
};

// Pure gather: result.filter[o,i,:,:] = filters[O[o], I[i], :, :] and
// result.bias[o] = bias[O[o]].
SlicedFilter transfer_edge(const Tensor& filters, const Tensor& bias, const SlicePlan& plan);

// Fills every empty edge of `tree` from the trained chain: a node's own
// selection slices the output axis, its parent's selection the input axis.
// Leaf heads take the chain head's rows for the leaf's classes and columns
// for the leaf's channels.
void transfer_all(const ChainNet& chain, TreeNet& tree);

// Seeded uniform re-initialization of all edges and heads of an existing
// layout, for comparing against transferred parameters.
void random_init_tree(TreeNet& tree, std::uint64_t seed);

}  // namespace hsdnet
