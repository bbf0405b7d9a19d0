#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hsdnet/chain.hpp"
#include "hsdnet/tensor.hpp"

namespace hsdnet {

// One node of the decomposed network. The root (id 0) is the input image;
// every other node is an activation map produced from its parent by the conv
// stage at its layer. `channels` indexes into the channels of the source
// chain's conv layer at the same depth.
struct TreeNode {
    int id = 0;
    int parent = -1;  // -1 marks the root
    int layer = 0;    // conv edges from the root
    std::vector<int> class_set;  // sorted global class ids
    std::vector<int> channels;   // sorted, strictly increasing
    std::vector<int> children;   // creation order
};

// Per-depth structure inherited from the source chain.
struct ConvStage {
    LayerKind kind = LayerKind::Conv3x3;
    int width = 0;  // channel count of the source chain at this depth
    int stride = 1;
    int padding = 1;
    bool pool_after = false;
    bool affine = false;
};

struct TreeNet {
    std::vector<TreeNode> nodes;  // id-indexed; parents precede children
    // edge/<parent>-<child>/{filter,bias[,scale,shift]} and head/<leaf>/{weight,bias}
    ParamStore edges;
    std::vector<std::string> class_list;
    std::array<int, 3> input_shape = {0, 0, 0};
    std::vector<ConvStage> stages;  // stages[l-1] describes conv depth l

    int depth() const { return static_cast<int>(stages.size()); }
    int class_count() const { return static_cast<int>(class_list.size()); }
    std::vector<int> leaf_ids() const;
    // leaf holding a given class; -1 when no leaf covers it
    int leaf_of_class(int class_id) const;
    bool parameterized() const;
};

std::string edge_key(int parent_id, int child_id);
std::string head_key(int leaf_id);

struct ValidationIssue {
    std::string rule;
    std::vector<int> node_ids;
    std::string detail;
};

struct ValidationReport {
    bool ok = true;
    std::vector<ValidationIssue> issues;

    std::string summary() const;
};

// Checks the structural contract: children partition their parent's class
// set, sibling class sets are disjoint, leaf class sets partition the root's,
// arity is 1..2 for inner nodes, every node keeps at least two classes,
// child layers increment by one, and channel selections are valid.
ValidationReport validate_tree(const TreeNet& tree);

// Graphviz digraph; node ordering follows ids so output is reproducible.
std::string export_dot(const TreeNet& tree);

struct TreeForward {
    Tensor input;
    std::vector<Tensor> node_pre;  // per node: pre-activation (input copy at root)
    std::vector<Tensor> node_out;  // per node: value feeding the children
    std::vector<Tensor> leaf_pooled;  // per node (leaves only): global-average features
    std::vector<Tensor> leaf_logits;  // per node (leaves only)
    Tensor logits;  // (N, |C|) assembled in global class order
    Tensor probs;
    std::vector<int> net_fingerprint;
};

TreeForward forward(const TreeNet& tree, const Tensor& batch);
GradientStore backward(const TreeNet& tree, const TreeForward& fr, const Tensor& grad_at_output,
                       bool at_logits = false);

std::uint64_t count_params(const TreeNet& tree);
std::uint64_t count_macs(const TreeNet& tree, const std::array<int, 3>& input_shape);

}  // namespace hsdnet
