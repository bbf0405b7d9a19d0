#pragma once

#include <map>
#include <vector>

#include "hsdnet/chain.hpp"
#include "hsdnet/sensitivity.hpp"
#include "hsdnet/tree.hpp"

namespace hsdnet {

struct DecomposePolicy {
    // 1-based conv layers at which a node's class set may split in two
    std::vector<int> clustering_layers;
    int min_classes_per_node = 2;
    double channel_keep_fraction = 0.5;
    // keep the full channel count on nodes that still cover every class
    bool trunk_full_width = false;
};

// Clustering defaults to each conv layer directly following a max-pool, so a
// split happens once per resolution stage past the first.
DecomposePolicy default_policy(const ChainNet& net);

struct ClusterResult {
    std::vector<int> left;   // sorted class ids; holds everything when merged
    std::vector<int> right;  // empty when merged
    bool merged_to_single = false;
};

// Bottom-up minimum-variance (Ward) merging of one score row per class until
// two clusters remain. Equal merge costs break on the lexicographically
// smallest pair of cluster ids, a cluster's id being its smallest class id.
// A final cluster of cardinality 1 (equivalently, one of cardinality m-1)
// collapses the outcome to a single node.
ClusterResult ward_cluster(const std::vector<std::vector<double>>& vectors,
                           const std::vector<int>& class_ids);

// Channels ranked by the sum of normalized scores over `class_set`; the top
// `keep_count` are returned sorted ascending, ties going to the lower index.
std::vector<int> select_channels(const IscvTable& table, const std::vector<int>& class_set,
                                 int keep_count);

struct ChildSpec {
    std::vector<int> class_set;
    std::vector<int> channels;
};

// One or two child node specifications for a parent covering
// `parent_class_set`, decided by the child layer's score table.
std::vector<ChildSpec> decompose_node(const IscvTable& iscv_at_child,
                                      const std::vector<int>& parent_class_set, int child_layer,
                                      int total_classes, const DecomposePolicy& policy);

// Breadth-first construction of the decomposed layout: topology and channel
// selections only; every edge starts empty and is filled by the parameter
// transfer. `iscv` must cover each conv layer of the chain.
TreeNet build_hsd(const ChainNet& chain, const std::map<int, IscvTable>& iscv,
                  const DecomposePolicy& policy);

}  // namespace hsdnet
