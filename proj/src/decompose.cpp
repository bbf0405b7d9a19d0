#include "hsdnet/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace hsdnet {

DecomposePolicy default_policy(const ChainNet& net) {
    DecomposePolicy policy;
    for (int l = 2; l <= net.conv_count(); ++l) {
        if (net.pool_follows(l - 1)) policy.clustering_layers.push_back(l);
    }
    return policy;
}

namespace {

struct Cluster {
    int id = 0;                    // smallest class id of the members
    std::vector<int> members;      // sorted class ids
    std::vector<double> mean;
    double count = 0.0;
};

double merge_cost(const Cluster& a, const Cluster& b) {
    // increase in within-cluster variance: nA*nB/(nA+nB) * ||muA - muB||^2
    double d2 = 0.0;
    for (std::size_t k = 0; k < a.mean.size(); ++k) {
        const double d = a.mean[k] - b.mean[k];
        d2 += d * d;
    }
    return a.count * b.count / (a.count + b.count) * d2;
}

}  // namespace

ClusterResult ward_cluster(const std::vector<std::vector<double>>& vectors,
                           const std::vector<int>& class_ids) {
    if (vectors.size() < 2) {
        throw std::invalid_argument("ward_cluster: need at least two vectors");
    }
    if (class_ids.size() != vectors.size()) {
        throw std::invalid_argument("ward_cluster: one class id per vector required");
    }
    const std::size_t dim = vectors[0].size();
    for (const auto& v : vectors) {
        if (v.size() != dim) {
            throw std::invalid_argument("ward_cluster: vectors must share one length");
        }
    }

    std::vector<Cluster> clusters(vectors.size());
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        clusters[i] = {class_ids[i], {class_ids[i]}, vectors[i], 1.0};
    }

    while (clusters.size() > 2) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 1;
        int best_lo = 0, best_hi = 0;
        for (std::size_t i = 0; i < clusters.size(); ++i) {
            for (std::size_t j = i + 1; j < clusters.size(); ++j) {
                const double cost = merge_cost(clusters[i], clusters[j]);
                const int lo = std::min(clusters[i].id, clusters[j].id);
                const int hi = std::max(clusters[i].id, clusters[j].id);
                const bool better =
                    cost < best ||
                    (cost == best && (lo < best_lo || (lo == best_lo && hi < best_hi)));
                if (better) {
                    best = cost;
                    bi = i;
                    bj = j;
                    best_lo = lo;
                    best_hi = hi;
                }
            }
        }
        Cluster merged;
        Cluster& a = clusters[bi];
        Cluster& b = clusters[bj];
        merged.id = std::min(a.id, b.id);
        merged.members.resize(a.members.size() + b.members.size());
        std::merge(a.members.begin(), a.members.end(), b.members.begin(), b.members.end(),
                   merged.members.begin());
        merged.count = a.count + b.count;
        merged.mean.resize(dim);
        for (std::size_t k = 0; k < dim; ++k) {
            merged.mean[k] = (a.count * a.mean[k] + b.count * b.mean[k]) / merged.count;
        }
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
        clusters[bi] = std::move(merged);
    }

    ClusterResult result;
    const std::size_t small = std::min(clusters[0].members.size(), clusters[1].members.size());
    if (small <= 1) {
        result.merged_to_single = true;
        result.left.resize(clusters[0].members.size() + clusters[1].members.size());
        std::merge(clusters[0].members.begin(), clusters[0].members.end(),
                   clusters[1].members.begin(), clusters[1].members.end(), result.left.begin());
        return result;
    }
    // the cluster holding the globally smallest class id goes left
    const bool first_left = clusters[0].id < clusters[1].id;
    result.left = first_left ? clusters[0].members : clusters[1].members;
    result.right = first_left ? clusters[1].members : clusters[0].members;
    return result;
}

std::vector<int> select_channels(const IscvTable& table, const std::vector<int>& class_set,
                                 int keep_count) {
    if (class_set.empty()) {
        throw std::invalid_argument("select_channels: empty class set");
    }
    if (keep_count < 1 || keep_count > table.channels) {
        throw std::invalid_argument("select_channels: keep count " + std::to_string(keep_count) +
                                    " outside 1.." + std::to_string(table.channels));
    }
    if (table.norm.empty()) {
        throw std::invalid_argument("select_channels: table is not normalized");
    }
    std::vector<double> aggregate(static_cast<std::size_t>(table.channels), 0.0);
    for (int c : class_set) {
        if (c < 0 || c >= table.class_count()) {
            throw std::invalid_argument("select_channels: class " + std::to_string(c) +
                                        " outside the score table");
        }
        if (!table.present[static_cast<std::size_t>(c)]) {
            throw std::invalid_argument("select_channels: class " + std::to_string(c) +
                                        " has no samples in the score table");
        }
        const std::vector<double>& row = table.norm[static_cast<std::size_t>(c)];
        for (std::size_t k = 0; k < aggregate.size(); ++k) aggregate[k] += row[k];
    }
    std::vector<int> order(aggregate.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&aggregate](int x, int y) {
        if (aggregate[static_cast<std::size_t>(x)] != aggregate[static_cast<std::size_t>(y)]) {
            return aggregate[static_cast<std::size_t>(x)] > aggregate[static_cast<std::size_t>(y)];
        }
        return x < y;
    });
    std::vector<int> keep(order.begin(), order.begin() + keep_count);
    std::sort(keep.begin(), keep.end());
    return keep;
}

namespace {

int node_width(int child_layer, const std::vector<int>& class_set, int total_classes, int width,
               const DecomposePolicy& policy) {
    if (child_layer == 1) return width;  // the image-adjacent layer is never pruned
    if (policy.trunk_full_width && static_cast<int>(class_set.size()) == total_classes) {
        return width;
    }
    const int keep = static_cast<int>(width * policy.channel_keep_fraction);
    return std::max(1, keep);
}

}  // namespace

std::vector<ChildSpec> decompose_node(const IscvTable& iscv_at_child,
                                      const std::vector<int>& parent_class_set, int child_layer,
                                      int total_classes, const DecomposePolicy& policy) {
    if (parent_class_set.empty()) {
        throw std::invalid_argument("decompose_node: empty parent class set");
    }
    if (iscv_at_child.layer != child_layer) {
        throw std::invalid_argument("decompose_node: score table is for conv layer " +
                                    std::to_string(iscv_at_child.layer) + ", expected " +
                                    std::to_string(child_layer));
    }

    const bool clustering =
        std::find(policy.clustering_layers.begin(), policy.clustering_layers.end(), child_layer) !=
        policy.clustering_layers.end();

    std::vector<std::vector<int>> class_groups;
    if (clustering && parent_class_set.size() >= 2) {
        std::vector<std::vector<double>> rows;
        rows.reserve(parent_class_set.size());
        for (int c : parent_class_set) {
            if (c < 0 || c >= iscv_at_child.class_count() ||
                !iscv_at_child.present[static_cast<std::size_t>(c)]) {
                throw std::invalid_argument("decompose_node: class " + std::to_string(c) +
                                            " missing from the score table");
            }
            rows.push_back(iscv_at_child.norm[static_cast<std::size_t>(c)]);
        }
        ClusterResult split = ward_cluster(rows, parent_class_set);
        const std::size_t min_side =
            split.merged_to_single ? 0 : std::min(split.left.size(), split.right.size());
        if (split.merged_to_single ||
            min_side < static_cast<std::size_t>(policy.min_classes_per_node)) {
            class_groups.push_back(parent_class_set);
        } else {
            class_groups.push_back(split.left);
            class_groups.push_back(split.right);
        }
    } else {
        class_groups.push_back(parent_class_set);
    }

    std::vector<ChildSpec> children;
    for (auto& group : class_groups) {
        ChildSpec spec;
        spec.class_set = std::move(group);
        const int keep = node_width(child_layer, spec.class_set, total_classes,
                                    iscv_at_child.channels, policy);
        spec.channels = select_channels(iscv_at_child, spec.class_set, keep);
        children.push_back(std::move(spec));
    }

    // children must partition the parent's class set
    std::vector<int> covered;
    for (const auto& c : children) {
        covered.insert(covered.end(), c.class_set.begin(), c.class_set.end());
    }
    std::sort(covered.begin(), covered.end());
    if (covered != parent_class_set ||
        std::adjacent_find(covered.begin(), covered.end()) != covered.end()) {
        throw std::runtime_error("decompose_node: children do not partition the parent class set");
    }
    return children;
}

TreeNet build_hsd(const ChainNet& chain, const std::map<int, IscvTable>& iscv,
                  const DecomposePolicy& policy) {
    const int depth = chain.conv_count();
    for (int l = 1; l <= depth; ++l) {
        auto it = iscv.find(l);
        if (it == iscv.end()) {
            throw std::invalid_argument("build_hsd: no score table for conv layer " +
                                        std::to_string(l));
        }
        if (it->second.channels != chain.conv_width(l)) {
            throw std::invalid_argument("build_hsd: score table width mismatch at conv layer " +
                                        std::to_string(l));
        }
    }
    for (int l : policy.clustering_layers) {
        if (l < 1 || l > depth) {
            throw std::invalid_argument("build_hsd: clustering layer " + std::to_string(l) +
                                        " is not a conv layer of the chain");
        }
    }

    TreeNet tree;
    tree.class_list = chain.class_list;
    tree.input_shape = chain.input_shape;
    for (int l = 1; l <= depth; ++l) {
        const LayerSpec& spec = chain.layers[static_cast<std::size_t>(chain.conv_position(l))];
        ConvStage st;
        st.kind = spec.kind;
        st.width = spec.out_channels;
        st.stride = spec.stride;
        st.padding = spec.padding;
        st.pool_after = chain.pool_follows(l);
        st.affine = spec.affine;
        tree.stages.push_back(st);
    }

    TreeNode root;
    root.id = 0;
    root.parent = -1;
    root.layer = 0;
    root.class_set.resize(static_cast<std::size_t>(chain.class_count()));
    std::iota(root.class_set.begin(), root.class_set.end(), 0);
    root.channels.resize(static_cast<std::size_t>(chain.input_shape[0]));
    std::iota(root.channels.begin(), root.channels.end(), 0);
    tree.nodes.push_back(root);

    std::deque<int> queue;
    queue.push_back(0);
    while (!queue.empty()) {
        const int vid = queue.front();
        queue.pop_front();
        const int layer = tree.nodes[static_cast<std::size_t>(vid)].layer;
        if (layer >= depth) continue;  // no child conv layer in the chain

        const int child_layer = layer + 1;
        std::vector<ChildSpec> children =
            decompose_node(iscv.at(child_layer), tree.nodes[static_cast<std::size_t>(vid)].class_set,
                           child_layer, chain.class_count(), policy);
        for (auto& spec : children) {
            TreeNode node;
            node.id = static_cast<int>(tree.nodes.size());
            node.parent = vid;
            node.layer = child_layer;
            node.class_set = std::move(spec.class_set);
            node.channels = std::move(spec.channels);
            tree.nodes[static_cast<std::size_t>(vid)].children.push_back(node.id);
            tree.nodes.push_back(std::move(node));
            queue.push_back(tree.nodes.back().id);
        }
    }

    ValidationReport report = validate_tree(tree);
    if (!report.ok) {
        throw std::runtime_error("build_hsd: constructed tree is invalid: " + report.summary());
    }
    return tree;
}

}  // namespace hsdnet
