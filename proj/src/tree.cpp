#include "hsdnet/tree.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

#include "hsdnet/engine.hpp"

namespace hsdnet {

std::string edge_key(int parent_id, int child_id) {
    return "edge/" + std::to_string(parent_id) + "-" + std::to_string(child_id);
}

std::string head_key(int leaf_id) { return "head/" + std::to_string(leaf_id); }

std::vector<int> TreeNet::leaf_ids() const {
    std::vector<int> out;
    for (const auto& n : nodes) {
        if (n.children.empty() && n.layer == depth()) out.push_back(n.id);
    }
    return out;
}

int TreeNet::leaf_of_class(int class_id) const {
    for (const auto& n : nodes) {
        if (n.children.empty() && n.layer == depth() &&
            std::binary_search(n.class_set.begin(), n.class_set.end(), class_id)) {
            return n.id;
        }
    }
    return -1;
}

bool TreeNet::parameterized() const {
    for (const auto& n : nodes) {
        if (n.parent < 0) continue;
        if (!edges.has(edge_key(n.parent, n.id) + "/filter")) return false;
    }
    for (int leaf : leaf_ids()) {
        if (!edges.has(head_key(leaf) + "/weight")) return false;
    }
    return true;
}

std::string ValidationReport::summary() const {
    std::ostringstream os;
    if (ok) {
        os << "ok";
        return os.str();
    }
    for (const auto& issue : issues) {
        os << issue.rule << " at node";
        for (int id : issue.node_ids) os << " " << id;
        if (!issue.detail.empty()) os << " (" << issue.detail << ")";
        os << "; ";
    }
    return os.str();
}

namespace {

std::vector<int> set_union_sorted(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

bool sets_intersect(const std::vector<int>& a, const std::vector<int>& b) {
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) return true;
        if (a[i] < b[j]) ++i; else ++j;
    }
    return false;
}

}  // namespace

ValidationReport validate_tree(const TreeNet& tree) {
    ValidationReport rep;
    auto fail = [&rep](std::string rule, std::vector<int> ids, std::string detail) {
        rep.ok = false;
        rep.issues.push_back({std::move(rule), std::move(ids), std::move(detail)});
    };

    if (tree.nodes.empty()) {
        fail("empty-tree", {}, "no nodes");
        return rep;
    }
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        if (tree.nodes[i].id != static_cast<int>(i)) {
            fail("id-order", {tree.nodes[i].id}, "node ids must be dense and index the node table");
            return rep;
        }
    }
    const TreeNode& root = tree.nodes[0];
    if (root.parent != -1 || root.layer != 0) {
        fail("root", {root.id}, "node 0 must be the layer-0 root");
    }

    for (const auto& n : tree.nodes) {
        if (n.class_set.empty()) {
            fail("empty-class-set", {n.id}, "");
        }
        if (!std::is_sorted(n.class_set.begin(), n.class_set.end()) ||
            std::adjacent_find(n.class_set.begin(), n.class_set.end()) != n.class_set.end()) {
            fail("class-set-order", {n.id}, "class set must be sorted and unique");
        }
        if (n.id != 0 && static_cast<int>(n.class_set.size()) < 2) {
            fail("min-two-classes", {n.id},
                 "node keeps " + std::to_string(n.class_set.size()) + " class");
        }
        if (!std::is_sorted(n.channels.begin(), n.channels.end()) ||
            std::adjacent_find(n.channels.begin(), n.channels.end()) != n.channels.end()) {
            fail("channel-order", {n.id}, "channel selection must be strictly increasing");
        }
        if (n.channels.empty()) {
            fail("empty-channels", {n.id}, "");
        } else if (n.layer > 0) {
            if (n.layer > tree.depth()) {
                fail("layer-range", {n.id}, "layer exceeds tree depth");
            } else {
                const int k = tree.stages[static_cast<std::size_t>(n.layer) - 1].width;
                if (n.channels.back() >= k) {
                    fail("channel-range", {n.id},
                         "channel " + std::to_string(n.channels.back()) + " >= width " + std::to_string(k));
                }
            }
        }
        if (n.parent >= 0) {
            if (n.parent >= static_cast<int>(tree.nodes.size())) {
                fail("parent-range", {n.id}, "");
                continue;
            }
            const TreeNode& p = tree.nodes[static_cast<std::size_t>(n.parent)];
            if (n.layer != p.layer + 1) {
                fail("layer-increment", {n.id, p.id}, "child layer must be parent layer + 1");
            }
            if (std::find(p.children.begin(), p.children.end(), n.id) == p.children.end()) {
                fail("child-link", {n.id, p.id}, "parent does not list this child");
            }
        }
    }

    for (const auto& n : tree.nodes) {
        const bool leaf = n.layer == tree.depth();
        if (leaf) {
            if (!n.children.empty()) {
                fail("leaf-children", {n.id}, "node at the final layer cannot have children");
            }
            continue;
        }
        if (n.children.empty()) {
            fail("arity", {n.id}, "inner node has no child");
            continue;
        }
        if (n.children.size() > 2) {
            fail("arity", {n.id}, "more than two children");
            continue;
        }
        if (n.children.size() == 2) {
            const auto& lc = tree.nodes[static_cast<std::size_t>(n.children[0])];
            const auto& rc = tree.nodes[static_cast<std::size_t>(n.children[1])];
            if (sets_intersect(lc.class_set, rc.class_set)) {
                fail("sibling-overlap", {n.id, lc.id, rc.id}, "sibling class sets intersect");
            }
            if (set_union_sorted(lc.class_set, rc.class_set) != n.class_set) {
                fail("child-union", {n.id, lc.id, rc.id},
                     "children class sets do not union to the parent's");
            }
        } else {
            const auto& c = tree.nodes[static_cast<std::size_t>(n.children[0])];
            if (c.class_set != n.class_set) {
                fail("child-union", {n.id, c.id}, "single child must keep the parent's class set");
            }
        }
    }

    // leaves partition the root's class set
    std::vector<int> acc;
    bool disjoint = true;
    std::vector<int> leaf_list = tree.leaf_ids();
    for (int id : leaf_list) {
        const auto& leaf = tree.nodes[static_cast<std::size_t>(id)];
        if (sets_intersect(acc, leaf.class_set)) disjoint = false;
        acc = set_union_sorted(acc, leaf.class_set);
    }
    if (!disjoint) {
        fail("leaf-partition", leaf_list, "leaf class sets overlap");
    }
    if (acc != root.class_set) {
        fail("leaf-partition", leaf_list, "leaf class sets do not cover the root's class set");
    }
    return rep;
}

std::string export_dot(const TreeNet& tree) {
    std::ostringstream os;
    os << "digraph decomposed_net {\n";
    os << "  rankdir=TB;\n";
    os << "  node [shape=box, fontname=\"Helvetica\"];\n";
    for (const auto& n : tree.nodes) {
        os << "  n" << n.id << " [label=\"";
        if (n.parent < 0) {
            os << "input";
        } else {
            os << "L" << n.layer;
        }
        os << " | ch=" << n.channels.size() << " | classes={";
        for (std::size_t i = 0; i < n.class_set.size(); ++i) {
            if (i) os << ",";
            os << n.class_set[i];
        }
        os << "}\"];\n";
    }
    for (const auto& n : tree.nodes) {
        for (int c : n.children) {
            os << "  n" << n.id << " -> n" << c << ";\n";
        }
    }
    os << "}\n";
    return os.str();
}

namespace {

std::vector<int> tree_fingerprint(const TreeNet& tree) {
    std::vector<int> fp;
    fp.push_back(static_cast<int>(tree.nodes.size()));
    for (const auto& n : tree.nodes) {
        fp.push_back(n.parent);
        fp.push_back(static_cast<int>(n.channels.size()));
        fp.push_back(static_cast<int>(n.class_set.size()));
    }
    fp.push_back(tree.class_count());
    return fp;
}

}  // namespace

TreeForward forward(const TreeNet& tree, const Tensor& batch) {
    if (batch.rank() != 4 || batch.shape[1] != tree.input_shape[0] ||
        batch.shape[2] != tree.input_shape[1] || batch.shape[3] != tree.input_shape[2]) {
        throw std::runtime_error("forward: batch shape " + shape_string(batch.shape) +
                                 " does not match tree input");
    }
    if (!tree.parameterized()) {
        throw std::runtime_error("forward: tree has unfilled edges; run the parameter transfer first");
    }
    const int n = batch.shape[0];
    const int classes = tree.class_count();

    TreeForward fr;
    fr.input = batch;
    fr.net_fingerprint = tree_fingerprint(tree);
    fr.node_pre.resize(tree.nodes.size());
    fr.node_out.resize(tree.nodes.size());
    fr.leaf_pooled.resize(tree.nodes.size());
    fr.leaf_logits.resize(tree.nodes.size());

    fr.node_out[0] = batch;
    for (std::size_t i = 1; i < tree.nodes.size(); ++i) {
        const TreeNode& node = tree.nodes[i];
        const ConvStage& st = tree.stages[static_cast<std::size_t>(node.layer) - 1];
        const Tensor& x = fr.node_out[static_cast<std::size_t>(node.parent)];
        const std::string key = edge_key(node.parent, node.id);
        Tensor pre = conv2d(x, tree.edges.at(key + "/filter"), tree.edges.at(key + "/bias"),
                            st.stride, st.padding);
        if (st.affine) {
            pre = channel_affine(pre, tree.edges.at(key + "/scale"), tree.edges.at(key + "/shift"));
        }
        Tensor out = relu(pre);
        if (st.pool_after) out = maxpool2x2(out);
        fr.node_pre[i] = std::move(pre);
        fr.node_out[i] = std::move(out);
    }

    fr.logits = Tensor({n, classes});
    for (int leaf : tree.leaf_ids()) {
        const TreeNode& node = tree.nodes[static_cast<std::size_t>(leaf)];
        const std::string key = head_key(leaf);
        Tensor pooled = global_avg_pool(fr.node_out[static_cast<std::size_t>(leaf)]);
        Tensor logits = dense(pooled, tree.edges.at(key + "/weight"), tree.edges.at(key + "/bias"));
        // scatter the leaf's logits into the global class order
        for (int bi = 0; bi < n; ++bi) {
            for (std::size_t j = 0; j < node.class_set.size(); ++j) {
                fr.logits.data[static_cast<std::size_t>(bi) * classes + node.class_set[j]] =
                    logits.data[static_cast<std::size_t>(bi) * node.class_set.size() + j];
            }
        }
        fr.leaf_pooled[static_cast<std::size_t>(leaf)] = std::move(pooled);
        fr.leaf_logits[static_cast<std::size_t>(leaf)] = std::move(logits);
    }
    fr.probs = softmax_rows(fr.logits);
    return fr;
}

GradientStore backward(const TreeNet& tree, const TreeForward& fr, const Tensor& grad_at_output,
                       bool at_logits) {
    if (fr.net_fingerprint != tree_fingerprint(tree)) {
        throw std::runtime_error("backward: forward result is stale for this tree");
    }
    const int n = fr.input.shape[0];
    const int classes = tree.class_count();

    Tensor glogits;
    if (at_logits) {
        if (!grad_at_output.same_shape(fr.logits)) {
            throw std::runtime_error("backward: logit gradient shape mismatch");
        }
        glogits = grad_at_output;
    } else {
        if (!grad_at_output.same_shape(fr.probs)) {
            throw std::runtime_error("backward: output gradient shape mismatch");
        }
        glogits = softmax_backward(fr.probs, grad_at_output);
    }

    GradientStore gs;
    std::vector<Tensor> node_grad(tree.nodes.size());  // grad at node_out

    for (int leaf : tree.leaf_ids()) {
        const TreeNode& node = tree.nodes[static_cast<std::size_t>(leaf)];
        const std::string key = head_key(leaf);
        Tensor gleaf({n, static_cast<int>(node.class_set.size())});
        for (int bi = 0; bi < n; ++bi) {
            for (std::size_t j = 0; j < node.class_set.size(); ++j) {
                gleaf.data[static_cast<std::size_t>(bi) * node.class_set.size() + j] =
                    glogits.data[static_cast<std::size_t>(bi) * classes + node.class_set[j]];
            }
        }
        Tensor gpooled, gw, gb;
        dense_backward(fr.leaf_pooled[static_cast<std::size_t>(leaf)], tree.edges.at(key + "/weight"),
                       gleaf, &gpooled, &gw, &gb);
        gs.params[key + "/weight"] = std::move(gw);
        gs.params[key + "/bias"] = std::move(gb);
        node_grad[static_cast<std::size_t>(leaf)] =
            global_avg_pool_backward(fr.node_out[static_cast<std::size_t>(leaf)], gpooled);
    }

    // children have larger ids than parents, so a reverse sweep sees every
    // child before its parent; sibling contributions add in child-id order
    for (std::size_t i = tree.nodes.size(); i-- > 1;) {
        const TreeNode& node = tree.nodes[i];
        if (node_grad[i].data.empty()) {
            throw std::runtime_error("backward: node " + std::to_string(node.id) +
                                     " received no gradient");
        }
        const ConvStage& st = tree.stages[static_cast<std::size_t>(node.layer) - 1];
        const std::string key = edge_key(node.parent, node.id);
        const Tensor& x = fr.node_out[static_cast<std::size_t>(node.parent)];

        Tensor g = std::move(node_grad[i]);
        if (st.pool_after) {
            Tensor relu_out = relu(fr.node_pre[i]);
            g = maxpool2x2_backward(relu_out, g);
        }
        g = relu_backward(fr.node_pre[i], g);
        if (st.affine) {
            Tensor conv_out = conv2d(x, tree.edges.at(key + "/filter"), tree.edges.at(key + "/bias"),
                                     st.stride, st.padding);
            Tensor gx, gscale, gshift;
            channel_affine_backward(conv_out, tree.edges.at(key + "/scale"), g, &gx, &gscale, &gshift);
            gs.params[key + "/scale"] = std::move(gscale);
            gs.params[key + "/shift"] = std::move(gshift);
            g = std::move(gx);
        }
        const bool need_gx = node.parent != 0;
        Tensor gx, gw, gb;
        conv2d_backward(x, tree.edges.at(key + "/filter"), g, st.stride, st.padding,
                        need_gx ? &gx : nullptr, &gw, &gb);
        gs.params[key + "/filter"] = std::move(gw);
        gs.params[key + "/bias"] = std::move(gb);
        if (need_gx) {
            Tensor& dst = node_grad[static_cast<std::size_t>(node.parent)];
            if (dst.data.empty()) {
                dst = std::move(gx);
            } else {
                for (std::size_t j = 0; j < dst.data.size(); ++j) dst.data[j] += gx.data[j];
            }
        }
    }
    return gs;
}

std::uint64_t count_params(const TreeNet& tree) {
    std::uint64_t total = 0;
    for (const auto& n : tree.nodes) {
        if (n.parent < 0) continue;
        const ConvStage& st = tree.stages[static_cast<std::size_t>(n.layer) - 1];
        const auto& p = tree.nodes[static_cast<std::size_t>(n.parent)];
        const std::uint64_t k = st.kind == LayerKind::Conv3x3 ? 3 : 1;
        total += static_cast<std::uint64_t>(n.channels.size()) * p.channels.size() * k * k;
        total += static_cast<std::uint64_t>(n.channels.size());
        if (st.affine) total += 2ull * n.channels.size();
    }
    for (int leaf : tree.leaf_ids()) {
        const auto& n = tree.nodes[static_cast<std::size_t>(leaf)];
        total += static_cast<std::uint64_t>(n.class_set.size()) * n.channels.size();
        total += static_cast<std::uint64_t>(n.class_set.size());
    }
    return total;
}

std::uint64_t count_macs(const TreeNet& tree, const std::array<int, 3>& input_shape) {
    // spatial extents are shared by every node at the same depth
    std::vector<std::pair<int, int>> extent(tree.stages.size() + 1);
    extent[0] = {input_shape[1], input_shape[2]};
    for (std::size_t l = 0; l < tree.stages.size(); ++l) {
        const ConvStage& st = tree.stages[l];
        const int k = st.kind == LayerKind::Conv3x3 ? 3 : 1;
        int h = (extent[l].first + 2 * st.padding - k) / st.stride + 1;
        int w = (extent[l].second + 2 * st.padding - k) / st.stride + 1;
        if (st.pool_after) {
            h /= 2;
            w /= 2;
        }
        extent[l + 1] = {h, w};
    }

    std::uint64_t total = 0;
    for (const auto& n : tree.nodes) {
        if (n.parent < 0) continue;
        const ConvStage& st = tree.stages[static_cast<std::size_t>(n.layer) - 1];
        const auto& p = tree.nodes[static_cast<std::size_t>(n.parent)];
        const int k = st.kind == LayerKind::Conv3x3 ? 3 : 1;
        // conv output extent before any pool at this depth
        const int oh = (extent[static_cast<std::size_t>(n.layer) - 1].first + 2 * st.padding - k) / st.stride + 1;
        const int ow = (extent[static_cast<std::size_t>(n.layer) - 1].second + 2 * st.padding - k) / st.stride + 1;
        total += static_cast<std::uint64_t>(n.channels.size()) * p.channels.size() *
                 static_cast<std::uint64_t>(k) * k * static_cast<std::uint64_t>(oh) * ow;
    }
    for (int leaf : tree.leaf_ids()) {
        const auto& n = tree.nodes[static_cast<std::size_t>(leaf)];
        total += static_cast<std::uint64_t>(n.class_set.size()) * n.channels.size();
    }
    return total;
}

}  // namespace hsdnet
