#include "hsdnet/transfer.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace hsdnet {

SlicedFilter transfer_edge(const Tensor& filters, const Tensor& bias, const SlicePlan& plan) {
    if (filters.rank() != 4) {
        throw std::invalid_argument("transfer_edge: filters must be rank 4");
    }
    const int out_k = filters.shape[0], in_k = filters.shape[1];
    const int kh = filters.shape[2], kw = filters.shape[3];
    if (bias.shape != std::vector<int>{out_k}) {
        throw std::invalid_argument("transfer_edge: bias length must match filter output channels");
    }
    if (plan.out_channels.empty() || plan.in_channels.empty()) {
        throw std::invalid_argument("transfer_edge: empty channel selection for edge " + plan.edge);
    }
    for (int o : plan.out_channels) {
        if (o < 0 || o >= out_k) {
            throw std::out_of_range("transfer_edge: output channel " + std::to_string(o) +
                                    " out of range for edge " + plan.edge);
        }
    }
    for (int i : plan.in_channels) {
        if (i < 0 || i >= in_k) {
            throw std::out_of_range("transfer_edge: input channel " + std::to_string(i) +
                                    " out of range for edge " + plan.edge);
        }
    }

    SlicedFilter out;
    out.filter = Tensor({static_cast<int>(plan.out_channels.size()),
                         static_cast<int>(plan.in_channels.size()), kh, kw});
    out.bias = Tensor({static_cast<int>(plan.out_channels.size())});
    const std::int64_t cell = static_cast<std::int64_t>(kh) * kw;
    for (std::size_t o = 0; o < plan.out_channels.size(); ++o) {
        out.bias.data[o] = bias.data[static_cast<std::size_t>(plan.out_channels[o])];
        for (std::size_t i = 0; i < plan.in_channels.size(); ++i) {
            const double* src = filters.ptr() +
                                (static_cast<std::int64_t>(plan.out_channels[o]) * in_k +
                                 plan.in_channels[i]) * cell;
            double* dst = out.filter.ptr() +
                          (static_cast<std::int64_t>(o) * plan.in_channels.size() + i) * cell;
            for (std::int64_t j = 0; j < cell; ++j) dst[j] = src[j];
        }
    }
    return out;
}

namespace {

Tensor slice_vector(const Tensor& v, const std::vector<int>& idx) {
    Tensor out({static_cast<int>(idx.size())});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.data[i] = v.data[static_cast<std::size_t>(idx[i])];
    }
    return out;
}

}  // namespace

void transfer_all(const ChainNet& chain, TreeNet& tree) {
    if (tree.depth() != chain.conv_count()) {
        throw std::invalid_argument("transfer_all: tree depth does not match the chain");
    }
    if (tree.class_list != chain.class_list) {
        throw std::invalid_argument("transfer_all: class lists differ");
    }

    for (const auto& node : tree.nodes) {
        if (node.parent < 0) continue;
        const auto& parent = tree.nodes[static_cast<std::size_t>(node.parent)];
        const std::string conv = "conv" + std::to_string(node.layer);
        SlicePlan plan{edge_key(node.parent, node.id), node.channels, parent.channels};
        SlicedFilter sliced = transfer_edge(chain.params.at(conv + "/filter"),
                                            chain.params.at(conv + "/bias"), plan);
        tree.edges.put(plan.edge + "/filter", std::move(sliced.filter));
        tree.edges.put(plan.edge + "/bias", std::move(sliced.bias));
        if (tree.stages[static_cast<std::size_t>(node.layer) - 1].affine) {
            tree.edges.put(plan.edge + "/scale",
                           slice_vector(chain.params.at(conv + "/scale"), node.channels));
            tree.edges.put(plan.edge + "/shift",
                           slice_vector(chain.params.at(conv + "/shift"), node.channels));
        }
    }

    // heads: rows by the leaf's classes, columns by the leaf's channels
    const Tensor& head_w = chain.params.at("head/weight");
    const Tensor& head_b = chain.params.at("head/bias");
    for (int leaf : tree.leaf_ids()) {
        const auto& node = tree.nodes[static_cast<std::size_t>(leaf)];
        Tensor w({static_cast<int>(node.class_set.size()), static_cast<int>(node.channels.size())});
        Tensor b({static_cast<int>(node.class_set.size())});
        const int in = head_w.shape[1];
        for (std::size_t r = 0; r < node.class_set.size(); ++r) {
            const int cls = node.class_set[r];
            b.data[r] = head_b.data[static_cast<std::size_t>(cls)];
            for (std::size_t c = 0; c < node.channels.size(); ++c) {
                w.data[r * node.channels.size() + c] =
                    head_w.data[static_cast<std::size_t>(cls) * in + node.channels[c]];
            }
        }
        tree.edges.put(head_key(leaf) + "/weight", std::move(w));
        tree.edges.put(head_key(leaf) + "/bias", std::move(b));
    }

    if (!tree.parameterized()) {
        throw std::runtime_error("transfer_all: an edge is still unfilled after transfer");
    }
}

void random_init_tree(TreeNet& tree, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto fill = [&rng](Tensor& t, double bound) {
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : t.data) v = dist(rng);
    };
    tree.edges.entries.clear();
    for (const auto& node : tree.nodes) {
        if (node.parent < 0) continue;
        const auto& parent = tree.nodes[static_cast<std::size_t>(node.parent)];
        const ConvStage& st = tree.stages[static_cast<std::size_t>(node.layer) - 1];
        const int k = st.kind == LayerKind::Conv3x3 ? 3 : 1;
        const std::string key = edge_key(node.parent, node.id);
        Tensor w({static_cast<int>(node.channels.size()), static_cast<int>(parent.channels.size()),
                  k, k});
        Tensor b({static_cast<int>(node.channels.size())});
        const double bound = 1.0 / std::sqrt(static_cast<double>(parent.channels.size()) * k * k);
        fill(w, bound);
        fill(b, bound);
        tree.edges.put(key + "/filter", std::move(w));
        tree.edges.put(key + "/bias", std::move(b));
        if (st.affine) {
            tree.edges.put(key + "/scale", Tensor::filled({static_cast<int>(node.channels.size())}, 1.0));
            tree.edges.put(key + "/shift", Tensor::zeros({static_cast<int>(node.channels.size())}));
        }
    }
    for (int leaf : tree.leaf_ids()) {
        const auto& node = tree.nodes[static_cast<std::size_t>(leaf)];
        const std::string key = head_key(leaf);
        Tensor w({static_cast<int>(node.class_set.size()), static_cast<int>(node.channels.size())});
        Tensor b({static_cast<int>(node.class_set.size())});
        const double bound = 1.0 / std::sqrt(static_cast<double>(node.channels.size()));
        fill(w, bound);
        fill(b, bound);
        tree.edges.put(key + "/weight", std::move(w));
        tree.edges.put(key + "/bias", std::move(b));
    }
}

}  // namespace hsdnet
