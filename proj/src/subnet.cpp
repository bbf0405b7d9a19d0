#include "hsdnet/subnet.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "hsdnet/train.hpp"

namespace hsdnet {

double compression_rate(double params_base, double params_reduced) {
    if (params_reduced <= 0.0) {
        throw std::invalid_argument("compression_rate: reduced parameter count must be positive");
    }
    return params_base / params_reduced;
}

double saved_computations(double macs_base, double macs_reduced) {
    if (macs_base <= 0.0) {
        throw std::invalid_argument("saved_computations: baseline operation count must be positive");
    }
    return (macs_base - macs_reduced) / macs_base;
}

double speedup_rate(double latency_base, double latency_reduced) {
    if (latency_reduced <= 0.0) {
        throw std::invalid_argument("speedup_rate: reduced latency must be positive");
    }
    return latency_base / latency_reduced;
}

TreeNet extract_subnetwork(const TreeNet& tree, const std::vector<int>& class_subset) {
    if (class_subset.empty()) {
        throw std::invalid_argument("extract_subnetwork: empty class subset");
    }
    for (int c : class_subset) {
        if (c < 0 || c >= tree.class_count()) {
            throw std::invalid_argument("extract_subnetwork: class " + std::to_string(c) +
                                        " outside the class list");
        }
        if (tree.leaf_of_class(c) < 0) {
            throw std::invalid_argument("extract_subnetwork: class " + std::to_string(c) +
                                        " is not covered by any leaf");
        }
    }

    // keep the root-to-leaf path of every leaf intersecting the subset
    std::vector<bool> keep(tree.nodes.size(), false);
    for (int leaf : tree.leaf_ids()) {
        const auto& node = tree.nodes[static_cast<std::size_t>(leaf)];
        bool hit = false;
        for (int c : class_subset) {
            if (std::binary_search(node.class_set.begin(), node.class_set.end(), c)) {
                hit = true;
                break;
            }
        }
        if (!hit) continue;
        int cur = leaf;
        while (cur >= 0 && !keep[static_cast<std::size_t>(cur)]) {
            keep[static_cast<std::size_t>(cur)] = true;
            cur = tree.nodes[static_cast<std::size_t>(cur)].parent;
        }
    }

    std::vector<int> remap(tree.nodes.size(), -1);
    TreeNet out;
    out.class_list = tree.class_list;
    out.input_shape = tree.input_shape;
    out.stages = tree.stages;
    for (const auto& node : tree.nodes) {
        if (!keep[static_cast<std::size_t>(node.id)]) continue;
        TreeNode copy = node;
        copy.id = static_cast<int>(out.nodes.size());
        copy.parent = node.parent < 0 ? -1 : remap[static_cast<std::size_t>(node.parent)];
        copy.children.clear();
        remap[static_cast<std::size_t>(node.id)] = copy.id;
        if (copy.parent >= 0) {
            out.nodes[static_cast<std::size_t>(copy.parent)].children.push_back(copy.id);
        }
        out.nodes.push_back(std::move(copy));
    }

    // inner class sets shrink to the union of their kept leaves, bottom-up
    for (std::size_t i = out.nodes.size(); i-- > 0;) {
        TreeNode& node = out.nodes[i];
        if (node.children.empty()) continue;
        std::vector<int> acc;
        for (int c : node.children) {
            const auto& child = out.nodes[static_cast<std::size_t>(c)];
            std::vector<int> merged;
            std::set_union(acc.begin(), acc.end(), child.class_set.begin(), child.class_set.end(),
                           std::back_inserter(merged));
            acc = std::move(merged);
        }
        node.class_set = std::move(acc);
    }

    // edges and heads are carried over bit-identically under the new ids
    for (const auto& node : tree.nodes) {
        if (node.parent < 0 || !keep[static_cast<std::size_t>(node.id)]) continue;
        const std::string src = edge_key(node.parent, node.id);
        const std::string dst = edge_key(remap[static_cast<std::size_t>(node.parent)],
                                         remap[static_cast<std::size_t>(node.id)]);
        for (const char* part : {"/filter", "/bias", "/scale", "/shift"}) {
            if (tree.edges.has(src + part)) {
                out.edges.put(dst + part, tree.edges.at(src + part));
            }
        }
    }
    for (int leaf : tree.leaf_ids()) {
        if (!keep[static_cast<std::size_t>(leaf)]) continue;
        const std::string src = head_key(leaf);
        const std::string dst = head_key(remap[static_cast<std::size_t>(leaf)]);
        for (const char* part : {"/weight", "/bias"}) {
            if (tree.edges.has(src + part)) {
                out.edges.put(dst + part, tree.edges.at(src + part));
            }
        }
    }
    return out;
}

namespace {

template <typename Net>
double latency_impl(const Net& net, const Tensor& sample, int reps) {
    if (reps < 1) {
        throw std::invalid_argument("measure_latency: need at least one repetition");
    }
    for (int i = 0; i < 3; ++i) {
        (void)forward(net, sample);  // warm-up
    }
    std::vector<double> times(static_cast<std::size_t>(reps));
    for (int i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        (void)forward(net, sample);
        const auto t1 = std::chrono::steady_clock::now();
        times[static_cast<std::size_t>(i)] =
            std::chrono::duration<double>(t1 - t0).count();
    }
    std::sort(times.begin(), times.end());
    const std::size_t mid = times.size() / 2;
    return times.size() % 2 == 1 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
}

template <typename Base, typename Reduced>
MetricsReport metrics_impl(const Base& base, const Reduced& reduced, const Dataset& data,
                           int latency_reps) {
    MetricsReport rep;
    const auto shape = data.image_shape();
    const std::array<int, 3> input = {shape[0], shape[1], shape[2]};
    rep.params_base = count_params(base);
    rep.params_reduced = count_params(reduced);
    rep.macs_base = count_macs(base, input);
    rep.macs_reduced = count_macs(reduced, input);
    Tensor sample = stack_images(data, {0});
    rep.latency_base = latency_impl(base, sample, latency_reps);
    rep.latency_reduced = latency_impl(reduced, sample, latency_reps);
    rep.compression = compression_rate(static_cast<double>(rep.params_base),
                                       static_cast<double>(rep.params_reduced));
    rep.saved_computations = saved_computations(static_cast<double>(rep.macs_base),
                                                static_cast<double>(rep.macs_reduced));
    rep.speedup = speedup_rate(rep.latency_base, rep.latency_reduced);
    rep.accuracy_base = evaluate(base, data);
    rep.accuracy_reduced = evaluate(reduced, data);
    rep.accuracy_drop = rep.accuracy_base - rep.accuracy_reduced;
    return rep;
}

}  // namespace

double measure_latency(const ChainNet& net, const Tensor& sample, int reps) {
    return latency_impl(net, sample, reps);
}

double measure_latency(const TreeNet& tree, const Tensor& sample, int reps) {
    return latency_impl(tree, sample, reps);
}

MetricsReport compute_metrics(const ChainNet& base, const TreeNet& reduced, const Dataset& data,
                              int latency_reps) {
    return metrics_impl(base, reduced, data, latency_reps);
}

MetricsReport compute_metrics(const TreeNet& base, const TreeNet& reduced, const Dataset& data,
                              int latency_reps) {
    return metrics_impl(base, reduced, data, latency_reps);
}

std::vector<SweepRow> subset_sweep(const TreeNet& tree, const Dataset& data,
                                   const std::vector<int>& cardinalities,
                                   int combos_per_cardinality, std::uint64_t seed) {
    const int classes = tree.class_count();
    for (int k : cardinalities) {
        if (k < 2) {
            throw std::invalid_argument("subset_sweep: cardinalities below 2 are not valid");
        }
        if (k > classes) {
            throw std::invalid_argument("subset_sweep: cardinality " + std::to_string(k) +
                                        " exceeds the class count " + std::to_string(classes));
        }
    }
    if (combos_per_cardinality < 1) {
        throw std::invalid_argument("subset_sweep: need at least one combination per cardinality");
    }

    std::mt19937_64 rng(seed);
    const auto shape = data.image_shape();
    const std::array<int, 3> input = {shape[0], shape[1], shape[2]};

    std::vector<SweepRow> rows;
    for (int k : cardinalities) {
        std::set<std::vector<int>> seen;
        std::vector<std::vector<int>> subsets;
        if (k == classes) {
            std::vector<int> all(static_cast<std::size_t>(classes));
            std::iota(all.begin(), all.end(), 0);
            subsets.push_back(all);
        } else {
            // sampling without replacement over subsets, with a retry cap for
            // small composition spaces
            std::vector<int> pool(static_cast<std::size_t>(classes));
            std::iota(pool.begin(), pool.end(), 0);
            int attempts = 0;
            while (static_cast<int>(subsets.size()) < combos_per_cardinality &&
                   attempts < combos_per_cardinality * 64) {
                ++attempts;
                for (int i = 0; i < k; ++i) {
                    std::uniform_int_distribution<int> pick(i, classes - 1);
                    std::swap(pool[static_cast<std::size_t>(i)],
                              pool[static_cast<std::size_t>(pick(rng))]);
                }
                std::vector<int> subset(pool.begin(), pool.begin() + k);
                std::sort(subset.begin(), subset.end());
                if (seen.insert(subset).second) subsets.push_back(std::move(subset));
            }
        }

        for (const auto& subset : subsets) {
            TreeNet sub = extract_subnetwork(tree, subset);
            SweepRow row;
            row.subset = subset;
            row.subnet_accuracy = evaluate(sub, data, subset);
            row.fulltree_accuracy = evaluate(tree, data, subset);
            row.params = count_params(sub);
            row.macs = count_macs(sub, input);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "subset,cardinality,subnet_accuracy,fulltree_accuracy,params,macs\n";
    os.precision(17);
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.subset.size(); ++i) {
            if (i) os << ";";
            os << row.subset[i];
        }
        os << "," << row.subset.size() << "," << row.subnet_accuracy << ","
           << row.fulltree_accuracy << "," << row.params << "," << row.macs << "\n";
    }
    return os.str();
}

}  // namespace hsdnet
