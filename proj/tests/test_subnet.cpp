#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "hsdnet/decompose.hpp"
#include "hsdnet/subnet.hpp"
#include "hsdnet/train.hpp"
#include "hsdnet/transfer.hpp"

using namespace hsdnet;

namespace {

TreeNet desk_tree(ChainNet& chain, std::uint64_t seed = 7) {
    TreeNet tree = build_hsd(chain, fixtures::separable_iscv(chain, 4, seed), default_policy(chain));
    transfer_all(chain, tree);
    return tree;
}

}  // namespace

TEST_CASE("metric formulas reproduce the published arithmetic") {
    CHECK(compression_rate(14.7e6, 3.7e6) == doctest::Approx(3.97).epsilon(0.0013));
    CHECK(100.0 * saved_computations(313e6, 212e6) == doctest::Approx(32.27).epsilon(0.0004));
    CHECK(100.0 * saved_computations(313e6, 438e6) == doctest::Approx(-39.94).epsilon(0.0004));

    CHECK(compression_rate(5.0, 5.0) == 1.0);
    CHECK(saved_computations(5.0, 5.0) == 0.0);
    CHECK(speedup_rate(2.0, 2.0) == 1.0);
    CHECK_THROWS_AS(compression_rate(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("extracting the full class list reproduces the tree exactly") {
    ChainNet chain = build_chain(fixtures::desk_config(8));
    TreeNet tree = desk_tree(chain);
    TreeNet sub = extract_subnetwork(tree, {0, 1, 2, 3, 4, 5, 6, 7});
    REQUIRE(sub.nodes.size() == tree.nodes.size());
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        CHECK(sub.nodes[i].id == tree.nodes[i].id);
        CHECK(sub.nodes[i].parent == tree.nodes[i].parent);
        CHECK(sub.nodes[i].class_set == tree.nodes[i].class_set);
        CHECK(sub.nodes[i].channels == tree.nodes[i].channels);
    }
    for (const auto& [name, t] : tree.edges.entries) {
        REQUIRE(sub.edges.at(name).data == t.data);
    }
}

TEST_CASE("a subset inside one leaf extracts a single chain path") {
    ChainNet chain = build_chain(fixtures::desk_config(8));
    TreeNet tree = desk_tree(chain);
    REQUIRE(tree.leaf_ids().size() >= 2);
    const TreeNode& leaf = tree.nodes[static_cast<std::size_t>(tree.leaf_ids()[0])];
    REQUIRE(leaf.class_set.size() >= 2);
    std::vector<int> subset = {leaf.class_set[0], leaf.class_set[1]};

    TreeNet sub = extract_subnetwork(tree, subset);
    CHECK(validate_tree(sub).ok);
    CHECK(sub.leaf_ids().size() == 1);
    CHECK(sub.nodes.size() == static_cast<std::size_t>(sub.depth()) + 1);
    for (const auto& n : sub.nodes) {
        CHECK(n.children.size() <= 1);
    }
}

TEST_CASE("extraction keeps leaf logits bit-identical on random inputs") {
    ChainNet chain = build_chain(fixtures::desk_config(8));
    TreeNet tree = desk_tree(chain);
    std::mt19937_64 rng(15);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::uniform_int_distribution<int> cls(0, 7);

    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> subset;
        const int want = 2 + trial % 4;
        while (static_cast<int>(subset.size()) < want) {
            const int c = cls(rng);
            if (std::find(subset.begin(), subset.end(), c) == subset.end()) subset.push_back(c);
        }
        std::sort(subset.begin(), subset.end());
        TreeNet sub = extract_subnetwork(tree, subset);
        REQUIRE(validate_tree(sub).ok);

        Tensor batch({2, 3, 16, 16});
        for (double& v : batch.data) v = dist(rng);
        TreeForward full = forward(tree, batch);
        TreeForward part = forward(sub, batch);
        // match leaves by class coverage
        for (int sub_leaf : sub.leaf_ids()) {
            const TreeNode& sn = sub.nodes[static_cast<std::size_t>(sub_leaf)];
            const int full_leaf = tree.leaf_of_class(sn.class_set[0]);
            REQUIRE(full_leaf >= 0);
            const Tensor& a = part.leaf_logits[static_cast<std::size_t>(sub_leaf)];
            const Tensor& b = full.leaf_logits[static_cast<std::size_t>(full_leaf)];
            REQUIRE(a.shape == b.shape);
            for (std::size_t i = 0; i < a.data.size(); ++i) {
                REQUIRE(std::abs(a.data[i] - b.data[i]) <= 1e-12);
            }
        }
    }
}

TEST_CASE("kept-leaf monotonicity of size and operations") {
    ChainNet chain = build_chain(fixtures::desk_config(8));
    TreeNet tree = desk_tree(chain);
    REQUIRE(tree.leaf_ids().size() >= 2);

    const TreeNode& first = tree.nodes[static_cast<std::size_t>(tree.leaf_ids()[0])];
    std::vector<int> small_subset = {first.class_set[0], first.class_set[1]};
    std::vector<int> all = {0, 1, 2, 3, 4, 5, 6, 7};

    TreeNet small = extract_subnetwork(tree, small_subset);
    TreeNet big = extract_subnetwork(tree, all);
    CHECK(count_params(small) <= count_params(big));
    CHECK(count_macs(small, {3, 16, 16}) <= count_macs(big, {3, 16, 16}));
}

TEST_CASE("extraction rejects empty or unknown subsets") {
    ChainNet chain = build_chain(fixtures::desk_config(8));
    TreeNet tree = desk_tree(chain);
    CHECK_THROWS_AS(extract_subnetwork(tree, {}), std::invalid_argument);
    CHECK_THROWS_AS(extract_subnetwork(tree, {42}), std::invalid_argument);
}

TEST_CASE("compute_metrics fills the ratio fields consistently") {
    ChainNet chain = build_chain(fixtures::desk_config(8));
    TreeNet tree = desk_tree(chain);
    Dataset data = synth_dataset({8, 4, 16, 7});
    MetricsReport rep = compute_metrics(chain, tree, data, 5);
    CHECK(rep.params_base == count_params(chain));
    CHECK(rep.params_reduced == count_params(tree));
    CHECK(rep.compression == doctest::Approx(static_cast<double>(rep.params_base) /
                                             static_cast<double>(rep.params_reduced)));
    CHECK(rep.saved_computations ==
          doctest::Approx((static_cast<double>(rep.macs_base) - static_cast<double>(rep.macs_reduced)) /
                          static_cast<double>(rep.macs_base)));
    CHECK(rep.latency_base > 0.0);
    CHECK(rep.latency_reduced > 0.0);
    CHECK(rep.speedup == doctest::Approx(rep.latency_base / rep.latency_reduced));
    CHECK(rep.accuracy_drop == doctest::Approx(rep.accuracy_base - rep.accuracy_reduced));
}

TEST_CASE("subset sweep covers the requested cardinalities deterministically") {
    ChainNet chain = build_chain(fixtures::desk_config(8));
    TreeNet tree = desk_tree(chain);
    Dataset data = synth_dataset({8, 6, 16, 7});

    std::vector<SweepRow> rows = subset_sweep(tree, data, {2, 3}, 5, 99);
    CHECK(rows.size() == 10);
    for (const auto& row : rows) {
        CHECK(row.params > 0);
        CHECK(row.macs > 0);
        CHECK((row.subset.size() == 2 || row.subset.size() == 3));
    }
    std::vector<SweepRow> again = subset_sweep(tree, data, {2, 3}, 5, 99);
    REQUIRE(again.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(again[i].subset == rows[i].subset);
        CHECK(again[i].subnet_accuracy == rows[i].subnet_accuracy);
    }

    // the full cardinality is the identity extraction
    std::vector<SweepRow> full = subset_sweep(tree, data, {8}, 3, 1);
    REQUIRE(full.size() == 1);
    CHECK(full[0].subnet_accuracy == full[0].fulltree_accuracy);
    CHECK(full[0].params == count_params(tree));

    CHECK_THROWS_AS(subset_sweep(tree, data, {1}, 3, 1), std::invalid_argument);
    CHECK_THROWS_AS(subset_sweep(tree, data, {9}, 3, 1), std::invalid_argument);

    const std::string csv = sweep_csv(rows);
    CHECK(csv.find("subset,cardinality,subnet_accuracy,fulltree_accuracy,params,macs") == 0);
}

TEST_CASE("leaf-path compression on the full-scale layout meets the reported level") {
    ChainNet vgg = build_chain(vgg16_config(100));
    TreeNet tree = build_hsd(vgg, fixtures::random_iscv(vgg, 2), default_policy(vgg));
    REQUIRE(default_policy(vgg).clustering_layers == std::vector<int>{3, 5, 8, 11});

    const std::uint64_t chain_params = count_params(vgg);
    const std::uint64_t chain_macs = count_macs(vgg, {3, 32, 32});
    for (int leaf : tree.leaf_ids()) {
        const TreeNode& node = tree.nodes[static_cast<std::size_t>(leaf)];
        TreeNet path = extract_subnetwork(tree, {node.class_set[0]});
        const double alpha = compression_rate(static_cast<double>(chain_params),
                                              static_cast<double>(count_params(path)));
        const double gamma = saved_computations(static_cast<double>(chain_macs),
                                                static_cast<double>(count_macs(path, {3, 32, 32})));
        CHECK(alpha >= 3.5);
        CHECK(gamma >= 0.65);
        // published leaf sub-network figures: about 3.7M parameters, 89M operations
        CHECK(std::abs(static_cast<double>(count_params(path)) - 3.7e6) <= 0.05e6);
        CHECK(std::abs(static_cast<double>(count_macs(path, {3, 32, 32})) - 89e6) <= 1e6);
    }
}
