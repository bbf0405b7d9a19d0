#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "fixtures.hpp"
#include "hsdnet/decompose.hpp"
#include "hsdnet/io.hpp"
#include "hsdnet/transfer.hpp"
#include "hsdnet/tree.hpp"

using namespace hsdnet;

namespace {

std::string temp_path(const char* name) {
    return std::string("graph_test_") + name + ".hsdt";
}

// chain-shaped tree over the tiny config with full-width selections
TreeNet chain_shaped_tree(const ChainNet& chain, std::uint64_t seed) {
    DecomposePolicy policy;
    policy.trunk_full_width = true;  // no clustering layers: every node keeps full width
    return build_hsd(chain, fixtures::random_iscv(chain, seed), policy);
}

}  // namespace

TEST_CASE("build_chain matches the requested architecture") {
    ChainNet vgg = build_chain(vgg16_config(100));
    int convs = 0, pools = 0, dense = 0, gap = 0, softmax = 0;
    for (const auto& l : vgg.layers) {
        switch (l.kind) {
            case LayerKind::Conv3x3: ++convs; break;
            case LayerKind::MaxPool2x2: ++pools; break;
            case LayerKind::Dense: ++dense; break;
            case LayerKind::GlobalAvgPool: ++gap; break;
            case LayerKind::Softmax: ++softmax; break;
            default: break;
        }
    }
    CHECK(convs == 13);
    CHECK(pools == 5);
    CHECK(dense == 1);
    CHECK(gap == 1);
    CHECK(softmax == 1);

    ChainConfig minimal;
    minimal.conv_widths = {4};
    minimal.pool_after = {1};
    minimal.class_count = 2;
    minimal.input_shape = {3, 8, 8};
    ChainNet tiny = build_chain(minimal);
    // conv + relu + pool + gap + dense + softmax
    CHECK(tiny.layers.size() == 6);

    ChainNet a = build_chain(fixtures::desk_config());
    ChainNet b = build_chain(fixtures::desk_config());
    for (const auto& [name, t] : a.params.entries) {
        REQUIRE(t.data == b.params.at(name).data);  // same seed, bit-identical
    }
}

TEST_CASE("validate_tree accepts pipeline output and a degenerate chain tree") {
    ChainNet chain = build_chain(fixtures::tiny_config());
    TreeNet chain_tree = chain_shaped_tree(chain, 5);
    CHECK(validate_tree(chain_tree).ok);
    CHECK(chain_tree.leaf_ids().size() == 1);
    CHECK(chain_tree.nodes[static_cast<std::size_t>(chain_tree.leaf_ids()[0])].class_set ==
          chain_tree.nodes[0].class_set);

    ChainNet desk = build_chain(fixtures::desk_config());
    TreeNet tree = build_hsd(desk, fixtures::separable_iscv(desk, 4, 9), default_policy(desk));
    CHECK(validate_tree(tree).ok);
    CHECK(tree.leaf_ids().size() >= 2);
}

TEST_CASE("validate_tree reports each violated rule with node ids") {
    ChainNet chain = build_chain(fixtures::tiny_config(6));
    TreeNet tree = build_hsd(chain, fixtures::separable_iscv(chain, 3, 13), default_policy(chain));
    REQUIRE(validate_tree(tree).ok);
    REQUIRE(tree.nodes[0].children.size() == 1);

    SUBCASE("sibling overlap") {
        // find a two-child node and inject a shared class
        for (auto& n : tree.nodes) {
            if (n.children.size() == 2) {
                auto& lc = tree.nodes[static_cast<std::size_t>(n.children[0])];
                auto& rc = tree.nodes[static_cast<std::size_t>(n.children[1])];
                rc.class_set = lc.class_set;
                ValidationReport rep = validate_tree(tree);
                CHECK_FALSE(rep.ok);
                bool found = false;
                for (const auto& issue : rep.issues) {
                    if (issue.rule == "sibling-overlap") found = true;
                }
                CHECK(found);
                return;
            }
        }
        FAIL("fixture tree has no two-child node");
    }

    SUBCASE("child union must equal the parent class set") {
        auto& child = tree.nodes[1];
        child.class_set.pop_back();
        ValidationReport rep = validate_tree(tree);
        CHECK_FALSE(rep.ok);
        bool found = false;
        for (const auto& issue : rep.issues) {
            if (issue.rule == "child-union") found = true;
        }
        CHECK(found);
    }

    SUBCASE("leaf partition must cover the root class set") {
        for (int leaf : tree.leaf_ids()) {
            auto& node = tree.nodes[static_cast<std::size_t>(leaf)];
            if (node.class_set.size() > 2) {
                // drop one class from a leaf (and its ancestors stay stale)
                node.class_set.pop_back();
                break;
            }
        }
        ValidationReport rep = validate_tree(tree);
        CHECK_FALSE(rep.ok);
    }

    SUBCASE("minimum two classes per node") {
        for (int leaf : tree.leaf_ids()) {
            auto& node = tree.nodes[static_cast<std::size_t>(leaf)];
            node.class_set.resize(1);
            break;
        }
        ValidationReport rep = validate_tree(tree);
        CHECK_FALSE(rep.ok);
        bool found = false;
        for (const auto& issue : rep.issues) {
            if (issue.rule == "min-two-classes") found = true;
        }
        CHECK(found);
    }

    SUBCASE("arity bounds") {
        tree.nodes[0].children.push_back(tree.nodes[2].id);
        ValidationReport rep = validate_tree(tree);
        CHECK_FALSE(rep.ok);
    }

    SUBCASE("layer increments") {
        tree.nodes[1].layer = 2;
        ValidationReport rep = validate_tree(tree);
        CHECK_FALSE(rep.ok);
        bool found = false;
        for (const auto& issue : rep.issues) {
            if (issue.rule == "layer-increment") found = true;
        }
        CHECK(found);
    }

    SUBCASE("channel selection bounds") {
        tree.nodes[1].channels.back() = chain.conv_width(1) + 5;
        ValidationReport rep = validate_tree(tree);
        CHECK_FALSE(rep.ok);
        bool found = false;
        for (const auto& issue : rep.issues) {
            if (issue.rule == "channel-range") found = true;
        }
        CHECK(found);
    }
}

TEST_CASE("export_dot is deterministic with one sink per leaf") {
    ChainNet chain = build_chain(fixtures::tiny_config());
    TreeNet linear = chain_shaped_tree(chain, 17);
    const std::string dot = export_dot(linear);
    // linear digraph: depth+1 nodes, depth edges
    int arrows = 0;
    for (std::size_t p = dot.find("->"); p != std::string::npos; p = dot.find("->", p + 1)) ++arrows;
    CHECK(arrows == linear.depth());

    ChainNet desk = build_chain(fixtures::desk_config());
    TreeNet tree = build_hsd(desk, fixtures::separable_iscv(desk, 4, 23), default_policy(desk));
    const std::string d1 = export_dot(tree);
    const std::string d2 = export_dot(tree);
    CHECK(d1 == d2);

    // sinks in the DOT output = ids that never appear as an edge source
    int sinks = 0;
    for (const auto& n : tree.nodes) {
        if (d1.find("n" + std::to_string(n.id) + " ->") == std::string::npos) ++sinks;
    }
    CHECK(sinks == static_cast<int>(tree.leaf_ids().size()));
}

TEST_CASE("chain container round-trips bit-exactly") {
    ChainNet net = build_chain(fixtures::desk_config());
    const std::string path = temp_path("chain");
    save_chain(net, path);
    ChainNet loaded = load_chain(path);
    CHECK(loaded.class_list == net.class_list);
    CHECK(loaded.input_shape == net.input_shape);
    REQUIRE(loaded.layers.size() == net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        CHECK(loaded.layers[i].kind == net.layers[i].kind);
        CHECK(loaded.layers[i].in_channels == net.layers[i].in_channels);
        CHECK(loaded.layers[i].out_channels == net.layers[i].out_channels);
    }
    for (const auto& [name, t] : net.params.entries) {
        REQUIRE(loaded.params.at(name).data == t.data);
    }
    std::remove(path.c_str());
}

TEST_CASE("tree container round-trips with an identical validation report") {
    ChainNet desk = build_chain(fixtures::desk_config(8));
    TreeNet tree = build_hsd(desk, fixtures::separable_iscv(desk, 4, 31), default_policy(desk));
    transfer_all(desk, tree);

    const std::string path = temp_path("tree");
    save_tree(tree, path);
    TreeNet loaded = load_tree(path);
    CHECK(validate_tree(loaded).summary() == validate_tree(tree).summary());
    CHECK(validate_tree(loaded).ok);
    REQUIRE(loaded.nodes.size() == tree.nodes.size());
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        CHECK(loaded.nodes[i].class_set == tree.nodes[i].class_set);
        CHECK(loaded.nodes[i].channels == tree.nodes[i].channels);
        CHECK(loaded.nodes[i].children == tree.nodes[i].children);
    }
    for (const auto& [name, t] : tree.edges.entries) {
        REQUIRE(loaded.edges.at(name).data == t.data);
    }
    std::remove(path.c_str());
}

TEST_CASE("corrupted containers are rejected with a cause") {
    ChainNet net = build_chain(fixtures::tiny_config());
    const std::string path = temp_path("bad");
    save_chain(net, path);

    SUBCASE("bad magic") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("NOPE", 4);
        f.close();
        CHECK_THROWS_WITH_AS(load_chain(path), doctest::Contains("bad magic"), std::runtime_error);
    }

    SUBCASE("truncated file") {
        std::ifstream in(path, std::ios::binary);
        std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(all.data(), static_cast<std::streamsize>(all.size() / 2));
        out.close();
        CHECK_THROWS_WITH_AS(load_chain(path), doctest::Contains("truncated"), std::runtime_error);
    }

    SUBCASE("unsupported version") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        const std::uint32_t v = 99;
        f.write(reinterpret_cast<const char*>(&v), 4);
        f.close();
        CHECK_THROWS_WITH_AS(load_chain(path), doctest::Contains("version"), std::runtime_error);
    }

    std::remove(path.c_str());
}

TEST_CASE("a many-leaf tree round-trips with an identical validation report") {
    // five pool stages give four clustering layers, so a 100-class layout
    // fans out to up to sixteen leaves
    ChainConfig cfg;
    cfg.conv_widths = {6, 6, 8, 8, 10, 10, 12, 12, 12, 12};
    cfg.pool_after = {2, 4, 6, 8, 10};
    cfg.class_count = 100;
    cfg.input_shape = {3, 32, 32};
    cfg.seed = 41;
    ChainNet chain = build_chain(cfg);
    TreeNet tree = build_hsd(chain, fixtures::random_iscv(chain, 42), default_policy(chain));
    REQUIRE(validate_tree(tree).ok);
    CHECK(tree.leaf_ids().size() >= 12);
    transfer_all(chain, tree);

    const std::string path = temp_path("many_leaf");
    save_tree(tree, path);
    TreeNet loaded = load_tree(path);
    CHECK(validate_tree(loaded).summary() == validate_tree(tree).summary());
    CHECK(loaded.leaf_ids() == tree.leaf_ids());
    for (const auto& [name, t] : tree.edges.entries) {
        REQUIRE(loaded.edges.at(name).data == t.data);
    }
    std::remove(path.c_str());
}
