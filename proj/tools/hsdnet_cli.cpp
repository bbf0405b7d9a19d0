// Pipeline driver: each subcommand reads its predecessors' artifacts from the
// output directory and writes its own, so every stage stays independently
// inspectable and re-runnable.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "hsdnet/config.hpp"
#include "hsdnet/decompose.hpp"
#include "hsdnet/io.hpp"
#include "hsdnet/sensitivity.hpp"
#include "hsdnet/subnet.hpp"
#include "hsdnet/train.hpp"
#include "hsdnet/transfer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Paths {
    fs::path out;
    fs::path chain() const { return out / "chain.hsdt"; }
    fs::path iscv() const { return out / "iscv.hsdt"; }
    fs::path layout() const { return out / "tree_layout.hsdt"; }
    fs::path tree() const { return out / "tree.hsdt"; }
    fs::path finetuned() const { return out / "tree_finetuned.hsdt"; }
    fs::path subnet() const { return out / "subnet.hsdt"; }
    fs::path sweep() const { return out / "sweep.csv"; }
    fs::path metrics() const { return out / "metrics.json"; }
    fs::path dot() const { return out / "tree.dot"; }
    fs::path train_history() const { return out / "train_history.csv"; }
    fs::path finetune_history() const { return out / "finetune_history.csv"; }
};

void require_stage(const fs::path& path, const std::string& stage) {
    if (!fs::exists(path)) {
        throw std::runtime_error("missing artifact " + path.string() + "; run the `" + stage +
                                 "` stage first");
    }
}

hsdnet::ChainConfig chain_config(const hsdnet::PipelineConfig& cfg) {
    hsdnet::ChainConfig out;
    out.conv_widths = cfg.conv_widths;
    out.pool_after = cfg.pool_after;
    out.class_count = cfg.classes;
    out.input_shape = {cfg.image_channels, cfg.image_size, cfg.image_size};
    out.affine = cfg.affine;
    out.seed = cfg.seed;
    return out;
}

hsdnet::DecomposePolicy policy_for(const hsdnet::PipelineConfig& cfg,
                                   const hsdnet::ChainNet& chain) {
    hsdnet::DecomposePolicy policy =
        cfg.clustering_auto ? hsdnet::default_policy(chain) : hsdnet::DecomposePolicy{};
    if (!cfg.clustering_auto) policy.clustering_layers = cfg.clustering_layers;
    policy.trunk_full_width = cfg.trunk_full_width;
    policy.channel_keep_fraction = cfg.keep_fraction;
    policy.min_classes_per_node = cfg.min_classes;
    return policy;
}

hsdnet::Dataset make_dataset(const hsdnet::PipelineConfig& cfg, const std::string& split) {
    if (cfg.dataset == "synth") {
        hsdnet::SynthSpec spec;
        spec.class_count = cfg.classes;
        spec.per_class = split == "train" ? cfg.synth_per_class : cfg.synth_test_per_class;
        spec.image_size = cfg.image_size;
        spec.seed = cfg.seed;
        spec.split = split;
        return hsdnet::synth_dataset(spec);
    }
    if (cfg.dataset == "cifar") {
        std::vector<std::string> classes;
        for (int c = 0; c < cfg.classes; ++c) classes.push_back("c" + std::to_string(c));
        if (split == "train") {
            return hsdnet::load_cifar_binary(cfg.cifar_train, classes, "train");
        }
        hsdnet::ChannelStats stats;
        (void)hsdnet::load_cifar_binary(cfg.cifar_train, classes, "train", nullptr, &stats);
        return hsdnet::load_cifar_binary(cfg.cifar_test, classes, "test", &stats);
    }
    throw std::runtime_error("unknown dataset kind '" + cfg.dataset + "' (use synth or cifar)");
}

hsdnet::TrainSchedule schedule_for(const hsdnet::PipelineConfig& cfg, int epochs) {
    hsdnet::TrainSchedule sched;
    sched.epochs = epochs;
    sched.initial_lr = cfg.lr;
    sched.lr_decay_factor = cfg.lr_decay_factor;
    sched.lr_decay_every = cfg.lr_decay_every;
    sched.batch_size = cfg.batch_size;
    sched.seed = cfg.seed;
    return sched;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

// newest available tree artifact, preferring the fine-tuned one
fs::path pick_tree(const Paths& paths) {
    if (fs::exists(paths.finetuned())) return paths.finetuned();
    if (fs::exists(paths.tree())) return paths.tree();
    throw std::runtime_error("missing artifact " + paths.tree().string() +
                             "; run the `transfer` stage first");
}

std::vector<int> parse_id_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical decomposition of chain CNNs with class-subset subnetworks"};
    app.require_subcommand(1);
    app.fallthrough();  // let --config/--out/--seed appear after the subcommand

    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed_override;
    app.add_option("--config", config_path, "pipeline configuration file (key = value lines)");
    app.add_option("--out", out_dir, "artifact directory");
    app.add_option("--seed", seed_override, "override the configured seed");

    auto* cmd_train = app.add_subcommand("train-base", "train the baseline chain network");
    std::string export_dataset;
    cmd_train->add_option("--export-dataset", export_dataset,
                          "also write the training dataset as a container");

    auto* cmd_iscv = app.add_subcommand(
        "iscv", "measure per-layer impact score class vectors of the trained chain");
    auto* cmd_decompose =
        app.add_subcommand("decompose", "cluster classes and build the tree layout");
    auto* cmd_transfer =
        app.add_subcommand("transfer", "slice trained chain filters into the tree edges");
    auto* cmd_finetune = app.add_subcommand("finetune", "fine-tune the transferred tree");

    auto* cmd_eval = app.add_subcommand("eval", "report accuracy of a saved model");
    std::string eval_model;
    std::string eval_split = "test";
    std::string eval_subset;
    cmd_eval->add_option("--model", eval_model, "model container (defaults to the newest artifact)");
    cmd_eval->add_option("--split", eval_split, "train or test")
        ->check(CLI::IsMember({"train", "test"}));
    cmd_eval->add_option("--subset", eval_subset, "comma-separated class ids to restrict to");

    auto* cmd_subnet = app.add_subcommand("subnet", "extract a class-subset subnetwork");
    std::string subnet_subset;
    cmd_subnet->add_option("--subset", subnet_subset, "comma-separated class ids")->required();

    auto* cmd_sweep = app.add_subcommand("sweep", "accuracy sweep over sampled class subsets");
    std::string sweep_cardinalities = "2,3,4";
    int sweep_combos = 10;
    cmd_sweep->add_option("--cardinalities", sweep_cardinalities, "subset sizes to sample");
    cmd_sweep->add_option("--combos", sweep_combos, "combinations per cardinality");

    auto* cmd_metrics =
        app.add_subcommand("metrics", "compression, saved computations and speedup report");
    std::string metrics_model;
    cmd_metrics->add_option("--model", metrics_model,
                            "reduced model container (defaults to the newest tree)");

    auto* cmd_dot = app.add_subcommand("export-dot", "write the tree as a Graphviz digraph");

    CLI11_PARSE(app, argc, argv);

    try {
        hsdnet::PipelineConfig cfg;
        if (!config_path.empty()) {
            cfg = hsdnet::load_config_file(config_path);
        }
        if (seed_override) cfg.seed = *seed_override;

        Paths paths{fs::path(out_dir)};
        fs::create_directories(paths.out);

        if (cmd_train->parsed()) {
            hsdnet::ChainNet net = hsdnet::build_chain(chain_config(cfg));
            hsdnet::Dataset data = make_dataset(cfg, "train");
            hsdnet::TrainHistory hist =
                hsdnet::train(net, data, schedule_for(cfg, cfg.epochs));
            hsdnet::save_chain(net, paths.chain().string());
            write_text(paths.train_history(), hsdnet::history_csv(hist));
            if (!export_dataset.empty()) hsdnet::save_dataset(data, export_dataset);
            std::cout << "trained chain: " << hsdnet::count_params(net) << " parameters, "
                      << "train accuracy " << hsdnet::evaluate(net, data) << "\n";
            std::cout << "wrote " << paths.chain().string() << "\n";
        } else if (cmd_iscv->parsed()) {
            require_stage(paths.chain(), "train-base");
            hsdnet::ChainNet net = hsdnet::load_chain(paths.chain().string());
            hsdnet::Dataset data = make_dataset(cfg, cfg.iscv_split);
            auto tables = hsdnet::iscv_all_layers(net, data, hsdnet::all_conv_layers(net));
            hsdnet::save_iscv(tables, net.class_list, paths.iscv().string());
            std::cout << "wrote " << tables.size() << " layer tables to " << paths.iscv().string()
                      << "\n";
        } else if (cmd_decompose->parsed()) {
            require_stage(paths.chain(), "train-base");
            require_stage(paths.iscv(), "iscv");
            hsdnet::ChainNet net = hsdnet::load_chain(paths.chain().string());
            auto tables = hsdnet::load_iscv(paths.iscv().string());
            hsdnet::DecomposePolicy policy = policy_for(cfg, net);
            hsdnet::TreeNet tree = hsdnet::build_hsd(net, tables, policy);
            hsdnet::save_tree(tree, paths.layout().string());
            std::cout << "tree layout: " << tree.nodes.size() << " nodes, "
                      << tree.leaf_ids().size() << " leaves; wrote " << paths.layout().string()
                      << "\n";
        } else if (cmd_transfer->parsed()) {
            require_stage(paths.chain(), "train-base");
            require_stage(paths.layout(), "decompose");
            hsdnet::ChainNet net = hsdnet::load_chain(paths.chain().string());
            hsdnet::TreeNet tree = hsdnet::load_tree(paths.layout().string());
            hsdnet::transfer_all(net, tree);
            hsdnet::save_tree(tree, paths.tree().string());
            std::cout << "transferred " << tree.edges.entries.size() << " edge tensors; wrote "
                      << paths.tree().string() << "\n";
        } else if (cmd_finetune->parsed()) {
            require_stage(paths.tree(), "transfer");
            hsdnet::TreeNet tree = hsdnet::load_tree(paths.tree().string());
            hsdnet::Dataset data = make_dataset(cfg, "train");
            hsdnet::TrainHistory hist =
                hsdnet::finetune(tree, data, schedule_for(cfg, cfg.finetune_epochs));
            hsdnet::save_tree(tree, paths.finetuned().string());
            write_text(paths.finetune_history(), hsdnet::history_csv(hist));
            std::cout << "fine-tuned tree: train accuracy " << hsdnet::evaluate(tree, data)
                      << "; wrote " << paths.finetuned().string() << "\n";
        } else if (cmd_eval->parsed()) {
            fs::path model = eval_model.empty() ? fs::path() : fs::path(eval_model);
            if (model.empty()) {
                if (fs::exists(paths.finetuned())) model = paths.finetuned();
                else if (fs::exists(paths.tree())) model = paths.tree();
                else {
                    require_stage(paths.chain(), "train-base");
                    model = paths.chain();
                }
            }
            hsdnet::Dataset data = make_dataset(cfg, eval_split);
            std::vector<int> subset =
                eval_subset.empty() ? std::vector<int>{} : parse_id_list(eval_subset);
            double acc = 0.0;
            if (hsdnet::container_kind(model.string()) == "chain") {
                acc = hsdnet::evaluate(hsdnet::load_chain(model.string()), data, subset);
            } else {
                acc = hsdnet::evaluate(hsdnet::load_tree(model.string()), data, subset);
            }
            std::cout << "accuracy " << acc << " on " << eval_split << " split (" << model.string()
                      << ")\n";
        } else if (cmd_subnet->parsed()) {
            fs::path source = pick_tree(paths);
            hsdnet::TreeNet tree = hsdnet::load_tree(source.string());
            hsdnet::TreeNet sub = hsdnet::extract_subnetwork(tree, parse_id_list(subnet_subset));
            hsdnet::save_tree(sub, paths.subnet().string());
            const auto input = tree.input_shape;
            std::cout << "subnetwork: " << hsdnet::count_params(sub) << " parameters, "
                      << hsdnet::count_macs(sub, input) << " MACs/sample; wrote "
                      << paths.subnet().string() << "\n";
        } else if (cmd_sweep->parsed()) {
            fs::path source = pick_tree(paths);
            hsdnet::TreeNet tree = hsdnet::load_tree(source.string());
            hsdnet::Dataset data = make_dataset(cfg, "test");
            auto rows = hsdnet::subset_sweep(tree, data, parse_id_list(sweep_cardinalities),
                                             sweep_combos, cfg.seed);
            write_text(paths.sweep(), hsdnet::sweep_csv(rows));
            std::cout << "swept " << rows.size() << " subsets; wrote " << paths.sweep().string()
                      << "\n";
        } else if (cmd_metrics->parsed()) {
            require_stage(paths.chain(), "train-base");
            fs::path model = metrics_model.empty() ? pick_tree(paths) : fs::path(metrics_model);
            hsdnet::ChainNet base = hsdnet::load_chain(paths.chain().string());
            hsdnet::TreeNet reduced = hsdnet::load_tree(model.string());
            hsdnet::Dataset data = make_dataset(cfg, "test");
            hsdnet::MetricsReport rep =
                hsdnet::compute_metrics(base, reduced, data, cfg.latency_reps);
            json j;
            j["params"] = {{"base", rep.params_base}, {"reduced", rep.params_reduced}};
            j["macs"] = {{"base", rep.macs_base}, {"reduced", rep.macs_reduced}};
            j["latency_seconds"] = {{"base", rep.latency_base}, {"reduced", rep.latency_reduced}};
            j["compression_rate"] = rep.compression;
            j["saved_computations"] = rep.saved_computations;
            j["speedup_rate"] = rep.speedup;
            j["accuracy"] = {{"base", rep.accuracy_base},
                             {"reduced", rep.accuracy_reduced},
                             {"drop", rep.accuracy_drop}};
            write_text(paths.metrics(), j.dump(2) + "\n");
            std::cout << "compression " << rep.compression << "x, saved computations "
                      << 100.0 * rep.saved_computations << "%, speedup " << rep.speedup
                      << "x; wrote " << paths.metrics().string() << "\n";
        } else if (cmd_dot->parsed()) {
            fs::path source;
            if (fs::exists(paths.finetuned())) source = paths.finetuned();
            else if (fs::exists(paths.tree())) source = paths.tree();
            else {
                require_stage(paths.layout(), "decompose");
                source = paths.layout();
            }
            hsdnet::TreeNet tree = hsdnet::load_tree(source.string());
            write_text(paths.dot(), hsdnet::export_dot(tree));
            std::cout << "wrote " << paths.dot().string() << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
