#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hsdnet {

// Flat key = value configuration shared by every pipeline command.
struct PipelineConfig {
    // network
    std::vector<int> conv_widths = {16, 16, 32, 32, 64, 64};
    std::vector<int> pool_after = {2, 4, 6};
    int classes = 8;
    int image_channels = 3;
    int image_size = 16;
    bool affine = false;

    // dataset
    std::string dataset = "synth";  // "synth" | "cifar"
    int synth_per_class = 100;
    int synth_test_per_class = 50;
    std::string cifar_train;
    std::string cifar_test;

    // training
    int epochs = 20;
    double lr = 0.01;
    double lr_decay_factor = 10.0;
    int lr_decay_every = 50;
    int batch_size = 16;
    int finetune_epochs = 10;

    // decomposition
    bool clustering_auto = true;  // derive layers from the pool placement
    std::vector<int> clustering_layers;
    bool trunk_full_width = false;
    double keep_fraction = 0.5;
    int min_classes = 2;

    std::string iscv_split = "train";
    int latency_reps = 30;
    std::uint64_t seed = 7;
};

bool operator==(const PipelineConfig& a, const PipelineConfig& b);

PipelineConfig parse_config(const std::string& text);
std::string serialize_config(const PipelineConfig& cfg);

PipelineConfig load_config_file(const std::string& path);

}  // namespace hsdnet
