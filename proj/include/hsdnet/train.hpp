#pragma once

#include <cstdint>
#include <vector>

#include "hsdnet/chain.hpp"
#include "hsdnet/data.hpp"
#include "hsdnet/tree.hpp"

namespace hsdnet {

struct TrainSchedule {
    int epochs = 0;
    double initial_lr = 0.01;
    double lr_decay_factor = 10.0;
    int lr_decay_every = 50;
    int batch_size = 16;
    std::uint64_t seed = 0;
};

// initial_lr / decay_factor^floor(epoch / decay_every), epoch 0-based
double learning_rate_at(const TrainSchedule& sched, int epoch);

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
    double train_accuracy = 0.0;  // over the epoch's own forward passes
};

using TrainHistory = std::vector<EpochStats>;

// Seeded-shuffle mini-batch SGD on the cross-entropy of the softmax output.
TrainHistory train(ChainNet& net, const Dataset& data, const TrainSchedule& sched);

// Same loop over the tree; the loss is the cross-entropy of the single
// softmax over all leaf logits assembled in global class order.
TrainHistory finetune(TreeNet& tree, const Dataset& data, const TrainSchedule& sched);

// Top-1 accuracy. A non-empty `restrict_to` keeps only samples labeled inside
// the subset and takes the argmax over those classes alone. Honors the
// HSDNET_THREADS environment variable for sharded evaluation.
double evaluate(const ChainNet& net, const Dataset& data, const std::vector<int>& restrict_to = {});
double evaluate(const TreeNet& tree, const Dataset& data, const std::vector<int>& restrict_to = {});

// Mean cross-entropy without parameter updates.
double mean_cross_entropy(const ChainNet& net, const Dataset& data);
double mean_cross_entropy(const TreeNet& tree, const Dataset& data);

std::string history_csv(const TrainHistory& history);

}  // namespace hsdnet
