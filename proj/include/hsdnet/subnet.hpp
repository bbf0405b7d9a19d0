#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hsdnet/chain.hpp"
#include "hsdnet/data.hpp"
#include "hsdnet/tree.hpp"

namespace hsdnet {

struct MetricsReport {
    std::uint64_t params_base = 0, params_reduced = 0;
    std::uint64_t macs_base = 0, macs_reduced = 0;
    double latency_base = 0.0, latency_reduced = 0.0;  // seconds per sample
    double compression = 0.0;         // params_base / params_reduced
    double saved_computations = 0.0;  // (macs_base - macs_reduced) / macs_base
    double speedup = 0.0;             // latency_base / latency_reduced
    double accuracy_base = 0.0, accuracy_reduced = 0.0;
    double accuracy_drop = 0.0;  // base - reduced; negative means the reduction improved
};

double compression_rate(double params_base, double params_reduced);
double saved_computations(double macs_base, double macs_reduced);
double speedup_rate(double latency_base, double latency_reduced);

// The sub-tree of every root-to-leaf path whose leaf covers at least one
// requested class. Kept edges, channel selections and heads are carried over
// untouched; inner class sets shrink to the union of their kept leaves.
TreeNet extract_subnetwork(const TreeNet& tree, const std::vector<int>& class_subset);

// Median of `latency_reps` timed single-sample forwards after warm-up.
double measure_latency(const ChainNet& net, const Tensor& sample, int reps);
double measure_latency(const TreeNet& tree, const Tensor& sample, int reps);

MetricsReport compute_metrics(const ChainNet& base, const TreeNet& reduced, const Dataset& data,
                              int latency_reps);
MetricsReport compute_metrics(const TreeNet& base, const TreeNet& reduced, const Dataset& data,
                              int latency_reps);

struct SweepRow {
    std::vector<int> subset;
    double subnet_accuracy = 0.0;
    double fulltree_accuracy = 0.0;  // full tree restricted to the subset
    std::uint64_t params = 0;
    std::uint64_t macs = 0;
};

// Seeded sampling of class subsets per cardinality; each subset is evaluated
// on its extracted subnetwork and on the full tree restricted to the subset.
std::vector<SweepRow> subset_sweep(const TreeNet& tree, const Dataset& data,
                                   const std::vector<int>& cardinalities,
                                   int combos_per_cardinality, std::uint64_t seed);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace hsdnet
