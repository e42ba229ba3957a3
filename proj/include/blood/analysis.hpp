#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "blood/model.hpp"
#include "blood/train.hpp"

namespace blood {

struct RepChangeLayer {
    double id_mean = 0.0, id_std = 0.0;
    double ood_mean = 0.0, ood_std = 0.0;
    /// P(ID change > OOD change).
    double cles = 0.5;
};

struct RepChangeReport {
    /// Entry l - 1 describes representation h_l, l = 1..L-1.
    std::vector<RepChangeLayer> layers;
    double cles_mean = 0.5;
    double cles_last = 0.5;
};

/// Per-instance distances ||h_l(init) - h_l(trained)||_2 for l = 1..L-1, on
/// the pooled row for token-matrix representations. Result is [l-1][instance].
std::vector<std::vector<double>> representation_distances(const Model& init, const Model& trained,
                                                          std::span<const Tensor> inputs);

RepChangeReport rep_change(const Model& init, const Model& trained, std::span<const Tensor> id_inputs,
                           std::span<const Tensor> ood_inputs);

struct CartographyRecord {
    double confidence = 0.0;
    double variability = 0.0;
    double correctness = 0.0;
};

/// Mean and population standard deviation of the true-class probability over
/// epochs, and the fraction of epochs classified correctly.
std::vector<CartographyRecord> cartography(const TrainingDynamics& dynamics);

/// Builds a fresh model from a seed.
using ModelFactory = std::function<Model(std::uint64_t seed)>;

/// Online codelength in nats. The first block is sent with a uniform code
/// (ln C per instance); each later block costs its cross-entropy under a model
/// trained from scratch on all preceding blocks. Blocks are consecutive.
double mdl_prequential(std::span<const Tensor> inputs, std::span<const int> labels, std::size_t num_classes,
                       const ModelFactory& factory, const TrainConfig& config,
                       std::span<const std::size_t> block_sizes);

std::vector<std::size_t> uniform_blocks(std::size_t count, std::size_t size);

struct ShiftSweep {
    std::vector<std::vector<double>> distributions;
    std::vector<double> medians;
    /// Spearman correlation between level index and median.
    double spearman = 0.0;
    /// Set when the medians are all equal, leaving the correlation undefined.
    bool degenerate = false;
    /// CLES(level k + 1, level k) for consecutive levels.
    std::vector<double> consecutive_cles;
    bool strictly_increasing = false;
};

ShiftSweep shift_sweep(std::vector<std::vector<double>> level_scores);

}  // namespace blood
