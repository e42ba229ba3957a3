#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "blood/model.hpp"

namespace blood {

/// Adam with mini-batches and inverted dropout on hidden representations.
/// Defaults are sized for randomly initialized desk-scale models.
struct TrainConfig {
    double step_size = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    double dropout = 0.1;

    void validate() const;
};

/// True-class probability and correctness of every training instance after
/// every epoch, stored epoch-major.
struct TrainingDynamics {
    std::size_t instances = 0;
    std::size_t epochs = 0;
    std::vector<double> true_class_probability;
    std::vector<std::uint8_t> correct;

    double probability(std::size_t instance, std::size_t epoch) const
    {
        return true_class_probability[epoch * instances + instance];
    }
    bool is_correct(std::size_t instance, std::size_t epoch) const { return correct[epoch * instances + instance]; }
};

struct TrainResult {
    Model model;
    TrainingDynamics dynamics;
    /// Mean cross-entropy over the training set after each epoch (no dropout).
    std::vector<double> epoch_loss;
};

TrainResult train(Model model, std::span<const Tensor> inputs, std::span<const int> labels,
                  const TrainConfig& config);

double cross_entropy(const Model& model, const Tensor& x, int label);
double mean_cross_entropy(const Model& model, std::span<const Tensor> inputs, std::span<const int> labels);
double accuracy(const Model& model, std::span<const Tensor> inputs, std::span<const int> labels);

struct LossGradients {
    double loss = 0.0;
    /// One gradient buffer per layer, matching Layer::parameters().
    std::vector<std::vector<Tensor>> layers;
};

/// Cross-entropy of one instance and its gradient for every parameter.
/// Deterministic (no dropout).
LossGradients loss_and_gradients(const Model& model, const Tensor& x, int label);

/// One JSON object per (instance, epoch).
void write_dynamics_jsonl(const TrainingDynamics& dynamics, std::ostream& out);
TrainingDynamics read_dynamics_jsonl(std::istream& in);

}  // namespace blood
