#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "blood/blood.hpp"
#include "blood/dataset.hpp"
#include "blood/detectors.hpp"
#include "blood/model.hpp"
#include "blood/train.hpp"

namespace blood {

enum class ShiftKind { Far, Background, Semantic };

std::string_view to_string(ShiftKind kind);
ShiftKind parse_shift_kind(std::string_view name);

/// One OOD test set of a benchmark. Semantic shift has no degree.
struct OodSpec {
    ShiftKind kind = ShiftKind::Far;
    double degree = 8.0;

    /// "far-8", "background-0.5", "semantic".
    std::string name() const;
    friend bool operator==(const OodSpec&, const OodSpec&) = default;
};

/// Parses a name produced by OodSpec::name.
OodSpec parse_ood_spec(std::string_view name);

struct DataSpec {
    std::size_t classes = 4;
    std::size_t dim = 16;
    std::size_t n_per_class = 300;
    double separation = 4.0;
    double test_fraction = 0.3;
    /// Share of the training part held out as ID validation data.
    double val_fraction = 0.15;
    /// Keep only these two classes (relabeled 0 and 1) before splitting.
    std::vector<int> two_classes;
};

struct ModelConfig {
    Architecture architecture = Architecture::Mlp;
    MlpSpec mlp;
    TransformerSpec transformer;
};

/// Everything one experiment needs; every stage is a function of this and a seed.
struct ExperimentConfig {
    std::string name = "experiment";
    DataSpec data;
    std::vector<OodSpec> ood{{ShiftKind::Far, 8.0}};
    ModelConfig model;
    TrainConfig train;
    BloodConfig blood;
    std::vector<DetectorId> detectors = all_detectors();
    DetectorOptions detector_options;
    std::size_t ensemble_size = 5;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    /// OOD set names ordered by increasing shift, appended to train and
    /// test-id for the shift sweep.
    std::vector<std::string> sweep;
    std::size_t mdl_blocks = 16;
    std::size_t mdl_block_size = 32;

    void validate() const;
};

/// Independent seed for a named sub-stream of an experiment seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

/// ID splits and OOD sets for one seed. OOD sets are sized like the ID test
/// split; their validation parts are sized like the ID validation split.
struct Benchmark {
    Dataset train;
    Dataset val;
    Dataset test;
    /// Keyed by OodSpec::name.
    std::map<std::string, Dataset> ood;
    std::map<std::string, Dataset> val_ood;
    std::size_t num_classes = 0;
    std::size_t dim = 0;
};

Benchmark make_benchmark(const ExperimentConfig& config, std::uint64_t seed);

/// Fresh model for the configured architecture.
Model build_model(const ModelConfig& config, std::size_t input_dim, std::size_t num_classes, std::uint64_t seed);

struct TrainedModels {
    Model init;
    Model trained;
    TrainingDynamics dynamics;
    /// Member 0 is `trained`; the others are copies of `init` with a
    /// re-initialized head, trained with their own seeds.
    std::vector<Model> ensemble;
};

TrainedModels train_models(const ExperimentConfig& config, const Dataset& train_set, std::size_t num_classes,
                           std::uint64_t seed, bool with_ensemble);

/// BLOOD configuration for one seed (estimator seed bound to it).
BloodConfig blood_config_for(const ExperimentConfig& config, std::uint64_t seed);

}  // namespace blood
