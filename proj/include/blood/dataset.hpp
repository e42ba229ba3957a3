#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "blood/tensor.hpp"

namespace blood {

enum class Split { Train, TestId, Ood };

std::string_view to_string(Split s);
Split parse_split(std::string_view name);

/// Label carried by OOD instances that have no class in the ID label space.
inline constexpr int kNoLabel = -1;

struct Dataset {
    std::vector<Tensor> x;
    std::vector<int> y;
    std::vector<Split> split;
    std::size_t num_classes = 0;
    std::size_t dim = 0;
    /// Generator description: kind, degree, seed and generator parameters.
    std::map<std::string, std::string> metadata;

    std::size_t size() const { return x.size(); }
    bool empty() const { return x.empty(); }
    void push(Tensor xi, int yi, Split s);

    Dataset subset(const std::vector<std::size_t>& indices) const;
    /// Instances tagged with `s`, metadata kept.
    Dataset only(Split s) const;
    std::size_t count(Split s) const;

    /// Labels in [0, C) (or kNoLabel for OOD instances), consistent sizes.
    void validate() const;
};

/// C clusters with unit covariance whose means are the vertices of a regular
/// simplex with pairwise distance `separation`, placed in the first C-1
/// coordinates. Every instance is tagged Train.
Dataset make_gaussian_classes(std::size_t classes, std::size_t dim, std::size_t n_per_class, double separation,
                              std::uint64_t seed);

/// Class means used by make_gaussian_classes, one row per class.
std::vector<Tensor> simplex_means(std::size_t classes, std::size_t dim, double separation);

/// Retags a stratified `test_fraction` of each class as TestId.
Dataset split_train_test(const Dataset& data, double test_fraction, std::uint64_t seed);

/// ID-like samples displaced by `degree` along a random unit direction
/// orthogonal to the class means (any direction when dim == C - 1), with
/// per-coordinate variance 1 + min(degree, 1). `n` defaults to the ID test size.
/// Degree 0 reproduces the ID class-conditional distribution.
Dataset make_far_ood(const Dataset& id, double degree, std::uint64_t seed, std::size_t n = 0);

/// Even classes become ID (relabeled c / 2), odd classes become unlabeled OOD.
std::pair<Dataset, Dataset> make_semantic_split(const Dataset& data);

/// Same instances and labels, with the non-discriminative coordinates (index
/// >= C-1) passed through x -> (I + degree R) x + degree t for a fixed random
/// R and t. Degree 0 is the identity. Result is tagged Ood.
Dataset make_background_shift(const Dataset& id, double degree, std::uint64_t seed);

/// Keeps classes a and b, relabeled 0 and 1.
Dataset simplify_to_two_classes(const Dataset& data, int class_a, int class_b);

/// Uniform subsample without replacement of exactly `target` instances.
/// A zero target yields an empty dataset with a "warning" metadata entry.
Dataset subsample_ood_to_test_size(const Dataset& ood, std::size_t target, std::uint64_t seed);

/// "# blood-dataset v1", "# key=value" metadata, then split,label,f0,... rows.
void save_csv(const Dataset& data, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path);
void write_csv(const Dataset& data, std::ostream& out);
Dataset read_csv(std::istream& in);

}  // namespace blood
