#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "lwsr/common.hpp"

namespace lwsr {

using Rng = std::mt19937_64;

/// One slide: its patch-feature matrix (n_p rows by d_f columns) plus labels.
struct FeatureCube {
    std::string slide_id;
    int task_id = 0;
    int class_label = 0;
    int site_label = 0;
    MatrixF features;

    std::size_t num_patches() const { return features.rows; }
    std::size_t feature_dim() const { return features.cols; }
    bool operator==(const FeatureCube&) const = default;
};

struct TaskDataset {
    int task_id = 0;
    std::vector<FeatureCube> cubes;
    std::set<int> class_set;
    std::set<int> site_set;
};

struct TaskStream {
    std::vector<TaskDataset> tasks;
    std::size_t feature_dim = 0;

    std::size_t num_tasks() const { return tasks.size(); }
    std::size_t num_slides() const;
    std::set<int> all_classes() const;
};

struct SyntheticSpec {
    int num_tasks = 4;
    int classes_per_task = 2;
    int sites_per_task = 1;
    int slides_per_class = 40;
    int patches_per_slide = 16;
    int feature_dim = 16;
    double class_separation = 2.0;
    double patch_noise_sigma = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// Checks every stream invariant: contiguous task ids, per-task labels,
// disjoint class sets, unique slide ids, one feature dimension, finite values.
void validate_stream(const TaskStream& stream);

/// Reads a JSON manifest plus the feature binaries it references. Relative
/// binary paths resolve against the manifest's directory. Task ids in the
/// result are arrival positions given by the manifest's `task_order`.
TaskStream load_manifest(const std::filesystem::path& manifest_path);

/// Writes `stream` as a manifest with one binary per slide under
/// `<manifest dir>/features/`.
void write_manifest(const TaskStream& stream, const std::filesystem::path& manifest_path);

/// Class c of the stream has a prototype mean; each slide is prototype plus
/// isotropic Gaussian patch noise. When the total class count fits in d_f
/// the prototypes are mutually orthogonal with pairwise distance exactly
/// `class_separation`, otherwise they are random directions at the same radius.
TaskStream generate_synthetic_stream(const SyntheticSpec& spec);

/// Prototype means used by generate_synthetic_stream, one row per global class.
MatrixF synthetic_prototypes(const SyntheticSpec& spec);

/// Uniform subsample of `n_sample` rows without replacement, in original row
/// order. Returns the cube unchanged (and draws nothing) when n_p <= n_sample.
FeatureCube sample_patches(const FeatureCube& cube, std::size_t n_sample, Rng& rng);

/// Held-out query slides: per class, round(fraction * n) slides (at least one
/// when the class has two or more, never all of them), chosen by `seed` only.
struct HeldOutSplit {
    std::set<std::string> test_ids;
    bool is_test(const std::string& slide_id) const { return test_ids.count(slide_id) != 0; }
};

HeldOutSplit make_split(const TaskStream& stream, double test_fraction, std::uint64_t seed);

/// Copy of `stream` without the held-out slides.
TaskStream training_view(const TaskStream& stream, const HeldOutSplit& split);

}  // namespace lwsr
