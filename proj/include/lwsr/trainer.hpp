#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lwsr/corpus.hpp"
#include "lwsr/encoder.hpp"
#include "lwsr/losses.hpp"
#include "lwsr/memory_bank.hpp"

namespace lwsr {

enum class TrainMode { finetune, joint, lwsr, lwsr_no_dcr };

std::string_view mode_name(TrainMode mode) noexcept;
TrainMode parse_mode(std::string_view name);

inline bool uses_replay(TrainMode m) { return m == TrainMode::lwsr || m == TrainMode::lwsr_no_dcr; }

struct TrainerConfig {
    TrainMode mode = TrainMode::lwsr;
    int epochs_per_task = 70;
    std::size_t batch_size = 10;
    std::size_t replay_batch_size = 30;
    double learning_rate = 1e-5;
    double alpha = 0.01;
    double pairwise_weight = 1.0;
    double cross_entropy_weight = 1.0;
    double margin = 1.0;
    std::size_t patch_sample = 2048;
    bool resample_patches_each_epoch = true;
    std::size_t buffer_capacity = 10;
    int scheduler_step = 30;
    double scheduler_gamma = 0.5;
    // When false, the pairwise loss sees only current-task pairs; replay
    // exemplars still enter cross-entropy and the distance term.
    bool replay_pairs_in_pairwise_loss = true;
    std::size_t hidden_dim = 64;
    std::size_t attention_dim = 32;
    std::size_t repr_dim = 32;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Adam first/second moments, shaped like the parameters.
struct AdamMoments {
    ParamGrads first;
    ParamGrads second;
};

/// lr * gamma^floor(epoch / step)
double scheduled_learning_rate(double base_lr, int epoch, int step, double gamma);

/// One bias-corrected Adam update (beta1 0.9, beta2 0.999, eps 1e-8).
/// `step_count` is 1 for the first update. Throws invalid_argument on
/// shape mismatch.
void adam_step(EncoderParams& params, const ParamGrads& grads, AdamMoments& moments, double lr,
               std::uint64_t step_count);

struct EpochLog {
    int stage = 0;
    int epoch = 0;
    double learning_rate = 0.0;
    double pairwise = 0.0;
    double cross_entropy = 0.0;
    double distance_consistency = 0.0;
    double distance_consistency_raw = 0.0;
    double total = 0.0;
    std::size_t steps = 0;
    std::size_t replay_steps = 0;
};

struct TrainState {
    EncoderParams params;
    AdamMoments moments;
    std::uint64_t adam_steps = 0;
    MemoryBank bank;
    std::optional<FrozenEncoder> previous;
    std::vector<int> head_classes;  // classifier row -> global class label
    int stage = 0;                  // number of completed training phases
    Rng shuffle_rng;
    Rng sampling_rng;
    Rng reservoir_rng;
    Rng replay_rng;
    Rng head_rng;
    std::vector<EpochLog> log;
};

/// Fresh encoder (no classifier rows yet), empty bank, and one named random
/// stream per purpose, all derived from config.seed.
TrainState make_train_state(const TrainerConfig& config, std::size_t feature_dim);

/// One training phase on `task`; see README for the per-step procedure.
/// Throws invalid_stream if any of the task's classes was seen before.
void train_task(TrainState& state, const TaskDataset& task, const TrainerConfig& config);

struct StageCheckpoint {
    int stage = 0;
    int tasks_in_database = 0;  // database = tasks [0, tasks_in_database)
    FrozenEncoder encoder;
    std::vector<int> head_classes;
};

struct RunResult {
    std::vector<StageCheckpoint> checkpoints;
    std::vector<EpochLog> log;
};

/// Trains over `train_stream` (already stripped of held-out slides). Joint
/// mode trains once on the union of all tasks and yields one checkpoint.
RunResult run_stream(const TaskStream& train_stream, const TrainerConfig& config);

}  // namespace lwsr
