#include "lwsr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lwsr {

std::string_view mode_name(TrainMode mode) noexcept {
    switch (mode) {
        case TrainMode::finetune: return "finetune";
        case TrainMode::joint: return "joint";
        case TrainMode::lwsr: return "lwsr";
        case TrainMode::lwsr_no_dcr: return "lwsr_no_dcr";
    }
    return "unknown";
}

TrainMode parse_mode(std::string_view name) {
    for (TrainMode m : {TrainMode::finetune, TrainMode::joint, TrainMode::lwsr, TrainMode::lwsr_no_dcr}) {
        if (name == mode_name(m)) return m;
    }
    throw Error(Errc::invalid_config, "mode must be one of finetune, joint, lwsr, lwsr_no_dcr; got '" +
                                          std::string(name) + "'");
}

void TrainerConfig::validate() const {
    auto require = [](bool ok, const char* field) {
        if (!ok) throw Error(Errc::invalid_config, std::string(field) + " is out of range");
    };
    require(epochs_per_task >= 1, "number_of_epochs");
    require(batch_size >= 1, "batch_size");
    require(replay_batch_size >= 1, "minibatch_size");
    require(learning_rate > 0.0, "learning_rate");
    require(alpha >= 0.0, "distance_consistency_loss_weight");
    require(pairwise_weight >= 0.0, "pair_wise_loss_weight");
    require(cross_entropy_weight >= 0.0, "cross_entropy_loss_weight");
    require(margin > 0.0, "margin");
    require(patch_sample >= 1, "patch_sampling_number_per_wsi");
    require(buffer_capacity >= 1, "buffer_size");
    require(scheduler_step >= 1, "scheduler.step_size");
    require(scheduler_gamma > 0.0, "scheduler.gamma");
    require(hidden_dim >= 1 && attention_dim >= 1 && repr_dim >= 1, "encoder dimensions");
}

double scheduled_learning_rate(double base_lr, int epoch, int step, double gamma) {
    return base_lr * std::pow(gamma, static_cast<double>(epoch / step));
}

void adam_step(EncoderParams& params, const ParamGrads& grads, AdamMoments& moments, double lr,
               std::uint64_t step_count) {
    if (!params.same_shape(grads) || !params.same_shape(moments.first) || !params.same_shape(moments.second)) {
        throw Error(Errc::invalid_argument, "adam_step: parameter, gradient and moment shapes differ");
    }
    if (step_count == 0) throw Error(Errc::invalid_argument, "adam_step: step_count starts at 1");
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));

    auto p = params.tensors();
    auto g = grads.tensors();
    auto m = moments.first.tensors();
    auto v = moments.second.tensors();
    for (std::size_t t = 0; t < p.size(); ++t) {
        for (std::size_t i = 0; i < p[t]->data.size(); ++i) {
            const double gi = g[t]->data[i];
            const double mi = beta1 * m[t]->data[i] + (1.0 - beta1) * gi;
            const double vi = beta2 * v[t]->data[i] + (1.0 - beta2) * gi * gi;
            m[t]->data[i] = static_cast<float>(mi);
            v[t]->data[i] = static_cast<float>(vi);
            const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + eps);
            p[t]->data[i] = static_cast<float>(p[t]->data[i] - update);
        }
    }
}

TrainState make_train_state(const TrainerConfig& config, std::size_t feature_dim) {
    config.validate();
    const std::uint64_t s = config.seed;
    TrainState state{
        .params = {},
        .moments = {},
        .adam_steps = 0,
        .bank = MemoryBank(config.buffer_capacity),
        .previous = std::nullopt,
        .head_classes = {},
        .stage = 0,
        .shuffle_rng = Rng(derive_seed(s, "train/shuffle")),
        .sampling_rng = Rng(derive_seed(s, "train/patch_sampling")),
        .reservoir_rng = Rng(derive_seed(s, "train/reservoir")),
        .replay_rng = Rng(derive_seed(s, "train/replay")),
        .head_rng = Rng(derive_seed(s, "train/head")),
        .log = {},
    };
    Rng init_rng(derive_seed(s, "train/init"));
    const EncoderDims dims{feature_dim, config.hidden_dim, config.attention_dim, config.repr_dim};
    state.params = init_encoder<float>(dims, 0, init_rng);
    return state;
}

namespace {

struct SlideEval {
    ForwardResult result;
    int label = 0;  // classifier row
};

int head_row(const std::vector<int>& head_classes, int class_label) {
    auto it = std::find(head_classes.begin(), head_classes.end(), class_label);
    if (it == head_classes.end()) throw Error(Errc::invalid_state, "class " + std::to_string(class_label) + " has no head row");
    return static_cast<int>(it - head_classes.begin());
}

}  // namespace

void train_task(TrainState& state, const TaskDataset& task, const TrainerConfig& config) {
    config.validate();
    if (task.cubes.empty()) throw Error(Errc::invalid_stream, "task " + std::to_string(task.task_id) + " has no slides");
    for (int c : task.class_set) {
        if (std::find(state.head_classes.begin(), state.head_classes.end(), c) != state.head_classes.end()) {
            throw Error(Errc::invalid_stream, "class " + std::to_string(c) + " was already learned in an earlier task");
        }
    }

    state.params = expand_head(state.params, state.head_classes.size() + task.class_set.size(), state.head_rng);
    state.head_classes.insert(state.head_classes.end(), task.class_set.begin(), task.class_set.end());
    state.moments = {ParamGrads::zeros_like(state.params), ParamGrads::zeros_like(state.params)};
    state.adam_steps = 0;

    const bool replay_mode = uses_replay(config.mode);
    const bool can_replay = replay_mode && state.bank.target_matrix().has_value();
    const double alpha = config.mode == TrainMode::lwsr ? config.alpha : 0.0;
    const ObjectiveWeights weights{config.pairwise_weight, config.cross_entropy_weight, alpha, config.margin};

    const std::size_t n = task.cubes.size();
    std::vector<FeatureCube> fixed_samples;
    if (!config.resample_patches_each_epoch) {
        for (const auto& cube : task.cubes) fixed_samples.push_back(sample_patches(cube, config.patch_sample, state.sampling_rng));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<FeatureCube> epoch_samples(n);

    for (int epoch = 0; epoch < config.epochs_per_task; ++epoch) {
        const double lr =
            scheduled_learning_rate(config.learning_rate, epoch, config.scheduler_step, config.scheduler_gamma);
        std::shuffle(order.begin(), order.end(), state.shuffle_rng);
        EpochLog entry;
        entry.stage = state.stage;
        entry.epoch = epoch;
        entry.learning_rate = lr;

        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t stop = std::min(n, start + config.batch_size);
            std::vector<SlideEval> evals;
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t i = order[b];
                const FeatureCube* cube = &task.cubes[i];
                if (task.cubes[i].num_patches() <= config.patch_sample) {
                    // sample_patches would return the cube unchanged.
                } else if (config.resample_patches_each_epoch) {
                    epoch_samples[i] = sample_patches(task.cubes[i], config.patch_sample, state.sampling_rng);
                    cube = &epoch_samples[i];
                } else {
                    cube = &fixed_samples[i];
                }
                evals.push_back({forward(state.params, cube->features), head_row(state.head_classes, cube->class_label)});
            }
            const std::size_t current = evals.size();

            std::optional<ReplayTarget> replay;
            if (can_replay) {
                ReplayBatch rb = state.bank.sample_replay(config.replay_batch_size, state.replay_rng);
                replay = ReplayTarget{{}, std::move(rb.target_submatrix)};
                for (std::size_t r = 0; r < rb.cubes.size(); ++r) {
                    replay->rows.push_back(evals.size());
                    evals.push_back({forward(state.params, rb.cubes[r].get().features),
                                     head_row(state.head_classes, rb.labels[r])});
                }
            }

            const std::size_t rows = evals.size();
            const std::size_t repr_dim = state.params.dims().repr;
            const std::size_t classes = state.params.num_classes();
            MatrixD reps(rows, repr_dim);
            MatrixD logits(rows, classes);
            std::vector<int> labels(rows);
            for (std::size_t r = 0; r < rows; ++r) {
                const auto& res = evals[r].result;
                std::copy(res.representation.begin(), res.representation.end(), reps.row(r).begin());
                std::copy(res.logits.begin(), res.logits.end(), logits.row(r).begin());
                labels[r] = evals[r].label;
            }

            ObjectiveTerms terms;
            if (config.replay_pairs_in_pairwise_loss || rows == current) {
                terms = combined_objective(reps, logits, labels, replay, weights);
            } else {
                ObjectiveWeights no_pairs = weights;
                no_pairs.pairwise = 0.0;
                terms = combined_objective(reps, logits, labels, replay, no_pairs);
                MatrixD cur(current, repr_dim);
                std::copy(reps.data.begin(), reps.data.begin() + static_cast<std::ptrdiff_t>(cur.data.size()),
                          cur.data.begin());
                const LossValue lp = pairwise_loss(cur, std::span<const int>(labels.data(), current), config.margin);
                terms.pairwise = lp.value;
                terms.total.value += weights.pairwise * lp.value;
                for (std::size_t i = 0; i < lp.grad_repr.data.size(); ++i) {
                    terms.total.grad_repr.data[i] += weights.pairwise * lp.grad_repr.data[i];
                }
            }

            auto grads = ParamGrads::zeros_like(state.params);
            std::vector<float> g_repr(repr_dim), g_logits(classes);
            auto to_float = [](double v) { return static_cast<float>(v); };
            for (std::size_t r = 0; r < rows; ++r) {
                auto gr = terms.total.grad_repr.row(r);
                auto gl = terms.total.grad_logits.row(r);
                std::transform(gr.begin(), gr.end(), g_repr.begin(), to_float);
                std::transform(gl.begin(), gl.end(), g_logits.begin(), to_float);
                backward_accumulate<float>(state.params, evals[r].result.cache, g_repr, g_logits, grads);
            }
            adam_step(state.params, grads, state.moments, lr, ++state.adam_steps);

            entry.pairwise += terms.pairwise;
            entry.cross_entropy += terms.cross_entropy;
            entry.distance_consistency += terms.distance_consistency;
            entry.distance_consistency_raw += terms.distance_consistency_raw;
            entry.total += terms.total.value;
            entry.steps += 1;
            if (replay) entry.replay_steps += 1;
        }
        const double steps = static_cast<double>(entry.steps);
        entry.pairwise /= steps;
        entry.cross_entropy /= steps;
        entry.distance_consistency /= steps;
        entry.distance_consistency_raw /= steps;
        entry.total /= steps;
        state.log.push_back(entry);
    }

    if (replay_mode) {
        // Final-epoch order; each slide enters the reservoir exactly once.
        for (std::size_t i : order) {
            state.bank.reservoir_update(sample_patches(task.cubes[i], config.patch_sample, state.sampling_rng),
                                        state.reservoir_rng);
        }
        state.previous = snapshot(state.params);
        state.bank.finalize_task(*state.previous);
    }
    state.stage += 1;
}

RunResult run_stream(const TaskStream& train_stream, const TrainerConfig& config) {
    if (train_stream.tasks.empty()) throw Error(Errc::invalid_argument, "empty task stream");
    config.validate();
    TrainState state = make_train_state(config, train_stream.feature_dim);
    RunResult out;
    const int total_tasks = static_cast<int>(train_stream.tasks.size());

    if (config.mode == TrainMode::joint) {
        TaskDataset all;
        all.task_id = 0;
        for (const auto& task : train_stream.tasks) {
            all.cubes.insert(all.cubes.end(), task.cubes.begin(), task.cubes.end());
            all.class_set.insert(task.class_set.begin(), task.class_set.end());
            all.site_set.insert(task.site_set.begin(), task.site_set.end());
        }
        train_task(state, all, config);
        out.checkpoints.push_back({total_tasks - 1, total_tasks, snapshot(state.params), state.head_classes});
    } else {
        for (const auto& task : train_stream.tasks) {
            train_task(state, task, config);
            out.checkpoints.push_back({task.task_id, task.task_id + 1, snapshot(state.params), state.head_classes});
        }
    }
    out.log = std::move(state.log);
    return out;
}

}  // namespace lwsr
