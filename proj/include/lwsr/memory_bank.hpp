#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "lwsr/corpus.hpp"
#include "lwsr/encoder.hpp"
#include "lwsr/losses.hpp"

namespace lwsr {

/// Vitter's Algorithm R over an unbounded stream: after `seen` observations
/// every item is held with probability capacity/seen.
template <class T>
class Reservoir {
public:
    explicit Reservoir(std::size_t capacity = 0) : capacity_(capacity) { items_.reserve(capacity); }

    // Returns the slot the item landed in, or nullopt if it was discarded.
    template <class URBG>
    std::optional<std::size_t> observe(T item, URBG& rng) {
        ++seen_;
        if (items_.size() < capacity_) {
            items_.push_back(std::move(item));
            return items_.size() - 1;
        }
        if (capacity_ == 0) return std::nullopt;
        std::uniform_int_distribution<std::uint64_t> pick(0, seen_ - 1);
        const std::uint64_t j = pick(rng);
        if (j >= capacity_) return std::nullopt;
        items_[j] = std::move(item);
        return static_cast<std::size_t>(j);
    }

    const std::vector<T>& items() const { return items_; }
    std::size_t capacity() const { return capacity_; }
    std::uint64_t seen() const { return seen_; }
    std::size_t size() const { return items_.size(); }

    // Restores a previously saved state.
    void restore(std::vector<T> items, std::uint64_t seen) {
        items_ = std::move(items);
        seen_ = seen;
    }

private:
    std::size_t capacity_;
    std::uint64_t seen_ = 0;
    std::vector<T> items_;
};

struct ReplayBatch {
    std::vector<std::reference_wrapper<const FeatureCube>> cubes;
    std::vector<int> labels;
    std::vector<std::size_t> bank_indices;
    DistanceMatrix target_submatrix;
};

/// Exemplar memory: a single reservoir that streams across every task, plus
/// the distance matrix among its exemplars as seen by the most recent frozen
/// encoder. The matrix is dropped whenever the exemplar set changes and is
/// rebuilt by finalize_task.
class MemoryBank {
public:
    explicit MemoryBank(std::size_t capacity = 0) : reservoir_(capacity) {}

    template <class URBG>
    void reservoir_update(FeatureCube item, URBG& rng) {
        if (reservoir_.observe(std::move(item), rng)) target_.reset();
    }

    /// Encodes every exemplar with `prev_encoder` and stores all pairwise
    /// Euclidean distances. Throws invalid_state on an empty bank.
    void finalize_task(const FrozenEncoder& prev_encoder);

    /// k distinct exemplars, uniform without replacement, in draw order; k is
    /// clamped to the bank size. Throws invalid_argument for k == 0 and
    /// invalid_state when no target matrix is available.
    ReplayBatch sample_replay(std::size_t k, Rng& rng) const;

    const std::vector<FeatureCube>& exemplars() const { return reservoir_.items(); }
    std::size_t capacity() const { return reservoir_.capacity(); }
    std::uint64_t seen() const { return reservoir_.seen(); }
    std::size_t size() const { return reservoir_.size(); }
    bool empty() const { return reservoir_.size() == 0; }
    const std::optional<DistanceMatrix>& target_matrix() const { return target_; }

    /// Directory with bank.json, one feature binary per exemplar and
    /// target_matrix.bin (f32, so a reload matches to float precision).
    void save(const std::filesystem::path& dir) const;
    static MemoryBank load(const std::filesystem::path& dir);

private:
    Reservoir<FeatureCube> reservoir_;
    std::optional<DistanceMatrix> target_;
};

}  // namespace lwsr
