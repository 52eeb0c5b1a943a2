#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "lwsr/corpus.hpp"
#include "lwsr/encoder.hpp"

namespace lwsr {

struct IndexEntry {
    std::string slide_id;
    int task_id = 0;
    int class_label = 0;
    int site_label = 0;
    std::vector<float> representation;
};

struct RankedSlide {
    std::string slide_id;
    double distance = 0.0;
    bool operator==(const RankedSlide&) const = default;
};

/// Ranked answer to one query: ascending distance, ties by ascending
/// slide_id, the query's own slide excluded.
struct RetrievalQueue {
    std::string query_slide_id;
    std::vector<RankedSlide> ranked;
};

struct IndexOptions {
    // Encode a row subsample instead of the full cube.
    std::optional<std::size_t> patch_sample;
    std::uint64_t sample_seed = 0;
};

class RetrievalIndex {
public:
    RetrievalIndex(FrozenEncoder encoder, int stage, std::vector<IndexEntry> entries);

    const FrozenEncoder& encoder() const { return encoder_; }
    int encoder_stage() const { return stage_; }
    const std::vector<IndexEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    /// Position of `slide_id`, if present.
    std::optional<std::size_t> find(const std::string& slide_id) const;

    /// Exhaustive ranking of a precomputed query representation. Entries
    /// named `exclude_id` are skipped; `restrict_to` filters by task id.
    RetrievalQueue rank(std::span<const float> query_repr, const std::string& exclude_id,
                        const std::optional<std::set<int>>& restrict_to = std::nullopt) const;

private:
    FrozenEncoder encoder_;
    int stage_;
    std::vector<IndexEntry> entries_;
};

/// Every cube of tasks [0, num_tasks) of `stream`, in stream order.
std::vector<const FeatureCube*> database_cubes(const TaskStream& stream, int num_tasks);

/// Encodes each cube once with `encoder`. Throws invalid_argument for an
/// empty database, duplicate ids, or mismatched dimensions.
RetrievalIndex build_index(const FrozenEncoder& encoder, std::span<const FeatureCube* const> database, int stage = 0,
                           const IndexOptions& options = {});

/// Top-k neighbours of `query_cube`; shorter than k when the database is.
RetrievalQueue query(const RetrievalIndex& index, const FeatureCube& query_cube, std::size_t k);

/// Complete ranking, optionally limited to entries whose task id is in
/// `restrict_to` (which must then be nonempty).
RetrievalQueue full_ranking(const RetrievalIndex& index, const FeatureCube& query_cube,
                            const std::optional<std::set<int>>& restrict_to = std::nullopt);

/// `<base>.bin` holds the representation matrix (one row per entry, corpus
/// block format); `<base>.json` lists slide ids and labels in row order.
void write_index_dump(const RetrievalIndex& index, const std::filesystem::path& base);

}  // namespace lwsr
