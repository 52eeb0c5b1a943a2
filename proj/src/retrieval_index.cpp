#include "lwsr/retrieval_index.hpp"

#include <algorithm>
#include <unordered_set>

#include "json.hpp"
#include "lwsr/binary_io.hpp"

namespace lwsr {

RetrievalIndex::RetrievalIndex(FrozenEncoder encoder, int stage, std::vector<IndexEntry> entries)
    : encoder_(std::move(encoder)), stage_(stage), entries_(std::move(entries)) {
    std::unordered_set<std::string> ids;
    for (const auto& e : entries_) {
        if (!ids.insert(e.slide_id).second) throw Error(Errc::duplicate_id, "index slide_id " + e.slide_id);
        if (!all_finite<float>(e.representation)) throw Error(Errc::non_finite, "representation of " + e.slide_id);
    }
}

std::optional<std::size_t> RetrievalIndex::find(const std::string& slide_id) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].slide_id == slide_id) return i;
    }
    return std::nullopt;
}

RetrievalQueue RetrievalIndex::rank(std::span<const float> query_repr, const std::string& exclude_id,
                                    const std::optional<std::set<int>>& restrict_to) const {
    if (restrict_to && restrict_to->empty()) throw Error(Errc::invalid_argument, "empty task restriction");
    RetrievalQueue queue;
    queue.query_slide_id = exclude_id;
    queue.ranked.reserve(entries_.size());
    for (const auto& e : entries_) {
        if (e.slide_id == exclude_id) continue;
        if (restrict_to && restrict_to->count(e.task_id) == 0) continue;
        if (e.representation.size() != query_repr.size()) {
            throw Error(Errc::invalid_argument, "query representation width differs from index");
        }
        double acc = 0.0;
        for (std::size_t k = 0; k < query_repr.size(); ++k) {
            const double d = static_cast<double>(e.representation[k]) - static_cast<double>(query_repr[k]);
            acc += d * d;
        }
        queue.ranked.push_back({e.slide_id, std::sqrt(acc)});
    }
    std::sort(queue.ranked.begin(), queue.ranked.end(), [](const RankedSlide& a, const RankedSlide& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.slide_id < b.slide_id;
    });
    return queue;
}

std::vector<const FeatureCube*> database_cubes(const TaskStream& stream, int num_tasks) {
    std::vector<const FeatureCube*> out;
    for (const auto& task : stream.tasks) {
        if (task.task_id >= num_tasks) continue;
        for (const auto& cube : task.cubes) out.push_back(&cube);
    }
    return out;
}

RetrievalIndex build_index(const FrozenEncoder& encoder, std::span<const FeatureCube* const> database, int stage,
                           const IndexOptions& options) {
    if (database.empty()) throw Error(Errc::invalid_argument, "cannot index an empty database");
    const auto& params = encoder.params();
    Rng rng(options.sample_seed);
    std::vector<IndexEntry> entries;
    entries.reserve(database.size());
    for (const FeatureCube* cube : database) {
        if (cube->feature_dim() != params.dims().feature_dim) {
            throw Error(Errc::invalid_argument, "slide " + cube->slide_id + " has the wrong feature dimension");
        }
        IndexEntry e{cube->slide_id, cube->task_id, cube->class_label, cube->site_label, {}};
        if (options.patch_sample) {
            e.representation = encode(params, sample_patches(*cube, *options.patch_sample, rng).features);
        } else {
            e.representation = encode(params, cube->features);
        }
        entries.push_back(std::move(e));
    }
    return RetrievalIndex(encoder, stage, std::move(entries));
}

RetrievalQueue query(const RetrievalIndex& index, const FeatureCube& query_cube, std::size_t k) {
    if (k == 0) throw Error(Errc::invalid_argument, "k must be >= 1");
    const auto repr = encode(index.encoder().params(), query_cube.features);
    RetrievalQueue queue = index.rank(repr, query_cube.slide_id);
    if (queue.ranked.size() > k) queue.ranked.resize(k);
    return queue;
}

RetrievalQueue full_ranking(const RetrievalIndex& index, const FeatureCube& query_cube,
                            const std::optional<std::set<int>>& restrict_to) {
    if (restrict_to && restrict_to->empty()) throw Error(Errc::invalid_argument, "empty task restriction");
    const auto repr = encode(index.encoder().params(), query_cube.features);
    return index.rank(repr, query_cube.slide_id, restrict_to);
}

void write_index_dump(const RetrievalIndex& index, const std::filesystem::path& base) {
    const std::size_t width = index.entries().empty() ? 0 : index.entries().front().representation.size();
    MatrixF reps(index.size(), width);
    nlohmann::json meta;
    meta["encoder_stage"] = index.encoder_stage();
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < index.size(); ++i) {
        const auto& e = index.entries()[i];
        std::copy(e.representation.begin(), e.representation.end(), reps.row(i).begin());
        rows.push_back({{"slide_id", e.slide_id},
                        {"task_id", e.task_id},
                        {"class_label", e.class_label},
                        {"site_label", e.site_label}});
    }
    meta["entries"] = std::move(rows);
    auto bin = base;
    bin += ".bin";
    auto js = base;
    js += ".json";
    io::write_matrix_file(bin, reps);
    io::write_text_file(js, meta.dump(2) + "\n");
}

}  // namespace lwsr
