#include "lwsr/metrics.hpp"

#include <algorithm>
#include <unordered_map>

namespace lwsr {
namespace {

void check_rank_pair(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) throw Error(Errc::invalid_argument, "rank vectors differ in length");
    if (a.size() < 2) throw Error(Errc::invalid_argument, "rank correlation needs n >= 2");
    std::vector<int> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    if (sa != sb || std::adjacent_find(sa.begin(), sa.end()) != sa.end()) {
        throw Error(Errc::invalid_argument, "rank vectors are not permutations of the same rank set");
    }
}

double aggregate(const ConsistencyTable& table, const std::map<std::pair<int, int>, double>& values) {
    const int n = table.num_stages;
    if (n < 2) throw Error(Errc::invalid_state, "aggregation needs at least two stages");
    double outer = 0.0;
    for (int i = 0; i < n - 1; ++i) {
        double inner = 0.0;
        for (int j = i + 1; j < n; ++j) {
            auto it = values.find({i, j});
            if (it == values.end()) {
                throw Error(Errc::invalid_state, "consistency table lacks pair (" + std::to_string(i) + ", " +
                                                     std::to_string(j) + ")");
            }
            inner += it->second;
        }
        outer += inner / static_cast<double>(n - 1 - i);
    }
    return outer / static_cast<double>(n - 1);
}

}  // namespace

double average_precision(std::span<const int> relevance) {
    if (relevance.empty()) throw Error(Errc::invalid_argument, "empty ranking");
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t k = 0; k < relevance.size(); ++k) {
        if (relevance[k] != 0) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

double precision_at_k(std::span<const int> relevance, std::size_t k) {
    if (k == 0) throw Error(Errc::invalid_argument, "k must be >= 1");
    const std::size_t top = std::min(k, relevance.size());
    const auto hits = std::count_if(relevance.begin(), relevance.begin() + static_cast<std::ptrdiff_t>(top),
                                    [](int r) { return r != 0; });
    return static_cast<double>(hits) / static_cast<double>(k);
}

double recall_hit_at_k(std::span<const int> relevance, std::size_t k) {
    if (k == 0) throw Error(Errc::invalid_argument, "k must be >= 1");
    const std::size_t top = std::min(k, relevance.size());
    return std::any_of(relevance.begin(), relevance.begin() + static_cast<std::ptrdiff_t>(top),
                       [](int r) { return r != 0; })
               ? 1.0
               : 0.0;
}

double spearman_rho(std::span<const int> rank_a, std::span<const int> rank_b) {
    check_rank_pair(rank_a, rank_b);
    const double n = static_cast<double>(rank_a.size());
    double sum_sq = 0.0;
    for (std::size_t k = 0; k < rank_a.size(); ++k) {
        const double d = static_cast<double>(rank_a[k] - rank_b[k]);
        sum_sq += d * d;
    }
    return 1.0 - 6.0 * sum_sq / (n * (n * n - 1.0));
}

double kendall_tau(std::span<const int> rank_a, std::span<const int> rank_b) {
    check_rank_pair(rank_a, rank_b);
    const std::size_t n = rank_a.size();
    long long concordant = 0, discordant = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const long long s = static_cast<long long>(rank_a[i] - rank_a[j]) * (rank_b[i] - rank_b[j]);
            if (s > 0) ++concordant;
            else if (s < 0) ++discordant;
        }
    }
    return static_cast<double>(concordant - discordant) / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

std::pair<std::vector<int>, std::vector<int>> paired_ranks(const RetrievalQueue& a, const RetrievalQueue& b) {
    if (a.ranked.size() != b.ranked.size()) throw Error(Errc::invalid_argument, "queues rank different item sets");
    std::unordered_map<std::string, int> rank_in_b;
    for (std::size_t k = 0; k < b.ranked.size(); ++k) rank_in_b.emplace(b.ranked[k].slide_id, static_cast<int>(k) + 1);
    std::vector<int> ra, rb;
    ra.reserve(a.ranked.size());
    rb.reserve(a.ranked.size());
    for (std::size_t k = 0; k < a.ranked.size(); ++k) {
        auto it = rank_in_b.find(a.ranked[k].slide_id);
        if (it == rank_in_b.end()) throw Error(Errc::invalid_argument, "queues rank different item sets");
        ra.push_back(static_cast<int>(k) + 1);
        rb.push_back(it->second);
    }
    return {std::move(ra), std::move(rb)};
}

double aggregate_src(const ConsistencyTable& table) { return aggregate(table, table.rho); }
double aggregate_krc(const ConsistencyTable& table) { return aggregate(table, table.tau); }

ConsistencyTable consistency_evaluation(std::span<const StageCheckpoint> checkpoints, const TaskStream& stream,
                                        const HeldOutSplit& split) {
    if (checkpoints.size() < 2) throw Error(Errc::invalid_state, "consistency evaluation needs at least two stages");
    ConsistencyTable table;
    table.num_stages = static_cast<int>(checkpoints.size());

    for (std::size_t i = 0; i + 1 < checkpoints.size(); ++i) {
        const auto& ref = checkpoints[i];
        const auto db = database_cubes(stream, ref.tasks_in_database);
        const RetrievalIndex ref_index = build_index(ref.encoder, db, ref.stage);

        std::vector<std::size_t> queries;
        for (std::size_t e = 0; e < ref_index.size(); ++e) {
            const auto& entry = ref_index.entries()[e];
            if (entry.task_id == ref.stage && split.is_test(entry.slide_id)) queries.push_back(e);
        }
        if (queries.empty()) {
            throw Error(Errc::invalid_state, "task " + std::to_string(ref.stage) + " has no held-out queries");
        }
        if (ref_index.size() < 3) throw Error(Errc::invalid_state, "database too small for rank correlation");

        for (std::size_t j = i + 1; j < checkpoints.size(); ++j) {
            const RetrievalIndex later = build_index(checkpoints[j].encoder, db, checkpoints[j].stage);
            double rho = 0.0, tau = 0.0;
            for (std::size_t e : queries) {
                const auto& id = ref_index.entries()[e].slide_id;
                const RetrievalQueue qa = ref_index.rank(ref_index.entries()[e].representation, id);
                const RetrievalQueue qb = later.rank(later.entries()[e].representation, id);
                const auto [ra, rb] = paired_ranks(qa, qb);
                rho += spearman_rho(ra, rb);
                tau += kendall_tau(ra, rb);
            }
            const double q = static_cast<double>(queries.size());
            table.rho[{static_cast<int>(i), static_cast<int>(j)}] = rho / q;
            table.tau[{static_cast<int>(i), static_cast<int>(j)}] = tau / q;
        }
    }
    return table;
}

StageReport stage_report(const StageCheckpoint& checkpoint, const TaskStream& stream, const HeldOutSplit& split,
                         const MetricOptions& options) {
    const auto db = database_cubes(stream, checkpoint.tasks_in_database);
    const RetrievalIndex index = build_index(checkpoint.encoder, db, checkpoint.stage);
    const RelevanceJudger tumor{Granularity::tumor_type};
    const RelevanceJudger site{Granularity::anatomic_site};

    StageReport report;
    report.stage = checkpoint.stage;
    report.database_size = index.size();

    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t e = 0; e < index.size(); ++e) position.emplace(index.entries()[e].slide_id, e);

    std::vector<int> tumor_flags, site_flags;
    for (const auto& q : index.entries()) {
        if (!split.is_test(q.slide_id)) continue;
        const RetrievalQueue queue = index.rank(q.representation, q.slide_id);
        if (queue.ranked.empty()) continue;
        tumor_flags.clear();
        site_flags.clear();
        for (const auto& r : queue.ranked) {
            const auto& cand = index.entries()[position.at(r.slide_id)];
            tumor_flags.push_back(tumor.relevant(q, cand) ? 1 : 0);
            site_flags.push_back(site.relevant(q, cand) ? 1 : 0);
        }
        if (std::none_of(tumor_flags.begin(), tumor_flags.end(), [](int f) { return f != 0; })) {
            ++report.queries_without_relevant;
        }
        report.map += average_precision(tumor_flags);
        report.r_at_3 += recall_hit_at_k(tumor_flags, options.recall_k);
        report.p_at_5 += precision_at_k(tumor_flags, options.precision_k);
        report.site_map += average_precision(site_flags);
        report.site_r_at_3 += recall_hit_at_k(site_flags, options.recall_k);
        report.site_p_at_5 += precision_at_k(site_flags, options.precision_k);
        ++report.num_queries;
    }
    if (report.num_queries == 0) throw Error(Errc::invalid_state, "no held-out queries in the stage database");
    const double q = static_cast<double>(report.num_queries);
    for (double* m : {&report.map, &report.r_at_3, &report.p_at_5, &report.site_map, &report.site_r_at_3,
                      &report.site_p_at_5}) {
        *m /= q;
    }
    return report;
}

}  // namespace lwsr
