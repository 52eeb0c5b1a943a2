#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lwsr/corpus.hpp"
#include "lwsr/retrieval_index.hpp"
#include "lwsr/trainer.hpp"

namespace lwsr {

/// AP over a full ranking of 0/1 relevance flags:
/// (1/R) * sum over relevant positions k of (relevant in top k) / k.
/// A ranking with no relevant item scores 0. Throws on an empty ranking.
double average_precision(std::span<const int> relevance);

/// Fraction of the top k that is relevant; the denominator stays k even
/// when fewer than k items are ranked.
double precision_at_k(std::span<const int> relevance, std::size_t k);

/// 1 if any of the top k is relevant, else 0.
double recall_hit_at_k(std::span<const int> relevance, std::size_t k);

/// Both arguments map item -> rank and must be permutations of the same rank
/// values (e.g. 1..n). rho = 1 - 6 sum d^2 / (n (n^2 - 1)).
double spearman_rho(std::span<const int> rank_a, std::span<const int> rank_b);

/// tau = (concordant - discordant) / (n (n - 1) / 2), by enumerating pairs.
double kendall_tau(std::span<const int> rank_a, std::span<const int> rank_b);

/// Rank vectors (1-based) for the items of two queues, in the item order of
/// `a`. Throws invalid_argument if the queues rank different item sets.
std::pair<std::vector<int>, std::vector<int>> paired_ranks(const RetrievalQueue& a, const RetrievalQueue& b);

enum class Granularity { tumor_type, anatomic_site };

struct RelevanceJudger {
    Granularity granularity = Granularity::tumor_type;

    bool relevant(const IndexEntry& query, const IndexEntry& candidate) const {
        return granularity == Granularity::tumor_type ? query.class_label == candidate.class_label
                                                      : query.site_label == candidate.site_label;
    }
};

/// rho/tau keyed by 0-based stage pair (i, j), i < j.
struct ConsistencyTable {
    int num_stages = 0;
    std::map<std::pair<int, int>, double> rho;
    std::map<std::pair<int, int>, double> tau;
};

/// (1/(n-1)) sum_i (1/(n-i)) sum_{j>i} value(i, j) with 1-based i, j.
/// Throws invalid_state if any pair is missing.
double aggregate_src(const ConsistencyTable& table);
double aggregate_krc(const ConsistencyTable& table);

struct MetricOptions {
    std::size_t recall_k = 3;
    std::size_t precision_k = 5;
};

/// For every stage pair i < j: the task-<=i database is encoded by both the
/// stage-i and the stage-j encoder, each held-out query of task i is ranked
/// against it under both, and the per-query coefficients are averaged.
/// Checkpoints must be in stage order; needs at least two.
ConsistencyTable consistency_evaluation(std::span<const StageCheckpoint> checkpoints, const TaskStream& stream,
                                        const HeldOutSplit& split);

struct StageReport {
    int stage = 0;
    std::size_t num_queries = 0;
    std::size_t database_size = 0;
    std::size_t queries_without_relevant = 0;
    double map = 0.0;
    double r_at_3 = 0.0;
    double p_at_5 = 0.0;
    double site_map = 0.0;
    double site_r_at_3 = 0.0;
    double site_p_at_5 = 0.0;
    std::optional<double> src;
    std::optional<double> krc;
};

/// Leave-one-out evaluation of one checkpoint: every held-out slide of the
/// checkpoint's database ranks the rest of that database.
StageReport stage_report(const StageCheckpoint& checkpoint, const TaskStream& stream, const HeldOutSplit& split,
                         const MetricOptions& options = {});

}  // namespace lwsr
