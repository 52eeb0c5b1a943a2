#pragma once

#include <optional>
#include <span>
#include <vector>

#include "lwsr/common.hpp"

namespace lwsr {

/// Square matrix of pairwise Euclidean distances. Kept in double precision:
/// the distance-consistency term compares two of these and must vanish
/// exactly when both were computed from identical representations.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    explicit DistanceMatrix(std::size_t side) : values_(side, side) {}

    std::size_t side() const { return values_.rows; }
    double& operator()(std::size_t i, std::size_t j) { return values_(i, j); }
    double operator()(std::size_t i, std::size_t j) const { return values_(i, j); }
    const MatrixD& values() const { return values_; }

    /// Rows/cols picked by `indices`, in that order.
    DistanceMatrix submatrix(std::span<const std::size_t> indices) const;
    bool operator==(const DistanceMatrix&) const = default;

private:
    MatrixD values_;
};

struct LossValue {
    double value = 0.0;
    MatrixD grad_repr;    // one row per input representation
    MatrixD grad_logits;  // empty when the loss does not touch logits
};

/// out(i,j) = ||r_i - r_j||_2. Throws invalid_argument on empty or non-finite input.
DistanceMatrix euclidean_distance_matrix(const MatrixD& representations);

/// Mean over off-diagonal entries of (d_current - d_target)^2, i.e. the
/// squared Frobenius norm divided by k(k-1). Gradients flow to
/// `representations` through d_current; coincident pairs contribute zero.
LossValue distance_consistency_loss(const DistanceMatrix& d_current, const DistanceMatrix& d_target,
                                    const MatrixD& representations);

/// Raw squared Frobenius norm ||d_current - d_target||_F^2, for logging.
double squared_frobenius_distance(const DistanceMatrix& a, const DistanceMatrix& b);

/// Contrastive loss averaged over all unordered pairs: same-label pairs pay
/// d^2, different-label pairs pay max(0, margin - d)^2. Fewer than two
/// representations gives zero loss and zero gradient.
LossValue pairwise_loss(const MatrixD& representations, std::span<const int> labels, double margin = 1.0);

/// Mean negative log-softmax of the labelled class; gradient (softmax - onehot)/n.
LossValue cross_entropy(const MatrixD& logits, std::span<const int> labels);

/// Replay part of a training batch: which rows of the concatenated batch are
/// exemplars, and the frozen-encoder distances among them.
struct ReplayTarget {
    std::vector<std::size_t> rows;
    DistanceMatrix target;
};

struct ObjectiveTerms {
    double pairwise = 0.0;
    double cross_entropy = 0.0;
    double distance_consistency = 0.0;   // normalized, as weighted into the total
    double distance_consistency_raw = 0.0;  // squared Frobenius norm
    LossValue total;
};

struct ObjectiveWeights {
    double pairwise = 1.0;
    double cross_entropy = 1.0;
    double alpha = 0.01;
    double margin = 1.0;
};

/// weights.pairwise * L_P + weights.cross_entropy * L_CE + alpha * L_DC over
/// the concatenated (current + replay) batch. Without a replay target, or
/// with fewer than two replay rows, the distance term is zero.
ObjectiveTerms combined_objective(const MatrixD& representations, const MatrixD& logits, std::span<const int> labels,
                                  const std::optional<ReplayTarget>& replay, const ObjectiveWeights& weights);

}  // namespace lwsr
