#include "lwsr/losses.hpp"

#include <algorithm>

namespace lwsr {
namespace {

double row_distance(const MatrixD& m, std::size_t i, std::size_t j) {
    double acc = 0.0;
    auto a = m.row(i);
    auto b = m.row(j);
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double diff = a[k] - b[k];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

// grad(r_i) += scale * (r_i - r_j), grad(r_j) -= scale * (r_i - r_j)
void push_pair_gradient(const MatrixD& reps, std::size_t i, std::size_t j, double scale, MatrixD& grad) {
    auto a = reps.row(i);
    auto b = reps.row(j);
    auto ga = grad.row(i);
    auto gb = grad.row(j);
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double g = scale * (a[k] - b[k]);
        ga[k] += g;
        gb[k] -= g;
    }
}

}  // namespace

DistanceMatrix DistanceMatrix::submatrix(std::span<const std::size_t> indices) const {
    DistanceMatrix out(indices.size());
    for (std::size_t a = 0; a < indices.size(); ++a) {
        for (std::size_t b = 0; b < indices.size(); ++b) {
            if (indices[a] >= side() || indices[b] >= side()) {
                throw Error(Errc::invalid_argument, "submatrix index out of range");
            }
            out(a, b) = (*this)(indices[a], indices[b]);
        }
    }
    return out;
}

DistanceMatrix euclidean_distance_matrix(const MatrixD& representations) {
    if (representations.rows == 0) throw Error(Errc::invalid_argument, "no representations");
    if (!all_finite<double>(representations.data)) throw Error(Errc::invalid_argument, "non-finite representation");
    const std::size_t n = representations.rows;
    DistanceMatrix out(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = row_distance(representations, i, j);
            out(i, j) = d;
            out(j, i) = d;
        }
    }
    return out;
}

double squared_frobenius_distance(const DistanceMatrix& a, const DistanceMatrix& b) {
    if (a.side() != b.side()) throw Error(Errc::invalid_argument, "distance matrix sides differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.values().data.size(); ++i) {
        const double diff = a.values().data[i] - b.values().data[i];
        acc += diff * diff;
    }
    return acc;
}

LossValue distance_consistency_loss(const DistanceMatrix& d_current, const DistanceMatrix& d_target,
                                    const MatrixD& representations) {
    const std::size_t k = d_current.side();
    if (d_target.side() != k || representations.rows != k) {
        throw Error(Errc::invalid_argument, "distance consistency: sides " + std::to_string(k) + ", " +
                                                std::to_string(d_target.side()) + " and " +
                                                std::to_string(representations.rows) + " representations");
    }
    if (k < 2) throw Error(Errc::invalid_argument, "distance consistency needs at least two exemplars");

    const double norm = static_cast<double>(k * (k - 1));
    LossValue out;
    out.value = squared_frobenius_distance(d_current, d_target) / norm;
    out.grad_repr = MatrixD(k, representations.cols);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            const double d = d_current(i, j);
            if (d == 0.0) continue;
            // (i,j) and (j,i) both hold this residual.
            const double residual = (d - d_target(i, j)) + (d_current(j, i) - d_target(j, i));
            push_pair_gradient(representations, i, j, 2.0 * residual / (d * norm), out.grad_repr);
        }
    }
    return out;
}

LossValue pairwise_loss(const MatrixD& representations, std::span<const int> labels, double margin) {
    const std::size_t n = representations.rows;
    if (labels.size() != n) throw Error(Errc::invalid_argument, "label count differs from representation count");
    LossValue out;
    out.grad_repr = MatrixD(n, representations.cols);
    if (n < 2) return out;

    const double pairs = static_cast<double>(n * (n - 1) / 2);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = row_distance(representations, i, j);
            if (labels[i] == labels[j]) {
                total += d * d;
                push_pair_gradient(representations, i, j, 2.0 / pairs, out.grad_repr);
            } else if (d < margin) {
                const double gap = margin - d;
                total += gap * gap;
                if (d > 0.0) push_pair_gradient(representations, i, j, -2.0 * gap / (d * pairs), out.grad_repr);
            }
        }
    }
    out.value = total / pairs;
    return out;
}

LossValue cross_entropy(const MatrixD& logits, std::span<const int> labels) {
    const std::size_t n = logits.rows;
    const std::size_t classes = logits.cols;
    if (labels.size() != n) throw Error(Errc::invalid_argument, "label count differs from logit rows");
    LossValue out;
    out.grad_logits = MatrixD(n, classes);
    out.grad_repr = MatrixD(n, 0);
    if (n == 0) return out;
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const int label = labels[r];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw Error(Errc::invalid_argument, "label " + std::to_string(label) + " outside [0, " +
                                                    std::to_string(classes) + ")");
        }
        auto z = logits.row(r);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - zmax);
        const double log_norm = zmax + std::log(sum);
        total += log_norm - z[static_cast<std::size_t>(label)];
        auto g = out.grad_logits.row(r);
        for (std::size_t c = 0; c < classes; ++c) g[c] = std::exp(z[c] - log_norm) / static_cast<double>(n);
        g[static_cast<std::size_t>(label)] -= 1.0 / static_cast<double>(n);
    }
    out.value = total / static_cast<double>(n);
    return out;
}

ObjectiveTerms combined_objective(const MatrixD& representations, const MatrixD& logits, std::span<const int> labels,
                                  const std::optional<ReplayTarget>& replay, const ObjectiveWeights& weights) {
    if (weights.alpha < 0.0) throw Error(Errc::invalid_argument, "alpha must be >= 0");
    if (logits.rows != representations.rows) throw Error(Errc::invalid_argument, "logit/representation row mismatch");

    ObjectiveTerms terms;
    const LossValue lp = pairwise_loss(representations, labels, weights.margin);
    const LossValue ce = cross_entropy(logits, labels);
    terms.pairwise = lp.value;
    terms.cross_entropy = ce.value;

    LossValue& total = terms.total;
    total.grad_repr = MatrixD(representations.rows, representations.cols);
    total.grad_logits = MatrixD(logits.rows, logits.cols);
    for (std::size_t i = 0; i < total.grad_repr.data.size(); ++i) {
        total.grad_repr.data[i] = weights.pairwise * lp.grad_repr.data[i];
    }
    for (std::size_t i = 0; i < total.grad_logits.data.size(); ++i) {
        total.grad_logits.data[i] = weights.cross_entropy * ce.grad_logits.data[i];
    }

    double dc = 0.0;
    if (replay && replay->rows.size() >= 2) {
        MatrixD replay_reps(replay->rows.size(), representations.cols);
        for (std::size_t a = 0; a < replay->rows.size(); ++a) {
            if (replay->rows[a] >= representations.rows) throw Error(Errc::invalid_argument, "replay row out of range");
            auto src = representations.row(replay->rows[a]);
            std::copy(src.begin(), src.end(), replay_reps.row(a).begin());
        }
        const DistanceMatrix current = euclidean_distance_matrix(replay_reps);
        const LossValue ldc = distance_consistency_loss(current, replay->target, replay_reps);
        dc = ldc.value;
        terms.distance_consistency = ldc.value;
        terms.distance_consistency_raw = squared_frobenius_distance(current, replay->target);
        if (weights.alpha != 0.0) {
            for (std::size_t a = 0; a < replay->rows.size(); ++a) {
                auto g = total.grad_repr.row(replay->rows[a]);
                auto src = ldc.grad_repr.row(a);
                for (std::size_t k = 0; k < g.size(); ++k) g[k] += weights.alpha * src[k];
            }
        }
    }
    total.value = weights.pairwise * lp.value + weights.cross_entropy * ce.value + weights.alpha * dc;
    return terms;
}

}  // namespace lwsr
