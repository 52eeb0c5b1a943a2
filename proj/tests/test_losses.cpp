#include <cmath>

#include "doctest.h"
#include "lwsr/losses.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace lwsr;

namespace {

template <class F>
double worst_of(F check, int instances = 25) {
    double worst = 0.0;
    for (int s = 0; s < instances; ++s) worst = std::max(worst, check(static_cast<std::uint64_t>(1000 + s)));
    return worst;
}

MatrixD rows_of(std::initializer_list<std::vector<double>> rows) {
    MatrixD m(rows.size(), rows.begin()->size());
    std::size_t r = 0;
    for (const auto& row : rows) {
        std::copy(row.begin(), row.end(), m.row(r).begin());
        ++r;
    }
    return m;
}

}  // namespace

TEST_CASE("gradients match central differences on 25 instances each") {
    const double dc = worst_of(oracle::distance_consistency_gradcheck);
    const double lp = worst_of(oracle::pairwise_gradcheck);
    const double ce = worst_of(oracle::cross_entropy_gradcheck);
    MESSAGE("max relative error: dc " << dc << ", pairwise " << lp << ", ce " << ce);
    CHECK(dc < 1e-4);
    CHECK(lp < 1e-4);
    CHECK(ce < 1e-4);
}

TEST_CASE("euclidean_distance_matrix matches a double loop") {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 20; ++t) {
        const MatrixD x = lwsr::testing::random_matrix_d(1 + t % 9, 1 + t % 5, rng);
        const MatrixD want = oracle::distance_double_loop(x);
        const DistanceMatrix got = euclidean_distance_matrix(x);
        for (std::size_t i = 0; i < want.data.size(); ++i) CHECK(got.values().data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
        for (std::size_t i = 0; i < got.side(); ++i) CHECK(got(i, i) == 0.0);
    }
}

TEST_CASE("worked example: k = 2, current 3, target 1") {
    DistanceMatrix cur(2), tgt(2);
    cur(0, 1) = cur(1, 0) = 3.0;
    tgt(0, 1) = tgt(1, 0) = 1.0;
    const MatrixD reps = rows_of({{0.0, 0.0}, {3.0, 0.0}});
    CHECK(squared_frobenius_distance(cur, tgt) == 8.0);
    CHECK(distance_consistency_loss(cur, tgt, reps).value == 4.0);
}

TEST_CASE("distance consistency is zero exactly when distances agree") {
    std::mt19937_64 rng(2);
    const MatrixD x = lwsr::testing::random_matrix_d(6, 4, rng);
    const DistanceMatrix d = euclidean_distance_matrix(x);
    const LossValue same = distance_consistency_loss(d, d, x);
    CHECK(same.value == 0.0);
    for (double g : same.grad_repr.data) CHECK(g == 0.0);

    // Rotation by 90 degrees in the first two axes plus a translation.
    MatrixD moved = x;
    for (std::size_t r = 0; r < x.rows; ++r) {
        moved(r, 0) = -x(r, 1) + 5.0;
        moved(r, 1) = x(r, 0) - 2.0;
        moved(r, 3) += 0.75;
    }
    const LossValue rigid = distance_consistency_loss(euclidean_distance_matrix(moved), d, moved);
    CHECK(rigid.value < 1e-24);
}

TEST_CASE("distance consistency argument errors") {
    std::mt19937_64 rng(3);
    const MatrixD x3 = lwsr::testing::random_matrix_d(3, 2, rng);
    const MatrixD x4 = lwsr::testing::random_matrix_d(4, 2, rng);
    CHECK_THROWS_AS(distance_consistency_loss(euclidean_distance_matrix(x3), euclidean_distance_matrix(x4), x3), Error);
    const MatrixD x1 = lwsr::testing::random_matrix_d(1, 2, rng);
    const auto d1 = euclidean_distance_matrix(x1);
    CHECK_THROWS_AS(distance_consistency_loss(d1, d1, x1), Error);
}

TEST_CASE("pairwise loss worked values") {
    const std::vector<int> same{0, 0}, diff{0, 1};
    const MatrixD far = rows_of({{0.0, 0.0}, {2.0, 0.0}});
    const MatrixD near = rows_of({{0.0, 0.0}, {0.5, 0.0}});
    CHECK(pairwise_loss(far, same).value == 4.0);
    CHECK(pairwise_loss(near, diff).value == 0.25);
    CHECK(pairwise_loss(far, diff).value == 0.0);
    CHECK(pairwise_loss(rows_of({{1.0, 1.0}}), std::vector<int>{0}).value == 0.0);
}

TEST_CASE("cross entropy of uniform logits over 8 classes is ln 8") {
    const MatrixD logits(3, 8, 0.25);
    const std::vector<int> labels{0, 4, 7};
    CHECK(cross_entropy(logits, labels).value == doctest::Approx(std::log(8.0)).epsilon(1e-12));
    CHECK_THROWS_AS(cross_entropy(logits, std::vector<int>{0, 8, 1}), Error);
}

TEST_CASE("combined objective is linear in alpha") {
    std::mt19937_64 rng(4);
    const MatrixD reps = lwsr::testing::random_matrix_d(8, 3, rng);
    const MatrixD logits = lwsr::testing::random_matrix_d(8, 4, rng);
    const std::vector<int> labels{0, 1, 2, 3, 0, 1, 2, 3};
    MatrixD old = lwsr::testing::random_matrix_d(4, 3, rng);
    ReplayTarget replay{{4, 5, 6, 7}, euclidean_distance_matrix(old)};

    ObjectiveWeights w;
    w.alpha = 0.0;
    const ObjectiveTerms base = combined_objective(reps, logits, labels, replay, w);
    CHECK(base.total.value == doctest::Approx(base.pairwise + base.cross_entropy).epsilon(1e-12));
    CHECK(base.distance_consistency > 0.0);
    for (double alpha : {0.01, 0.5, 3.0}) {
        w.alpha = alpha;
        const ObjectiveTerms t = combined_objective(reps, logits, labels, replay, w);
        CHECK(t.total.value == doctest::Approx(base.total.value + alpha * base.distance_consistency).epsilon(1e-12));
        CHECK(t.distance_consistency_raw == doctest::Approx(base.distance_consistency * 12.0).epsilon(1e-12));
    }
    w.alpha = -1.0;
    CHECK_THROWS_AS(combined_objective(reps, logits, labels, replay, w), Error);
}

TEST_CASE("combined objective gradient matches central differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(seed);
        MatrixD reps = lwsr::testing::random_matrix_d(6, 3, rng, 0.5);
        MatrixD logits = lwsr::testing::random_matrix_d(6, 3, rng);
        const std::vector<int> labels{0, 1, 2, 0, 1, 2};
        const MatrixD old = lwsr::testing::random_matrix_d(3, 3, rng, 0.5);
        const std::optional<ReplayTarget> replay = ReplayTarget{{1, 3, 5}, euclidean_distance_matrix(old)};
        ObjectiveWeights w{0.7, 1.3, 2.0, 1.0};
        const MatrixD d = oracle::distance_double_loop(reps);
        bool near_kink = false;
        for (double v : d.data) near_kink = near_kink || (v != 0.0 && std::abs(v - 1.0) < 1e-3);
        if (near_kink) continue;

        const ObjectiveTerms t = combined_objective(reps, logits, labels, replay, w);
        auto f = [&]() { return combined_objective(reps, logits, labels, replay, w).total.value; };
        CHECK(oracle::max_relative_error(t.total.grad_repr.data, lwsr::testing::numeric_gradient(reps.data, f)) < 1e-4);
        CHECK(oracle::max_relative_error(t.total.grad_logits.data, lwsr::testing::numeric_gradient(logits.data, f)) < 1e-4);
    }
}
