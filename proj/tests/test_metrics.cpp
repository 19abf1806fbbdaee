#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sfm/metrics.hpp"
#include "sfm/penalty.hpp"
#include "sfm/rng.hpp"

using namespace sfm;

namespace {

DenseMatrix random_w(Rng& rng, std::size_t d, double density = 0.5) {
    DenseMatrix W(d, d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j)
            if (rng.next_uniform() < density) W(i, j) = rng.next_gaussian();
    return W;
}

}  // namespace

TEST_CASE("estimation error") {
    Rng rng(1);

    SECTION("exact factorization scores zero") {
        for (int trial = 0; trial < 20; ++trial) {
            DenseMatrix W = random_w(rng, 6);
            bool any = false;
            for (double v : W.data()) any |= v != 0.0;
            if (!any) continue;
            const DenseMatrix P = exact_interaction_factor(W);
            REQUIRE(estimation_error(W, P) <= 1e-12);
        }
    }

    SECTION("zero estimate scores one") {
        DenseMatrix W(3, 3, 0.0);
        W(0, 1) = 2.0;
        W(1, 2) = -1.0;
        const DenseMatrix P(3, 2, 0.0);
        REQUIRE(estimation_error(W, P) == Catch::Approx(1.0));
    }

    SECTION("hand value") {
        // W has single pair (0,1)=2; P gives <p_0,p_1> = 1 -> error 1/2.
        DenseMatrix W(2, 2, 0.0);
        W(0, 1) = 2.0;
        DenseMatrix P(2, 1, 1.0);
        REQUIRE(estimation_error(W, P) == Catch::Approx(0.5));
    }

    SECTION("invariant to rotations of the factor") {
        DenseMatrix W = random_w(rng, 5, 0.8);
        DenseMatrix P(5, 2, 0.0);
        for (double& v : P.data()) v = rng.next_gaussian();
        const double base = estimation_error(W, P);
        const double c = std::cos(0.7), s = std::sin(0.7);
        DenseMatrix Q(5, 2, 0.0);
        for (std::size_t j = 0; j < 5; ++j) {
            Q(j, 0) = c * P(j, 0) - s * P(j, 1);
            Q(j, 1) = s * P(j, 0) + c * P(j, 1);
        }
        REQUIRE(estimation_error(W, Q) == Catch::Approx(base).epsilon(1e-10));
    }

    SECTION("rejects all-zero truth and shape mismatch") {
        const DenseMatrix W(3, 3, 0.0);
        const DenseMatrix P(3, 2, 0.0);
        REQUIRE_THROWS_AS(estimation_error(W, P), std::invalid_argument);
        const DenseMatrix W2(4, 4, 1.0);
        REQUIRE_THROWS_AS(estimation_error(W2, P), std::invalid_argument);
    }
}

TEST_CASE("support f1 and exact recovery") {
    DenseMatrix W(4, 4, 0.0);
    W(0, 1) = 1.0;
    W(2, 3) = 1.0;

    SECTION("perfect support") {
        const DenseMatrix P = exact_interaction_factor(W);
        REQUIRE(support_f1(W, P) == 1.0);
        REQUIRE(exact_support_recovery(W, P));
    }

    SECTION("dense factor predicts every pair") {
        DenseMatrix P(4, 1, 1.0);
        // tp = 2, fp = 4, fn = 0 -> f1 = 4 / 8.
        REQUIRE(support_f1(W, P) == Catch::Approx(0.5));
        REQUIRE_FALSE(exact_support_recovery(W, P));
    }

    SECTION("empty prediction with nonempty truth") {
        const DenseMatrix P(4, 2, 0.0);
        REQUIRE(support_f1(W, P) == 0.0);
        REQUIRE_FALSE(exact_support_recovery(W, P));
    }

    SECTION("both empty scores zero f1 but exact recovery") {
        const DenseMatrix W0(4, 4, 0.0);
        const DenseMatrix P(4, 2, 0.0);
        REQUIRE(support_f1(W0, P) == 0.0);
        REQUIRE(exact_support_recovery(W0, P));
    }

    SECTION("confusion-matrix oracle on random instances") {
        Rng rng(7);
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t d = 5;
            DenseMatrix Wt = random_w(rng, d, 0.4);
            DenseMatrix P(d, 2, 0.0);
            for (double& v : P.data())
                v = rng.next_uniform() < 0.5 ? 0.0 : rng.next_gaussian();
            std::size_t tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = i + 1; j < d; ++j) {
                    const double dot = P(i, 0) * P(j, 0) + P(i, 1) * P(j, 1);
                    const bool truth = Wt(i, j) != 0.0;
                    const bool pred = dot != 0.0;
                    tp += truth && pred;
                    fp += !truth && pred;
                    fn += truth && !pred;
                }
            const double expected =
                (2 * tp + fp + fn) == 0 ? 0.0
                                        : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
            REQUIRE(support_f1(Wt, P) == Catch::Approx(expected).margin(1e-15));
            REQUIRE(exact_support_recovery(Wt, P) == (fp == 0 && fn == 0));
        }
    }
}

TEST_CASE("count_used") {
    DenseMatrix P(4, 2, 0.0);
    SECTION("all zero") {
        const auto [ni, nf] = count_used(P);
        REQUIRE(ni == 0);
        REQUIRE(nf == 0);
    }
    SECTION("two active rows give one interaction") {
        P(0, 0) = 1.0;
        P(2, 0) = -2.0;
        const auto [ni, nf] = count_used(P);
        REQUIRE(ni == 1);
        REQUIRE(nf == 2);
    }
    SECTION("orthogonal rows are active features but not interactions") {
        P(0, 0) = 1.0;
        P(1, 1) = 1.0;
        const auto [ni, nf] = count_used(P);
        REQUIRE(ni == 0);
        REQUIRE(nf == 2);
    }
}

TEST_CASE("support_report aggregates the individual metrics") {
    DenseMatrix W(3, 3, 0.0);
    W(0, 1) = 1.0;
    const DenseMatrix P = exact_interaction_factor(W);
    const auto rep = support_report(W, P);
    REQUIRE(rep.estimation_error <= 1e-12);
    REQUIRE(rep.f1 == 1.0);
    REQUIRE(rep.exact_recovery);
    REQUIRE(rep.n_pred_interactions == 1);
    REQUIRE(rep.n_pred_features == 2);
}

TEST_CASE("rmse") {
    const std::vector<double> a{1.0, 2.0, 3.0};
    REQUIRE(rmse(a, a) == 0.0);
    const std::vector<double> b{2.0, 2.0, 1.0};
    REQUIRE(rmse(a, b) == Catch::Approx(std::sqrt(5.0 / 3.0)));
    const std::vector<double> c{1.0};
    REQUIRE_THROWS_AS(rmse(a, c), std::invalid_argument);
}

TEST_CASE("roc auc") {
    SECTION("perfect separation") {
        const std::vector<double> y{-1.0, -1.0, 1.0, 1.0};
        const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
        REQUIRE(roc_auc(y, s) == Catch::Approx(1.0));
        const std::vector<double> rev{0.9, 0.8, 0.2, 0.1};
        REQUIRE(roc_auc(y, rev) == Catch::Approx(0.0));
    }

    SECTION("all-tied scores give one half") {
        const std::vector<double> y{-1.0, 1.0, -1.0, 1.0};
        const std::vector<double> s{0.5, 0.5, 0.5, 0.5};
        REQUIRE(roc_auc(y, s) == Catch::Approx(0.5));
    }

    SECTION("partial tie hand value") {
        // Positive tied with one negative: pair contributes 1/2.
        const std::vector<double> y{-1.0, 1.0, -1.0};
        const std::vector<double> s{0.3, 0.5, 0.5};
        REQUIRE(roc_auc(y, s) == Catch::Approx(0.75));
    }

    SECTION("invariant under monotone transforms") {
        Rng rng(5);
        std::vector<double> y(40), s(40);
        for (std::size_t i = 0; i < 40; ++i) {
            y[i] = rng.next_uniform() < 0.5 ? -1.0 : 1.0;
            s[i] = rng.next_gaussian();
        }
        y[0] = 1.0;
        y[1] = -1.0;   // guarantee both classes
        std::vector<double> t(40);
        for (std::size_t i = 0; i < 40; ++i) t[i] = std::tanh(3.0 * s[i]) + 2.0;
        REQUIRE(roc_auc(y, t) == Catch::Approx(roc_auc(y, s)).margin(1e-12));
    }

    SECTION("matches pairwise counting oracle") {
        Rng rng(6);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> y(15), s(15);
            for (std::size_t i = 0; i < 15; ++i) {
                y[i] = rng.next_uniform() < 0.5 ? -1.0 : 1.0;
                // Coarse grid forces ties.
                s[i] = std::floor(rng.next_uniform() * 4.0);
            }
            y[0] = 1.0;
            y[1] = -1.0;
            double wins = 0.0;
            std::size_t pairs = 0;
            for (std::size_t i = 0; i < 15; ++i) {
                if (y[i] <= 0.0) continue;
                for (std::size_t j = 0; j < 15; ++j) {
                    if (y[j] > 0.0) continue;
                    ++pairs;
                    if (s[i] > s[j]) wins += 1.0;
                    else if (s[i] == s[j]) wins += 0.5;
                }
            }
            REQUIRE(roc_auc(y, s)
                    == Catch::Approx(wins / static_cast<double>(pairs)).margin(1e-12));
        }
    }

    SECTION("rejects single-class input") {
        const std::vector<double> y{1.0, 1.0};
        const std::vector<double> s{0.1, 0.9};
        REQUIRE_THROWS_AS(roc_auc(y, s), std::invalid_argument);
    }
}
