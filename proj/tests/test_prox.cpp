#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "sfm/prox.hpp"
#include "sfm/rng.hpp"
#include "oracles.hpp"

using namespace sfm;

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t d, double scale = 2.0) {
    std::vector<double> p(d);
    for (auto& v : p) v = scale * rng.next_gaussian();
    return p;
}

double l1(const std::vector<double>& v) {
    double out = 0.0;
    for (double x : v) out += std::abs(x);
    return out;
}

void check_kkt(const std::vector<double>& p, const std::vector<double>& q,
               double lam, int m, double tol) {
    const double thresh = lam * m * std::pow(l1(q), m - 1);
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (q[j] != 0.0) {
            const double sign = q[j] > 0.0 ? 1.0 : -1.0;
            REQUIRE(std::abs(q[j] - p[j] + sign * thresh) <= tol);
        } else {
            REQUIRE(std::abs(p[j]) <= thresh + tol);
        }
    }
}

}  // namespace

TEST_CASE("prox_l1 soft thresholds elementwise") {
    const std::vector<double> p{2.0, -1.0, 0.5};
    REQUIRE(prox_l1(p, 1.0) == std::vector<double>{1.0, 0.0, 0.0});
    REQUIRE(prox_l1(p, 0.0) == p);
    REQUIRE(prox_l1(std::vector<double>{-3.0}, 0.5) == std::vector<double>{-2.5});
    REQUIRE_THROWS_AS(prox_l1(p, -1.0), std::invalid_argument);
}

TEST_CASE("prox_group_l2 scales the whole vector") {
    const std::vector<double> p{3.0, 4.0};
    const auto q = prox_group_l2(p, 2.5);
    REQUIRE(q[0] == Catch::Approx(1.5).margin(1e-15));
    REQUIRE(q[1] == Catch::Approx(2.0).margin(1e-15));
    REQUIRE(prox_group_l2(p, 6.0) == std::vector<double>{0.0, 0.0});
    REQUIRE(prox_group_l2(p, 0.0) == p);
    REQUIRE(prox_group_l2(std::vector<double>{0.0, 0.0}, 1.0) == std::vector<double>{0.0, 0.0});
    REQUIRE_THROWS_AS(prox_group_l2(p, -0.1), std::invalid_argument);
}

TEST_CASE("prox_sq_l1_sort hand-checked instances") {
    {
        const auto res = prox_sq_l1_sort(std::vector<double>{1.0, 0.0}, 0.25);
        REQUIRE(res.values[0] == Catch::Approx(2.0 / 3.0).epsilon(1e-12));
        REQUIRE(res.values[1] == 0.0);
        REQUIRE(res.theta == 1);
        REQUIRE(res.s_theta == Catch::Approx(2.0 / 3.0).epsilon(1e-12));
    }
    {
        const auto res = prox_sq_l1_sort(std::vector<double>{3.0, 1.0}, 0.5);
        REQUIRE(res.values[0] == Catch::Approx(1.5).epsilon(1e-12));
        REQUIRE(res.values[1] == 0.0);
        REQUIRE(res.theta == 1);
    }
    {
        const std::vector<double> p{0.3, -1.2, 0.0, 2.5};
        const auto res = prox_sq_l1_sort(p, 0.0);
        REQUIRE(res.values == p);
        REQUIRE(res.theta == 3);
    }
    REQUIRE_THROWS_AS(prox_sq_l1_sort(std::vector<double>{1.0}, -1.0), std::invalid_argument);
}

TEST_CASE("prox_sq_l1 beats an independent minimizer and satisfies KKT") {
    Rng rng(101);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t d = 1 + rng.next_below(40);
        const double lam = std::pow(2.0, -7.0 + 14.0 * rng.next_uniform());
        const auto p = random_vector(rng, d);
        const auto res = prox_sq_l1_sort(p, lam);
        check_kkt(p, res.values, lam, 2, 1e-9);
        const auto ref = oracles::minimize_pow_l1(p, lam, 2);
        const double obj = oracles::pow_l1_objective(res.values, p, lam, 2);
        const double ref_obj = oracles::pow_l1_objective(ref, p, lam, 2);
        REQUIRE(obj <= ref_obj + 1e-8);
    }
}

TEST_CASE("sort and randomized prox agree") {
    Rng rng(55);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t d = 1 + rng.next_below(64);
        const double lam = std::pow(2.0, -7.0 + 14.0 * rng.next_uniform());
        const auto p = random_vector(rng, d);
        const auto a = prox_sq_l1_sort(p, lam);
        const auto b = prox_sq_l1_rand(p, lam, rng);
        REQUIRE(a.theta == b.theta);
        for (std::size_t i = 0; i < d; ++i)
            REQUIRE(std::abs(a.values[i] - b.values[i]) <= 1e-12);
    }
}

TEST_CASE("randomized prox handles ties and zero vectors") {
    Rng rng(9);
    const std::vector<double> ties{1.0, 1.0, 1.0};
    const auto a = prox_sq_l1_sort(ties, 0.1);
    const auto b = prox_sq_l1_rand(ties, 0.1, rng);
    for (std::size_t i = 0; i < 3; ++i)
        REQUIRE(std::abs(a.values[i] - b.values[i]) <= 1e-12);
    check_kkt(ties, b.values, 0.1, 2, 1e-9);

    const std::vector<double> zero{0.0, 0.0};
    const auto z = prox_sq_l1_rand(zero, 1.0, rng);
    REQUIRE(z.values == zero);
    REQUIRE(z.theta == 0);
}

TEST_CASE("prox shape properties") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t d = 2 + rng.next_below(30);
        const double lam = std::pow(2.0, -5.0 + 10.0 * rng.next_uniform());
        auto p = random_vector(rng, d);
        p[rng.next_below(d)] = 0.0;
        const int m = 2 + static_cast<int>(rng.next_below(3));
        const auto res = prox_pow_l1(p, lam, m);
        for (std::size_t i = 0; i < d; ++i) {
            REQUIRE(res.values[i] * p[i] >= 0.0);
            if (p[i] == 0.0) REQUIRE(res.values[i] == 0.0);
            for (std::size_t j = 0; j < d; ++j)
                if (std::abs(p[i]) >= std::abs(p[j]))
                    REQUIRE(std::abs(res.values[i]) >= std::abs(res.values[j]) - 1e-15);
        }
    }
}

TEST_CASE("monotone shrinkage in lambda") {
    Rng rng(13);
    const auto p = random_vector(rng, 25);
    double prev = l1(prox_sq_l1_sort(p, 1.0 / 128).values);
    for (double lam = 1.0 / 64; lam <= 128.0; lam *= 2.0) {
        const double cur = l1(prox_sq_l1_sort(p, lam).values);
        REQUIRE(cur <= prev + 1e-12);
        prev = cur;
    }
}

TEST_CASE("objective at prox output is a local and global improvement") {
    Rng rng(21);
    const auto p = random_vector(rng, 20);
    const double lam = 0.3;
    const auto res = prox_sq_l1_sort(p, lam);
    const double obj = oracles::pow_l1_objective(res.values, p, lam, 2);
    REQUIRE(obj <= oracles::pow_l1_objective(p, p, lam, 2) + 1e-12);
    for (int trial = 0; trial < 100; ++trial) {
        auto perturbed = res.values;
        for (auto& v : perturbed) v += 0.05 * rng.next_gaussian();
        REQUIRE(obj <= oracles::pow_l1_objective(perturbed, p, lam, 2) + 1e-12);
    }
}

TEST_CASE("prox_pow_l1 m=2 matches the dedicated squared-l1 prox") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t d = 1 + rng.next_below(32);
        const double lam = std::pow(2.0, -6.0 + 12.0 * rng.next_uniform());
        const auto p = random_vector(rng, d);
        const auto a = prox_sq_l1_sort(p, lam);
        const auto b = prox_pow_l1(p, lam, 2);
        REQUIRE(a.values == b.values);
        REQUIRE(a.theta == b.theta);
    }
}

TEST_CASE("prox_pow_l1 m=3 closed form") {
    const std::vector<double> p{2.0, 0.0, 0.0};
    const double lam = 0.5;
    const auto res = prox_pow_l1(p, lam, 3);
    const double s = (-1.0 + std::sqrt(13.0)) / 3.0;   // root of 1.5 s^2 + s - 2
    REQUIRE(res.s_theta == Catch::Approx(s).epsilon(1e-12));
    REQUIRE(res.values[0] == Catch::Approx(2.0 - 1.5 * s * s).epsilon(1e-10));
    const auto ref = oracles::minimize_pow_l1(p, lam, 3);
    REQUIRE(res.values[0] == Catch::Approx(ref[0]).margin(1e-6));
    REQUIRE(res.values[1] == 0.0);
}

TEST_CASE("prox_pow_l1 oracle and KKT across orders") {
    Rng rng(47);
    for (const int m : {3, 4, 5}) {
        for (int trial = 0; trial < 40; ++trial) {
            const std::size_t d = 1 + rng.next_below(16);
            const double lam = std::pow(2.0, -6.0 + 10.0 * rng.next_uniform());
            const auto p = random_vector(rng, d, 1.0);
            const auto res = prox_pow_l1(p, lam, m);
            check_kkt(p, res.values, lam, m, 1e-8);
            const auto ref = oracles::minimize_pow_l1(p, lam, m);
            REQUIRE(oracles::pow_l1_objective(res.values, p, lam, m)
                    <= oracles::pow_l1_objective(ref, p, lam, m) + 1e-8);
        }
    }
    REQUIRE_THROWS_AS(prox_pow_l1(std::vector<double>{1.0}, 0.1, 1), std::invalid_argument);
    const std::vector<double> p{0.4, -0.7};
    REQUIRE(prox_pow_l1(p, 0.0, 4).values == p);
}

TEST_CASE("prox_sq_l21 row scaling structure") {
    Rng rng(61);
    DenseMatrix P(5, 3);
    for (double& v : P.data()) v = rng.next_gaussian();

    SECTION("lam = 0 is the identity") {
        REQUIRE(prox_sq_l21(P, 0.0) == P);
    }

    SECTION("single nonzero row reduces to the scalar prox of its norm") {
        DenseMatrix single(4, 2, 0.0);
        single(2, 0) = 3.0;
        single(2, 1) = 4.0;
        const auto q = prox_sq_l21(single, 0.25);
        const auto scalar = prox_sq_l1_sort(std::vector<double>{5.0}, 0.25);
        const double norm = std::hypot(q(2, 0), q(2, 1));
        REQUIRE(norm == Catch::Approx(scalar.values[0]).epsilon(1e-12));
        REQUIRE(q(2, 0) / q(2, 1) == Catch::Approx(0.75).epsilon(1e-12));
    }

    SECTION("matches a numeric minimizer through the row-norm reduction") {
        const double lam = 0.2;
        const auto Q = prox_sq_l21(P, lam);
        // Rows must be nonnegative multiples of the input rows.
        for (std::size_t j = 0; j < P.rows(); ++j) {
            double in_norm = 0.0, out_norm = 0.0, dot = 0.0;
            for (std::size_t s = 0; s < P.cols(); ++s) {
                in_norm += P(j, s) * P(j, s);
                out_norm += Q(j, s) * Q(j, s);
                dot += P(j, s) * Q(j, s);
            }
            REQUIRE(dot >= 0.0);
            REQUIRE(dot * dot == Catch::Approx(in_norm * out_norm).margin(1e-18));
        }
        // Objective no worse than the oracle applied to the row norms.
        std::vector<double> norms(P.rows());
        for (std::size_t j = 0; j < P.rows(); ++j) {
            double sq = 0.0;
            for (std::size_t s = 0; s < P.cols(); ++s) sq += P(j, s) * P(j, s);
            norms[j] = std::sqrt(sq);
        }
        const auto c_ref = oracles::minimize_pow_l1(norms, lam, 2);
        DenseMatrix Q_ref(P.rows(), P.cols(), 0.0);
        for (std::size_t j = 0; j < P.rows(); ++j) {
            if (norms[j] == 0.0) continue;
            for (std::size_t s = 0; s < P.cols(); ++s)
                Q_ref(j, s) = P(j, s) * c_ref[j] / norms[j];
        }
        REQUIRE(oracles::sq_l21_objective(Q, P, lam)
                <= oracles::sq_l21_objective(Q_ref, P, lam) + 1e-8);
    }
}

TEST_CASE("prox_pow_l21 generalizes the squared case") {
    Rng rng(71);
    DenseMatrix P(4, 2);
    for (double& v : P.data()) v = rng.next_gaussian();
    REQUIRE(prox_pow_l21(P, 0.15, 2) == prox_sq_l21(P, 0.15));

    DenseMatrix single(1, 3);
    single(0, 0) = 1.0;
    single(0, 1) = 2.0;
    single(0, 2) = 2.0;
    const auto q = prox_pow_l21(single, 0.1, 3);
    const auto scalar = prox_pow_l1(std::vector<double>{3.0}, 0.1, 3);
    REQUIRE(std::hypot(std::hypot(q(0, 0), q(0, 1)), q(0, 2))
            == Catch::Approx(scalar.values[0]).epsilon(1e-10));

    const double lam = 0.1;
    const auto Q = prox_pow_l21(P, lam, 3);
    std::vector<double> norms(P.rows());
    for (std::size_t j = 0; j < P.rows(); ++j) {
        double sq = 0.0;
        for (std::size_t s = 0; s < P.cols(); ++s) sq += P(j, s) * P(j, s);
        norms[j] = std::sqrt(sq);
    }
    const auto c_ref = oracles::minimize_pow_l1(norms, lam, 3);
    double q_norm_obj = 0.0, ref_obj = 0.0;
    std::vector<double> q_norms(P.rows());
    for (std::size_t j = 0; j < P.rows(); ++j) {
        double sq = 0.0;
        for (std::size_t s = 0; s < P.cols(); ++s) sq += Q(j, s) * Q(j, s);
        q_norms[j] = std::sqrt(sq);
    }
    q_norm_obj = oracles::pow_l1_objective(q_norms, norms, lam, 3);
    ref_obj = oracles::pow_l1_objective(c_ref, norms, lam, 3);
    REQUIRE(q_norm_obj <= ref_obj + 1e-8);
}
