#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sfm/kernels.hpp"
#include "sfm/rng.hpp"
#include "sfm/sparse.hpp"
#include "oracles.hpp"

using namespace sfm;

namespace {

SparseDesignMatrix dense_row(const std::vector<double>& x) {
    std::vector<Triplet> entries;
    for (std::size_t j = 0; j < x.size(); ++j)
        if (x[j] != 0.0) entries.push_back({0, j, x[j]});
    return sparse_from_triplets(1, x.size(), entries);
}

}  // namespace

TEST_CASE("fm_predict hand instances") {
    FmModel m = fm_model_zero(2, 1);
    m.P(0, 0) = 1.0;
    m.P(1, 0) = 1.0;
    const auto X = dense_row({1.0, 1.0});
    REQUIRE(fm_predict(m, X.row(0)) == Catch::Approx(1.0).margin(1e-15));

    FmModel zero = fm_model_zero(2, 3);
    zero.bias = 0.7;
    zero.w = {0.5, -1.0};
    REQUIRE(fm_predict(zero, X.row(0)) == Catch::Approx(0.2).margin(1e-15));

    FmModel tiny = fm_model_zero(1, 1);
    const auto bad = sparse_from_triplets(1, 5, {{0, 4, 1.0}});
    REQUIRE_THROWS_AS(fm_predict(tiny, bad.row(0)), std::invalid_argument);
}

TEST_CASE("fm_predict equals pairwise brute force") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t d = 2 + rng.next_below(11);
        const std::size_t k = 1 + rng.next_below(3);
        FmModel m = fm_model_zero(d, k);
        for (double& v : m.P.data()) v = rng.next_gaussian();
        for (auto& v : m.w) v = rng.next_gaussian();
        m.bias = rng.next_gaussian();
        std::vector<double> x(d);
        for (auto& v : x) v = rng.next_uniform() < 0.3 ? 0.0 : rng.next_gaussian();
        const auto X = dense_row(x);
        double expected = m.bias + oracles::fm_pairwise(m.P, x);
        for (std::size_t j = 0; j < d; ++j) expected += m.w[j] * x[j];
        REQUIRE(fm_predict(m, X.row(0)) == Catch::Approx(expected).margin(1e-10));
    }
}

TEST_CASE("anova_kernel basics and brute force") {
    const std::vector<double> ones{1.0, 1.0, 1.0};
    REQUIRE(anova_kernel(ones, ones, 2) == Catch::Approx(3.0).margin(1e-15));
    REQUIRE(anova_kernel(ones, ones, 4) == 0.0);   // more factors than dims
    REQUIRE_THROWS_AS(anova_kernel(ones, ones, 0), std::invalid_argument);

    Rng rng(17);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t d = 1 + rng.next_below(8);
        const int m = 1 + static_cast<int>(rng.next_below(std::min<std::size_t>(4, d)));
        std::vector<double> p(d), x(d);
        for (auto& v : p) v = rng.next_gaussian();
        for (auto& v : x) v = rng.next_gaussian();
        REQUIRE(anova_kernel(p, x, m)
                == Catch::Approx(oracles::anova_brute(p, x, m)).margin(1e-12));
    }

    SECTION("m = 1 is the inner product") {
        std::vector<double> p{1.0, 2.0, -3.0}, x{0.5, 0.0, 2.0};
        REQUIRE(anova_kernel(p, x, 1) == Catch::Approx(-5.5).margin(1e-15));
    }

    SECTION("affine in each coordinate") {
        Rng r2(23);
        std::vector<double> p(6), x(6);
        for (auto& v : p) v = r2.next_gaussian();
        for (auto& v : x) v = r2.next_gaussian();
        for (std::size_t j = 0; j < 6; ++j) {
            auto p0 = p, p1 = p, ph = p;
            p0[j] = -1.3;
            p1[j] = 2.1;
            ph[j] = 0.5 * (p0[j] + p1[j]);
            const double k0 = anova_kernel(p0, x, 3);
            const double k1 = anova_kernel(p1, x, 3);
            const double kh = anova_kernel(ph, x, 3);
            REQUIRE(kh == Catch::Approx(0.5 * (k0 + k1)).margin(1e-10));
        }
    }
}

TEST_CASE("anova_grad matches finite differences") {
    Rng rng(29);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t d = 3 + rng.next_below(18);
        const int m = 1 + static_cast<int>(rng.next_below(std::min<std::size_t>(5, d)));
        std::vector<double> p(d), x(d);
        for (auto& v : p) v = rng.next_gaussian();
        for (auto& v : x) v = rng.next_uniform() < 0.2 ? 0.0 : rng.next_gaussian();
        const auto grad = anova_grad(p, x, m);
        const auto fd = oracles::central_difference(
            [&](std::span<const double> q) { return anova_kernel(q, x, m); }, p);
        for (std::size_t j = 0; j < d; ++j) {
            const double scale = std::max(1.0, std::abs(fd[j]));
            REQUIRE(std::abs(grad[j] - fd[j]) / scale <= 1e-6);
            if (x[j] == 0.0) REQUIRE(grad[j] == 0.0);
        }
    }
    const std::vector<double> p{1.0, 2.0}, x{3.0, 4.0};
    REQUIRE(anova_grad(p, x, 1) == x);
}

TEST_CASE("all_subsets_kernel") {
    const std::vector<double> ones{1.0, 1.0, 1.0};
    REQUIRE(all_subsets_kernel(ones, ones) == Catch::Approx(8.0).margin(1e-15));

    std::vector<double> p{2.0, -1.0, 0.5}, x{-0.5, 1.0, 3.0};
    REQUIRE(all_subsets_kernel(p, x) == 0.0);   // first factor vanishes

    Rng rng(37);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t d = 1 + rng.next_below(10);
        std::vector<double> pp(d), xx(d);
        for (auto& v : pp) v = rng.next_gaussian();
        for (auto& v : xx) v = rng.next_gaussian();
        REQUIRE(all_subsets_kernel(pp, xx)
                == Catch::Approx(oracles::all_subsets_brute(pp, xx)).margin(1e-9));
    }
}

TEST_CASE("all-subsets kernel equals the ANOVA kernel sum") {
    Rng rng(43);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 1 + rng.next_below(10);
        std::vector<double> p(d), x(d);
        for (auto& v : p) v = rng.next_gaussian();
        for (auto& v : x) v = rng.next_gaussian();
        double total = 1.0;   // empty subset
        for (int m = 1; m <= static_cast<int>(d); ++m) total += anova_kernel(p, x, m);
        REQUIRE(all_subsets_kernel(p, x) == Catch::Approx(total).margin(1e-9));
    }
}

TEST_CASE("hofm_predict") {
    Rng rng(53);

    SECTION("order 2 reduces to fm_predict") {
        const std::size_t d = 6, k = 2;
        HofmModel h;
        h.bias = 0.3;
        h.w.assign(d, 0.0);
        for (auto& v : h.w) v = rng.next_gaussian();
        h.P_by_order.push_back(gaussian_fill(rng, d, k, 0.0, 1.0));
        FmModel f = fm_model_zero(d, k);
        f.bias = h.bias;
        f.w = h.w;
        f.P = h.P_by_order[0];
        std::vector<double> x(d);
        for (auto& v : x) v = rng.next_gaussian();
        const auto X = dense_row(x);
        REQUIRE(hofm_predict(h, X.row(0))
                == Catch::Approx(fm_predict(f, X.row(0))).margin(1e-10));
    }

    SECTION("zero factors give the linear model") {
        HofmModel h;
        h.bias = 1.0;
        h.w = {1.0, 2.0, 3.0};
        h.P_by_order.emplace_back(3, 2, 0.0);
        h.P_by_order.emplace_back(3, 2, 0.0);
        const auto X = dense_row({1.0, 1.0, 1.0});
        REQUIRE(hofm_predict(h, X.row(0)) == Catch::Approx(7.0).margin(1e-15));
    }

    SECTION("matches per-order brute force") {
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t d = 5, k = 2;
            const int M = 3;
            HofmModel h;
            h.bias = rng.next_gaussian();
            h.w.assign(d, 0.0);
            for (auto& v : h.w) v = rng.next_gaussian();
            for (int m = 2; m <= M; ++m)
                h.P_by_order.push_back(gaussian_fill(rng, d, k, 0.0, 1.0));
            std::vector<double> x(d);
            for (auto& v : x) v = rng.next_uniform() < 0.2 ? 0.0 : rng.next_gaussian();
            double expected = h.bias;
            for (std::size_t j = 0; j < d; ++j) expected += h.w[j] * x[j];
            for (int m = 2; m <= M; ++m) {
                const auto& P = h.P_by_order[m - 2];
                for (std::size_t s = 0; s < k; ++s) {
                    std::vector<double> col(d);
                    for (std::size_t j = 0; j < d; ++j) col[j] = P(j, s);
                    expected += oracles::anova_brute(col, x, m);
                }
            }
            const auto X = dense_row(x);
            REQUIRE(hofm_predict(h, X.row(0)) == Catch::Approx(expected).margin(1e-10));
        }
    }
}

TEST_CASE("all_subsets_predict") {
    Rng rng(59);

    SECTION("k = 1 is the kernel itself") {
        const std::size_t d = 4;
        AllSubsetsModel m;
        m.P = gaussian_fill(rng, d, 1, 0.0, 1.0);
        std::vector<double> x(d), col(d);
        for (auto& v : x) v = rng.next_gaussian();
        for (std::size_t j = 0; j < d; ++j) col[j] = m.P(j, 0);
        const auto X = dense_row(x);
        REQUIRE(all_subsets_predict(m, X.row(0))
                == Catch::Approx(all_subsets_kernel(col, x)).margin(1e-12));
    }

    SECTION("zero factors predict k") {
        AllSubsetsModel m;
        m.P = DenseMatrix(5, 4, 0.0);
        const auto X = dense_row({1.0, 0.0, 2.0, 0.0, -1.0});
        REQUIRE(all_subsets_predict(m, X.row(0)) == Catch::Approx(4.0).margin(1e-15));
    }

    SECTION("matches subset enumeration") {
        for (int trial = 0; trial < 15; ++trial) {
            const std::size_t d = 8, k = 3;
            AllSubsetsModel m;
            m.P = gaussian_fill(rng, d, k, 0.0, 1.0);
            std::vector<double> x(d);
            for (auto& v : x) v = rng.next_uniform() < 0.25 ? 0.0 : rng.next_gaussian();
            double expected = 0.0;
            for (std::size_t s = 0; s < k; ++s) {
                std::vector<double> col(d);
                for (std::size_t j = 0; j < d; ++j) col[j] = m.P(j, s);
                expected += oracles::all_subsets_brute(col, x);
            }
            const auto X = dense_row(x);
            REQUIRE(all_subsets_predict(m, X.row(0))
                    == Catch::Approx(expected).margin(1e-9));
        }
    }
}
