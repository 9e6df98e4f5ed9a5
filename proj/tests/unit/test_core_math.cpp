#include "doctest.h"

#include "lwp/autodiff.hpp"
#include "lwp/errors.hpp"
#include "lwp/matrix.hpp"
#include "lwp/rng.hpp"
#include "support/test_support.hpp"

#include <cmath>
#include <numbers>

using namespace lwp;
using lwp::testing::gradient_check;
using lwp::testing::project;
using lwp::testing::random_matrix;

TEST_CASE("matrix construction enforces data length") {
    CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(Matrix::from_rows({{1, 2}, {3}}), ShapeError);
    const Matrix m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 3);
    CHECK(m(1, 2) == 6.0);
}

TEST_CASE("matmul") {
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    CHECK(matmul(a, Matrix::identity(2)) == a);

    const Matrix zero_row = matmul(Matrix::from_rows({{1, 0}, {0, 0}}), Matrix::from_rows({{0}, {5}}));
    CHECK(zero_row == Matrix::from_rows({{0}, {0}}));

    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);

    SUBCASE("random 3x4 by 4x2 equals triple loop") {
        Rng rng(11);
        const Matrix x = random_matrix(rng, 3, 4);
        const Matrix y = random_matrix(rng, 4, 2);
        const Matrix got = matmul(x, y);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 2; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < 4; ++k) s += x(i, k) * y(k, j);
                CHECK(got(i, j) == doctest::Approx(s).epsilon(1e-14));
            }
    }
}

TEST_CASE("ad::matmul backward rule") {
    Rng rng(3);
    for (int rep = 0; rep < 5; ++rep) {
        const Matrix r = random_matrix(rng, 3, 2);
        const double err = gradient_check(
            [&](const auto& p) { return project(ad::matmul(p[0], p[1]), r); },
            {random_matrix(rng, 3, 4), random_matrix(rng, 4, 2)});
        CHECK(err < 1e-4);
    }
    CHECK_THROWS_AS(ad::matmul(ad::constant(Matrix(2, 3)), ad::constant(Matrix(2, 3))), ShapeError);
}

TEST_CASE("pairwise_sq_dist") {
    const ad::Node d = ad::pairwise_sq_dist(ad::constant(Matrix::from_rows({{0, 0}, {3, 4}})));
    CHECK(d.value() == Matrix::from_rows({{0, 25}, {25, 0}}));

    const ad::Node same = ad::pairwise_sq_dist(ad::constant(Matrix::from_rows({{1, 2}, {1, 2}, {0, 1}})));
    CHECK(same.value()(0, 1) == 0.0);

    CHECK_THROWS_AS(ad::pairwise_sq_dist(ad::constant(Matrix(0, 3))), ShapeError);

    SUBCASE("matches double loop, symmetric, zero diagonal") {
        Rng rng(5);
        for (int rep = 0; rep < 20; ++rep) {
            const Matrix z = random_matrix(rng, 1 + rng.below(9), 1 + rng.below(6));
            const Matrix got = ad::pairwise_sq_dist(ad::constant(z)).value();
            const Matrix want = lwp::testing::brute_sq_dist(z);
            CHECK(lwp::testing::max_abs_diff(got, want) < 1e-12);
            for (std::size_t i = 0; i < z.rows(); ++i) {
                CHECK(got(i, i) == 0.0);
                for (std::size_t j = 0; j < z.rows(); ++j) CHECK(got(i, j) == got(j, i));
            }
        }
    }

    SUBCASE("gradient") {
        Rng rng(6);
        for (int rep = 0; rep < 5; ++rep) {
            const Matrix r = random_matrix(rng, 5, 5);
            CHECK(gradient_check([&](const auto& p) { return project(ad::pairwise_sq_dist(p[0]), r); },
                                 {random_matrix(rng, 5, 3)}) < 1e-4);
        }
    }
}

TEST_CASE("frobenius_sq") {
    CHECK(ad::frobenius_sq(ad::constant(Matrix(2, 2))).value().item() == 0.0);
    CHECK(ad::frobenius_sq(ad::constant(Matrix::from_rows({{1, -1}}))).value().item() == 2.0);
    Rng rng(8);
    const Matrix a = random_matrix(rng, 4, 4);
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    CHECK(ad::frobenius_sq(ad::constant(a)).value().item() == doctest::Approx(s).epsilon(1e-14));
}

TEST_CASE("softmax_cross_entropy") {
    const auto ce = [](Matrix logits, Matrix t) {
        return ad::softmax_cross_entropy(ad::constant(std::move(logits)), t).value().item();
    };
    CHECK(ce(Matrix::from_rows({{10, -10}}), Matrix::from_rows({{1, 0}})) < 1e-4);
    CHECK(ce(Matrix::from_rows({{0, 0}}), Matrix::from_rows({{1, 0}})) == doctest::Approx(std::numbers::ln2));

    CHECK_THROWS_AS(ce(Matrix::from_rows({{0, 0}}), Matrix::from_rows({{0.5, 0.4}})), ValueError);
    CHECK_THROWS_AS(ce(Matrix::from_rows({{0}}), Matrix::from_rows({{1}})), ShapeError);
    CHECK_THROWS_AS(ce(Matrix::from_rows({{0, 0}}), Matrix::from_rows({{1, 0, 0}})), ShapeError);

    SUBCASE("gradient vs central differences (soft targets)") {
        Rng rng(9);
        for (int rep = 0; rep < 10; ++rep) {
            Matrix t(4, 3);
            for (std::size_t i = 0; i < 4; ++i) {
                double s = 0.0;
                for (double& v : t.row(i)) s += (v = rng.uniform());
                for (double& v : t.row(i)) v /= s;
            }
            CHECK(gradient_check([&](const auto& p) { return ad::softmax_cross_entropy(p[0], t); },
                                 {random_matrix(rng, 4, 3, 2.0)}) < 1e-5);
        }
    }
}

TEST_CASE("elementwise and broadcast ops pass gradient checks") {
    Rng rng(10);
    for (int rep = 0; rep < 5; ++rep) {
        const Matrix r = random_matrix(rng, 4, 3);
        const Matrix a = random_matrix(rng, 4, 3);
        const Matrix b = random_matrix(rng, 4, 3);
        const Matrix row = random_matrix(rng, 1, 3);
        CHECK(gradient_check([&](const auto& p) { return project(ad::add(p[0], p[1]), r); }, {a, b}) < 1e-4);
        CHECK(gradient_check([&](const auto& p) { return project(ad::sub(p[0], p[1]), r); }, {a, b}) < 1e-4);
        CHECK(gradient_check([&](const auto& p) { return project(ad::hadamard(p[0], p[1]), r); }, {a, b}) < 1e-4);
        CHECK(gradient_check([&](const auto& p) { return project(ad::add_row(p[0], p[1]), r); }, {a, row}) < 1e-4);
        CHECK(gradient_check([&](const auto& p) { return project(ad::tanh(p[0]), r); }, {a}) < 1e-4);
        CHECK(gradient_check([&](const auto& p) { return project(ad::exp(p[0]), r); }, {a}) < 1e-4);
        CHECK(gradient_check([&](const auto& p) { return project(ad::transpose(p[0]), transpose(r)); }, {a}) < 1e-4);
        CHECK(gradient_check([&](const auto& p) { return project(ad::row_normalize(p[0], 1e-12), r); }, {a}) < 1e-4);
        CHECK(gradient_check([&](const auto& p) { return project(ad::sqrt(ad::hadamard(p[0], p[0]), 0.1), r); },
                             {a}) < 1e-4);
        const Matrix s = Matrix::scalar(1.5 + rng.uniform());
        CHECK(gradient_check([&](const auto& p) { return project(ad::divide(p[0], p[1]), r); }, {a, s}) < 1e-4);
        // relu away from the kink
        Matrix shifted = a;
        for (double& v : shifted.data()) v += v > 0 ? 0.1 : -0.1;
        CHECK(gradient_check([&](const auto& p) { return project(ad::relu(p[0]), r); }, {shifted}) < 1e-4);
    }
}

TEST_CASE("backward") {
    SUBCASE("d(x^2) = 2x") {
        const ad::Node w = ad::parameter(Matrix::from_rows({{1, 2}}));
        ad::backward(ad::frobenius_sq(w));
        CHECK(w.grad() == Matrix::from_rows({{2, 4}}));
    }
    SUBCASE("constant loss leaves gradients zero") {
        const ad::Node w = ad::parameter(Matrix::from_rows({{1, 2}}));
        const ad::Node loss = ad::frobenius_sq(ad::constant(Matrix::from_rows({{3, 4}})));
        ad::backward(loss);
        CHECK(w.grad() == Matrix(1, 2));
    }
    SUBCASE("non-scalar root") {
        CHECK_THROWS_AS(ad::backward(ad::parameter(Matrix(2, 2))), ShapeError);
    }
    SUBCASE("second call without reset is an error, reset re-arms") {
        const ad::Node w = ad::parameter(Matrix::from_rows({{1, 2}}));
        const ad::Node loss = ad::frobenius_sq(w);
        ad::backward(loss);
        CHECK_THROWS_AS(ad::backward(loss), StateError);
        ad::reset_gradients(loss);
        CHECK(w.grad() == Matrix(1, 2));
        ad::backward(loss);
        CHECK(w.grad() == Matrix::from_rows({{2, 4}}));
    }
    SUBCASE("random 2-layer MLP: every parameter matches finite differences") {
        Rng rng(21);
        for (int rep = 0; rep < 5; ++rep) {
            const Matrix x = random_matrix(rng, 6, 3);
            Matrix t(6, 2);
            for (std::size_t i = 0; i < 6; ++i) t(i, rng.below(2)) = 1.0;
            const double err = gradient_check(
                [&](const auto& p) {
                    const ad::Node h = ad::tanh(ad::add_row(ad::matmul(ad::constant(x), p[0]), p[1]));
                    return ad::softmax_cross_entropy(ad::add_row(ad::matmul(h, p[2]), p[3]), t);
                },
                {random_matrix(rng, 3, 5), random_matrix(rng, 1, 5), random_matrix(rng, 5, 2), random_matrix(rng, 1, 2)});
            CHECK(err < 1e-4);
        }
    }
}

TEST_CASE("non-finite values surface as errors") {
    CHECK_THROWS_AS(ad::constant(Matrix::from_rows({{std::nan("")}})), NumericError);
    CHECK_THROWS_AS(ad::exp(ad::constant(Matrix::from_rows({{1000.0}}))), NumericError);
}

TEST_CASE("rng determinism and documented distributions") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    // std::mt19937_64 is specified by the standard: the 10000th output of a
    // default-seeded engine is 9981545732273789042.
    Rng d(5489);
    std::uint64_t last = 0;
    for (int i = 0; i < 10000; ++i) last = d.next_u64();
    CHECK(last == 9981545732273789042ULL);

    Rng r(7);
    double sum = 0.0, sum2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const double g = r.normal();
        sum += g;
        sum2 += g * g;
    }
    CHECK(std::abs(sum / n) < 0.05);
    CHECK(std::abs(sum2 / n - 1.0) < 0.05);

    std::vector<std::size_t> items{0, 1, 2, 3, 4, 5, 6, 7};
    r.shuffle(items);
    std::vector<std::size_t> sorted = items;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});

    CHECK(Rng(1).derive(3).next_u64() == Rng(1).derive(3).next_u64());
    CHECK(Rng(1).derive(3).next_u64() != Rng(1).derive(4).next_u64());
}
