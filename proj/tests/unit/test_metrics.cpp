#include "doctest.h"

#include "lwp/errors.hpp"
#include "lwp/metrics.hpp"
#include "support/test_support.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

using namespace lwp;
using lwp::testing::random_labels;
using lwp::testing::random_matrix;

namespace {

double loop_accuracy(const Matrix& logits, const Matrix& labels) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols(); ++c)
            if (logits(i, c) > logits(i, best)) best = c;
        if (static_cast<double>(best) == labels(i, 0)) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(logits.rows());
}

// Per-sample binning: each sample is assigned to the bin whose half-open
// interval [b/B, (b+1)/B) contains its confidence (the top bin is closed).
double loop_ece(const Matrix& logits, const Matrix& labels, std::size_t bins) {
    std::vector<double> conf(bins, 0.0), acc(bins, 0.0), cnt(bins, 0.0);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double mx = logits(i, 0);
        std::size_t arg = 0;
        for (std::size_t c = 1; c < logits.cols(); ++c)
            if (logits(i, c) > mx) {
                mx = logits(i, c);
                arg = c;
            }
        double z = 0.0;
        for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(logits(i, c) - mx);
        const double p = 1.0 / z;
        std::size_t b = 0;
        for (std::size_t k = 0; k < bins; ++k) {
            const double lo = static_cast<double>(k) / static_cast<double>(bins);
            const double hi = static_cast<double>(k + 1) / static_cast<double>(bins);
            if (p >= lo && (p < hi || k + 1 == bins)) b = k;
        }
        conf[b] += p;
        acc[b] += static_cast<double>(arg) == labels(i, 0) ? 1.0 : 0.0;
        cnt[b] += 1.0;
    }
    double e = 0.0;
    for (std::size_t b = 0; b < bins; ++b)
        if (cnt[b] > 0) e += cnt[b] / static_cast<double>(logits.rows()) * std::abs(acc[b] / cnt[b] - conf[b] / cnt[b]);
    return e;
}

}  // namespace

TEST_CASE("accuracy") {
    CHECK(metrics::accuracy(Matrix::from_rows({{1, 0}, {0, 1}}), Matrix::from_rows({{0}, {1}})) == 1.0);
    CHECK(metrics::accuracy(Matrix::from_rows({{0, 0}}), Matrix::from_rows({{0}})) == 1.0);
    CHECK(metrics::accuracy(Matrix::from_rows({{0, 0}}), Matrix::from_rows({{1}})) == 0.0);
    CHECK_THROWS_AS(metrics::accuracy(Matrix(0, 2), Matrix(0, 1)), ValueError);
    CHECK_THROWS_AS(metrics::accuracy(Matrix(2, 2), Matrix(3, 1)), ShapeError);

    Rng rng(1);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 1 + rng.below(40), c = 2 + rng.below(4);
        Matrix logits = random_matrix(rng, n, c);
        // inject exact ties
        for (std::size_t i = 0; i < n; i += 3) logits(i, c - 1) = logits(i, 0);
        const Matrix labels = random_labels(rng, n, c);
        CHECK(metrics::accuracy(logits, labels) == loop_accuracy(logits, labels));
    }
}

TEST_CASE("AccuracyMatrix and backward_transfer") {
    metrics::AccuracyMatrix r(2);
    r.set(0, 0, 0.9);
    r.set(1, 0, 0.8);
    r.set(1, 1, 0.95);
    CHECK(metrics::backward_transfer(r) == doctest::Approx(-0.1).epsilon(1e-14));
    CHECK(metrics::final_average_accuracy(r) == doctest::Approx(0.875));
    CHECK_THROWS_AS(r.set(0, 1, 0.5), ValueError);
    CHECK_THROWS_AS(r.set(1, 1, 1.5), ValueError);
    CHECK_THROWS_AS(metrics::backward_transfer(metrics::AccuracyMatrix(1)), ValueError);

    SUBCASE("no forgetting gives zero") {
        metrics::AccuracyMatrix s(3);
        for (std::size_t t = 0; t < 3; ++t)
            for (std::size_t i = 0; i <= t; ++i) s.set(t, i, 0.5 + 0.1 * static_cast<double>(i));
        CHECK(metrics::backward_transfer(s) == 0.0);
    }

    SUBCASE("random T=4 against hand sum, always within [-1, 1]") {
        Rng rng(2);
        for (int rep = 0; rep < 100; ++rep) {
            metrics::AccuracyMatrix m(4);
            double want = 0.0;
            for (std::size_t t = 0; t < 4; ++t)
                for (std::size_t i = 0; i <= t; ++i) m.set(t, i, rng.uniform());
            want = (m.at(3, 0) - m.at(0, 0)) + (m.at(3, 1) - m.at(1, 1)) + (m.at(3, 2) - m.at(2, 2));
            want /= 3.0;
            const double got = metrics::backward_transfer(m);
            CHECK(got == doctest::Approx(want).epsilon(1e-14));
            CHECK(got >= -1.0);
            CHECK(got <= 1.0);
        }
    }
}

TEST_CASE("ece") {
    const Matrix confident = Matrix::from_rows({{100, 0}, {0, 100}, {100, 0}, {0, 100}});
    CHECK(metrics::ece(confident, Matrix::from_rows({{0}, {1}, {0}, {1}})) < 1e-12);
    CHECK(metrics::ece(confident, Matrix::from_rows({{0}, {0}, {1}, {1}})) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK_THROWS_AS(metrics::ece(Matrix(0, 2), Matrix(0, 1)), ValueError);
    CHECK_THROWS_AS(metrics::ece(confident, Matrix(4, 1), 1), ValueError);

    SUBCASE("calibrated bins give zero") {
        // confidence exactly 0.75 (logit gap ln 3), 3 of 4 correct
        const double g = std::log(3.0);
        const Matrix l = Matrix::from_rows({{g, 0}, {g, 0}, {g, 0}, {g, 0}});
        CHECK(metrics::ece(l, Matrix::from_rows({{0}, {0}, {0}, {1}})) < 1e-15);
    }

    SUBCASE("matches per-sample binning oracle; counts add up; range [0, 1]") {
        Rng rng(3);
        for (int rep = 0; rep < 50; ++rep) {
            const std::size_t n = 1 + rng.below(60), c = 2 + rng.below(4), bins = 2 + rng.below(15);
            const Matrix logits = random_matrix(rng, n, c, 3.0);
            const Matrix labels = random_labels(rng, n, c);
            const double got = metrics::ece(logits, labels, bins);
            CHECK(std::abs(got - loop_ece(logits, labels, bins)) < 1e-12);
            CHECK(got >= 0.0);
            CHECK(got <= 1.0);
            const auto cb = metrics::calibration_bins(logits, labels, bins);
            std::size_t total = 0;
            for (auto k : cb.count) total += k;
            CHECK(total == n);
        }
    }
}

TEST_CASE("gram_deviation") {
    const Matrix z_old = Matrix::from_rows({{0, 0}, {3, 4}});
    const Matrix z_new = Matrix::from_rows({{0, 0}, {0, 4}});
    CHECK(metrics::gram_deviation(z_new, z_old, loss::DistanceVariant::sq_euclidean()) ==
          doctest::Approx(9.0 * std::sqrt(2.0) / 4.0).epsilon(1e-14));
    CHECK_THROWS_AS(metrics::gram_deviation(Matrix(2, 2), Matrix(3, 2), loss::DistanceVariant::sq_euclidean()),
                    ShapeError);

    Rng rng(4);
    for (const auto& v : {loss::DistanceVariant::sq_euclidean(), loss::DistanceVariant::cosine(),
                          loss::DistanceVariant::rbf(), loss::DistanceVariant::rbf(0.8),
                          loss::DistanceVariant::rkd()}) {
        for (int rep = 0; rep < 10; ++rep) {
            const std::size_t n = 2 + rng.below(6);
            const Matrix a = random_matrix(rng, n, 3), b = random_matrix(rng, n, 3);
            CHECK(metrics::gram_deviation(a, a, v) == 0.0);
            CHECK(std::abs(metrics::gram_deviation(a, b, v) - metrics::gram_deviation(b, a, v)) < 1e-14);
        }
    }

    SUBCASE("sq_euclidean matches double loop") {
        for (int rep = 0; rep < 20; ++rep) {
            const std::size_t n = 2 + rng.below(8);
            const Matrix a = random_matrix(rng, n, 3), b = random_matrix(rng, n, 3);
            const Matrix da = testing::brute_sq_dist(a), db = testing::brute_sq_dist(b);
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) s += (da(i, j) - db(i, j)) * (da(i, j) - db(i, j));
            const double want = std::sqrt(s) / static_cast<double>(n * n);
            CHECK(std::abs(metrics::gram_deviation(a, b, loss::DistanceVariant::sq_euclidean()) - want) <
                  1e-11 * std::max(1.0, want));
        }
    }
}

TEST_CASE("export_embeddings") {
    Rng rng(5);
    model::ModelState m = model::make_model({4, 8, 16}, model::Activation::tanh, rng);
    const auto dir = std::filesystem::temp_directory_path() / "lwp_test_metrics";
    std::filesystem::create_directories(dir);

    const Matrix x = random_matrix(rng, 3, 4);
    metrics::export_embeddings(m, x, dir / "emb.csv");
    const Matrix back = metrics::read_embeddings(dir / "emb.csv");
    CHECK(back.rows() == 3);
    CHECK(back.cols() == 16);
    CHECK(back == model::encode(m, x).value());

    metrics::export_embeddings(m, Matrix(0, 4), dir / "empty.csv");
    std::ifstream in(dir / "empty.csv");
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 1);

    CHECK_THROWS(metrics::export_embeddings(m, x, "/nonexistent/dir/emb.csv"));
    std::filesystem::remove_all(dir);
}
