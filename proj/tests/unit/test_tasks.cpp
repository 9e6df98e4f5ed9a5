#include "doctest.h"

#include "lwp/errors.hpp"
#include "lwp/tasks.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

using namespace lwp;
namespace fs = std::filesystem;

namespace {

// Independent logistic-regression probe: full-batch gradient descent on
// standardized train features, scored on the test split.
double probe_accuracy(const tasks::TaskSplit& t) {
    const Matrix& x = t.train.x;
    const std::size_t n = x.rows(), d = x.cols();
    std::vector<double> mean(d, 0.0), sd(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) mean[k] += x(i, k) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) sd[k] += (x(i, k) - mean[k]) * (x(i, k) - mean[k]) / static_cast<double>(n);
    for (double& v : sd) v = std::sqrt(v) + 1e-12;

    std::vector<double> w(d + 1, 0.0);
    auto feat = [&](const Matrix& m, std::size_t i, std::size_t k) { return (m(i, k) - mean[k]) / sd[k]; };
    for (int it = 0; it < 2000; ++it) {
        std::vector<double> g(d + 1, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double s = w[d];
            for (std::size_t k = 0; k < d; ++k) s += w[k] * feat(x, i, k);
            const double err = 1.0 / (1.0 + std::exp(-s)) - t.train.y(i, 0);
            for (std::size_t k = 0; k < d; ++k) g[k] += err * feat(x, i, k);
            g[d] += err;
        }
        for (std::size_t k = 0; k <= d; ++k) w[k] -= 1.0 * g[k] / static_cast<double>(n);
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < t.test.size(); ++i) {
        double s = w[d];
        for (std::size_t k = 0; k < d; ++k) s += w[k] * feat(t.test.x, i, k);
        if ((s > 0.0 ? 1.0 : 0.0) == t.test.y(i, 0)) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(t.test.size());
}

Matrix all_rows(const tasks::TaskSplit& t) {
    Matrix out(t.train.size() + t.val.size() + t.test.size(), t.train.x.cols());
    std::size_t r = 0;
    for (const tasks::Split* sp : {&t.train, &t.val, &t.test})
        for (std::size_t i = 0; i < sp->size(); ++i, ++r)
            for (std::size_t k = 0; k < out.cols(); ++k) out(r, k) = sp->x(i, k);
    return out;
}

std::vector<double> column_means(const Matrix& x) {
    std::vector<double> m(x.cols(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t k = 0; k < x.cols(); ++k) m[k] += x(i, k) / static_cast<double>(x.rows());
    return m;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("split_sizes") {
    CHECK(tasks::split_sizes(100).train == 70);
    CHECK(tasks::split_sizes(100).val == 15);
    CHECK(tasks::split_sizes(100).test == 15);
    const auto s3 = tasks::split_sizes(3);
    CHECK(s3.train == 1);
    CHECK(s3.val == 1);
    CHECK(s3.test == 1);
    for (std::size_t n = 3; n < 200; ++n) {
        const auto s = tasks::split_sizes(n);
        CHECK(s.train + s.val + s.test == n);
        CHECK(s.train >= 1);
        CHECK(s.val >= 1);
        CHECK(s.test >= 1);
    }
}

TEST_CASE("toy xor/circles") {
    CHECK(tasks::toy_xor_label(1, 1) == 0);
    CHECK(tasks::toy_xor_label(1, -1) == 1);
    CHECK(tasks::toy_xor_label(-1, -1) == 0);
    CHECK(tasks::toy_circle_label(0, 0) == 0);
    CHECK(tasks::toy_circle_label(1, 1) == 1);
    CHECK_THROWS_AS(tasks::gen_toy_xor_circles(7, 0.0, 1), ValueError);
    CHECK_THROWS_AS(tasks::gen_toy_xor_circles(100, -0.1, 1), ValueError);

    const auto s = tasks::gen_toy_xor_circles(10000, 0.0, 3);
    REQUIRE(s.size() == 2);
    CHECK(s.input_dim == 2);
    CHECK(s.tasks[0].name == "circles");
    CHECK(s.tasks[1].name == "xor");
    CHECK(tasks::gen_toy_xor_circles(100, 0.0, 3, tasks::ToyOrder::xor_first).tasks[0].name == "xor");

    // noise-free labels follow the rules; tasks share inputs
    for (std::size_t i = 0; i < s.tasks[0].train.size(); ++i) {
        const double a = s.tasks[0].train.x(i, 0), b = s.tasks[0].train.x(i, 1);
        CHECK(s.tasks[0].train.y(i, 0) == static_cast<double>(tasks::toy_circle_label(a, b)));
        CHECK(s.tasks[1].train.y(i, 0) == static_cast<double>(tasks::toy_xor_label(a, b)));
    }
    CHECK(s.tasks[0].train.x == s.tasks[1].train.x);

    for (const auto& t : s.tasks) {
        double ones = 0.0, n = 0.0;
        for (const tasks::Split* sp : {&t.train, &t.val, &t.test}) {
            for (double v : sp->y.data()) ones += v;
            n += static_cast<double>(sp->size());
        }
        CHECK(std::abs(ones / n - 0.5) < 0.05);
    }

    CHECK(tasks::gen_toy_xor_circles(500, 0.1, 9).tasks[1].train.x ==
          tasks::gen_toy_xor_circles(500, 0.1, 9).tasks[1].train.x);
}

TEST_CASE("attribute stream") {
    tasks::AttributeStreamParams p;
    p.seed = 11;
    const auto s = tasks::gen_attribute_stream(p);
    CHECK(s.size() == p.tasks);
    CHECK(s.input_dim == p.dim);
    CHECK(s.stationary);
    const auto again = tasks::gen_attribute_stream(p);
    for (std::size_t t = 0; t < s.size(); ++t) {
        CHECK(s.tasks[t].train.x == again.tasks[t].train.x);
        CHECK(s.tasks[t].test.y == again.tasks[t].test.y);
    }

    SUBCASE("each label is learnable by a linear probe") {
        for (const auto& t : s.tasks) CHECK(probe_accuracy(t) >= 0.9);
    }
    SUBCASE("task count and errors") {
        for (std::size_t tt : {2u, 3u, 7u}) {
            auto q = p;
            q.tasks = tt;
            q.dim = 8;
            CHECK(tasks::gen_attribute_stream(q).size() == tt);
        }
        auto bad = p;
        bad.dim = 3;
        bad.tasks = 5;
        CHECK_THROWS_AS(tasks::gen_attribute_stream(bad), ValueError);
        bad = p;
        bad.tasks = 1;
        CHECK_THROWS_AS(tasks::gen_attribute_stream(bad), ValueError);
    }
    SUBCASE("splits come from the same distribution (3 sigma, n = 1e4)") {
        auto q = p;
        q.n = 10000;
        const auto big = tasks::gen_attribute_stream(q);
        const auto& t = big.tasks[0];
        for (std::size_t k = 1; k < big.size(); ++k) CHECK(big.tasks[k].train.x == t.train.x);
        const Matrix& a = t.train.x;
        const Matrix b = all_rows(t);
        // train vs val+test halves: per-coordinate means and variances
        Matrix rest(t.val.size() + t.test.size(), a.cols());
        for (std::size_t i = 0; i < rest.rows(); ++i)
            for (std::size_t k = 0; k < a.cols(); ++k) rest(i, k) = b(t.train.size() + i, k);
        const auto ma = column_means(a), mr = column_means(rest);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            double va = 0.0, vr = 0.0;
            for (std::size_t i = 0; i < a.rows(); ++i) va += (a(i, k) - ma[k]) * (a(i, k) - ma[k]);
            for (std::size_t i = 0; i < rest.rows(); ++i) vr += (rest(i, k) - mr[k]) * (rest(i, k) - mr[k]);
            va /= static_cast<double>(a.rows() - 1);
            vr /= static_cast<double>(rest.rows() - 1);
            const double se = std::sqrt(va / static_cast<double>(a.rows()) + vr / static_cast<double>(rest.rows()));
            CHECK(std::abs(ma[k] - mr[k]) < 3.0 * se);
            // variance of a sample variance is about 2 sigma^4 / n for near-Gaussian marginals;
            // the mixture has heavier tails, so allow the kurtosis-free bound doubled
            const double se_var = std::sqrt(4.0 * va * va / static_cast<double>(a.rows()) +
                                            4.0 * vr * vr / static_cast<double>(rest.rows()));
            CHECK(std::abs(va - vr) < 3.0 * se_var);
        }
    }
}

TEST_CASE("shift stream") {
    tasks::AttributeStreamParams p;
    p.seed = 5;
    SUBCASE("zero shift reproduces the stationary stream bitwise") {
        const auto a = tasks::gen_attribute_stream(p);
        const auto b = tasks::gen_shift_stream(p, 0.0);
        REQUIRE(a.size() == b.size());
        for (std::size_t t = 0; t < a.size(); ++t) {
            CHECK(a.tasks[t].train.x == b.tasks[t].train.x);
            CHECK(a.tasks[t].val.x == b.tasks[t].val.x);
            CHECK(a.tasks[t].test.x == b.tasks[t].test.x);
            CHECK(a.tasks[t].train.y == b.tasks[t].train.y);
        }
    }
    SUBCASE("mean offset grows as t * shift_scale on shifted coordinates") {
        auto q = p;
        q.n = 10000;
        const double s = 0.5;
        const auto st = tasks::gen_shift_stream(q, s);
        CHECK_FALSE(st.stationary);
        const auto shifted = tasks::shifted_coordinates(q);
        CHECK(!shifted.empty());
        const std::set<std::size_t> shifted_set(shifted.begin(), shifted.end());
        const auto m0 = column_means(all_rows(st.tasks[0]));
        for (std::size_t t = 1; t < st.size(); ++t) {
            const auto mt = column_means(all_rows(st.tasks[t]));
            const double want = static_cast<double>(t) * s;
            for (std::size_t k = 0; k < q.dim; ++k) {
                if (shifted_set.count(k)) {
                    CHECK(std::abs((mt[k] - m0[k]) - want) < 0.05 * want);
                } else {
                    CHECK(mt[k] == m0[k]);
                }
            }
        }
    }
    SUBCASE("labels stay probe-learnable under shift up to 1") {
        for (double s : {0.5, 1.0}) {
            const auto st = tasks::gen_shift_stream(p, s);
            for (const auto& t : st.tasks) CHECK(probe_accuracy(t) >= 0.85);
        }
    }
    CHECK_THROWS_AS(tasks::gen_shift_stream(p, -1.0), ValueError);
}

TEST_CASE("csv stream") {
    TempDir dir("lwp_test_tasks_csv");
    tasks::CsvSchema schema;
    schema.features = {"a", "b"};
    schema.labels = {"y"};
    schema.classes = {2};

    SUBCASE("three rows with a header") {
        write_file(dir.path / "t.csv", "a,b,y\n1,2,0\n3,4,1\n5,6,0\n");
        const auto s = tasks::load_csv_stream({dir.path / "t.csv"}, schema);
        REQUIRE(s.size() == 1);
        const auto& t = s.tasks[0];
        CHECK(t.train.size() + t.val.size() + t.test.size() == 3);
        CHECK(t.classes == 2);
    }
    SUBCASE("column order comes from the header; extra columns ignored") {
        write_file(dir.path / "t.csv", "y,extra,b,a\n0,x,2,1\n1,x,4,3\n0,x,6,5\n1,x,8,7\n");
        const auto s = tasks::load_csv_stream({dir.path / "t.csv"}, schema);
        CHECK(s.tasks[0].train.y(0, 0) == 0.0);
        // z-scored with train stats: first feature (a) increases with row
        CHECK(s.tasks[0].train.x(0, 0) < s.tasks[0].test.x(0, 0));
    }
    SUBCASE("errors") {
        write_file(dir.path / "label.csv", "a,b,y\n1,2,0\n3,4,2\n5,6,0\n");
        CHECK_THROWS_AS(tasks::load_csv_stream({dir.path / "label.csv"}, schema), FormatError);
        write_file(dir.path / "ragged.csv", "a,b,y\n1,2,0\n3,1\n5,6,0\n");
        CHECK_THROWS_AS(tasks::load_csv_stream({dir.path / "ragged.csv"}, schema), FormatError);
        write_file(dir.path / "nan.csv", "a,b,y\n1,2,0\nfoo,4,1\n5,6,0\n");
        CHECK_THROWS_AS(tasks::load_csv_stream({dir.path / "nan.csv"}, schema), FormatError);
        write_file(dir.path / "short.csv", "a,b,y\n1,2,0\n3,4,1\n");
        CHECK_THROWS_AS(tasks::load_csv_stream({dir.path / "short.csv"}, schema), FormatError);
        write_file(dir.path / "nocol.csv", "a,y\n1,0\n3,1\n5,0\n");
        CHECK_THROWS_AS(tasks::load_csv_stream({dir.path / "nocol.csv"}, schema), FormatError);
        CHECK_THROWS_AS(tasks::load_csv_stream({dir.path / "missing.csv"}, schema), FormatError);
    }
    SUBCASE("task-0 train features are standardized") {
        tasks::AttributeStreamParams p;
        p.n = 600;
        p.seed = 2;
        const auto raw = tasks::gen_attribute_stream(p);
        tasks::write_csv_stream(raw, dir.path);
        const auto sch = tasks::CsvSchema::from_json_file(dir.path / "schema.json");
        std::vector<fs::path> files;
        for (std::size_t t = 0; t < raw.size(); ++t) files.push_back(dir.path / ("task" + std::to_string(t) + ".csv"));
        const auto s = tasks::load_csv_stream(files, sch);
        REQUIRE(s.size() == raw.size());
        const Matrix& x = s.tasks[0].train.x;
        for (std::size_t k = 0; k < x.cols(); ++k) {
            double m = 0.0, v = 0.0;
            for (std::size_t i = 0; i < x.rows(); ++i) m += x(i, k);
            m /= static_cast<double>(x.rows());
            for (std::size_t i = 0; i < x.rows(); ++i) v += (x(i, k) - m) * (x(i, k) - m);
            v = std::sqrt(v / static_cast<double>(x.rows()));
            CHECK(std::abs(m) < 1e-10);
            CHECK(std::abs(v - 1.0) < 1e-10);
        }
        for (std::size_t t = 0; t < raw.size(); ++t) {
            CHECK(s.tasks[t].train.y == raw.tasks[t].train.y);
            CHECK(s.tasks[t].test.y == raw.tasks[t].test.y);
        }
    }
}

TEST_CASE("splits are disjoint index partitions") {
    // every generated row is unique, so disjointness shows as no shared rows
    const auto s = tasks::gen_toy_xor_circles(1000, 0.0, 4);
    std::set<std::pair<double, double>> seen;
    std::size_t total = 0;
    for (const tasks::Split* sp : {&s.tasks[0].train, &s.tasks[0].val, &s.tasks[0].test}) {
        for (std::size_t i = 0; i < sp->size(); ++i) seen.insert({sp->x(i, 0), sp->x(i, 1)});
        total += sp->size();
    }
    CHECK(total == 1000);
    CHECK(seen.size() == 1000);
    CHECK_NOTHROW(s.validate());
}
