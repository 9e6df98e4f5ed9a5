#include "lwp/metrics.hpp"

#include "lwp/autodiff.hpp"
#include "lwp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace lwp::metrics {

AccuracyMatrix::AccuracyMatrix(std::size_t tasks) {
    for (std::size_t t = 0; t < tasks; ++t) rows_.emplace_back(t + 1, 0.0);
}

double AccuracyMatrix::at(std::size_t after, std::size_t task) const {
    if (after >= rows_.size() || task > after) {
        throw ValueError("AccuracyMatrix: entry (" + std::to_string(after) + ", " + std::to_string(task) +
                         ") is undefined");
    }
    return rows_[after][task];
}

void AccuracyMatrix::set(std::size_t after, std::size_t task, double acc) {
    if (after >= rows_.size() || task > after) {
        throw ValueError("AccuracyMatrix: entry (" + std::to_string(after) + ", " + std::to_string(task) +
                         ") is undefined");
    }
    if (!(acc >= 0.0 && acc <= 1.0)) throw ValueError("AccuracyMatrix: accuracy outside [0, 1]");
    rows_[after][task] = acc;
}

namespace {

void check_aligned(const Matrix& logits, const Matrix& labels, const char* who) {
    if (logits.rows() == 0) throw ValueError(std::string(who) + ": empty input");
    if (labels.cols() != 1 || labels.rows() != logits.rows()) {
        throw ShapeError(std::string(who) + ": logits " + logits.shape_string() + " vs labels " +
                         labels.shape_string());
    }
}

std::size_t argmax(std::span<const double> r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < r.size(); ++c) {
        if (r[c] > r[best]) best = c;
    }
    return best;
}

}  // namespace

double accuracy(const Matrix& logits, const Matrix& labels) {
    check_aligned(logits, labels, "accuracy");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        if (static_cast<double>(argmax(logits.row(i))) == labels(i, 0)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

double backward_transfer(const AccuracyMatrix& r) {
    const std::size_t t = r.tasks();
    if (t < 2) throw ValueError("backward_transfer: needs at least 2 tasks");
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < t; ++i) s += r.at(t - 1, i) - r.at(i, i);
    return s / static_cast<double>(t - 1);
}

double final_average_accuracy(const AccuracyMatrix& r) {
    if (r.tasks() == 0) throw ValueError("final_average_accuracy: empty matrix");
    const auto& last = r.rows().back();
    double s = 0.0;
    for (double v : last) s += v;
    return s / static_cast<double>(last.size());
}

CalibrationBins calibration_bins(const Matrix& logits, const Matrix& labels, std::size_t bins) {
    check_aligned(logits, labels, "ece");
    if (bins < 2) throw ValueError("ece: bins must be >= 2");
    const Matrix probs = ad::softmax_rows(logits);
    CalibrationBins b{std::vector<double>(bins, 0.0), std::vector<double>(bins, 0.0),
                      std::vector<std::size_t>(bins, 0)};
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        const std::size_t pred = argmax(probs.row(i));
        const double conf = probs(i, pred);
        const auto k = std::min(static_cast<std::size_t>(conf * static_cast<double>(bins)), bins - 1);
        b.confidence_sum[k] += conf;
        b.accuracy_sum[k] += static_cast<double>(pred) == labels(i, 0) ? 1.0 : 0.0;
        ++b.count[k];
    }
    return b;
}

double ece(const Matrix& logits, const Matrix& labels, std::size_t bins) {
    const CalibrationBins b = calibration_bins(logits, labels, bins);
    const auto n = static_cast<double>(logits.rows());
    double e = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
        if (b.count[k] == 0) continue;
        const auto nk = static_cast<double>(b.count[k]);
        e += (nk / n) * std::abs(b.accuracy_sum[k] / nk - b.confidence_sum[k] / nk);
    }
    return e;
}

namespace {

void pair_distances(const Matrix& z, std::vector<double>& out) {
    for (std::size_t i = 0; i < z.rows(); ++i) {
        for (std::size_t j = i + 1; j < z.rows(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < z.cols(); ++k) {
                const double d = z(i, k) - z(j, k);
                s += d * d;
            }
            out.push_back(std::sqrt(s));
        }
    }
}

double pooled_median_sigma(const Matrix& a, const Matrix& b) {
    std::vector<double> d;
    pair_distances(a, d);
    pair_distances(b, d);
    if (d.empty()) return 1.0;
    const auto mid = d.begin() + static_cast<std::ptrdiff_t>((d.size() - 1) / 2);
    std::nth_element(d.begin(), mid, d.end());
    return *mid > 0.0 ? *mid : 1.0;
}

}  // namespace

double gram_deviation(const Matrix& z_new, const Matrix& z_old, const loss::DistanceVariant& variant) {
    variant.validate();
    if (!z_new.same_shape(z_old)) {
        throw ShapeError("gram_deviation: " + z_new.shape_string() + " vs " + z_old.shape_string());
    }
    const std::size_t n = z_new.rows();
    if (n == 0) throw ShapeError("gram_deviation: empty batch");
    double sigma = 1.0;
    if (variant.kind == loss::DistanceKind::rbf_gram) {
        sigma = variant.sigma ? *variant.sigma : pooled_median_sigma(z_new, z_old);
    }
    const Matrix diff = loss::relation_matrix(z_new, variant.kind, sigma) -
                        loss::relation_matrix(z_old, variant.kind, sigma);
    double s = 0.0;
    for (double v : diff.data()) s += v * v;
    return std::sqrt(s) / static_cast<double>(n * n);
}

void export_embeddings(const model::ModelState& m, const Matrix& x, const std::filesystem::path& path) {
    const std::size_t latent = m.encoder.latent_dim();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_embeddings: cannot write " + path.string());
    for (std::size_t k = 0; k < latent; ++k) out << (k ? "," : "") << 'z' << k;
    out << '\n';
    if (x.rows() > 0) {
        const Matrix z = model::encode(m, x).value();
        char buf[32];
        for (std::size_t i = 0; i < z.rows(); ++i) {
            for (std::size_t k = 0; k < z.cols(); ++k) {
                std::snprintf(buf, sizeof buf, "%.17g", z(i, k));
                out << (k ? "," : "") << buf;
            }
            out << '\n';
        }
    }
    if (!out) throw std::runtime_error("export_embeddings: write failed for " + path.string());
}

Matrix read_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("read_embeddings: cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError("read_embeddings: missing header");
    const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    std::vector<double> data;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::size_t c = 0;
        while (std::getline(ss, cell, ',')) {
            data.push_back(std::strtod(cell.c_str(), nullptr));
            ++c;
        }
        if (c != cols) throw FormatError("read_embeddings: ragged row");
        ++rows;
    }
    return Matrix(rows, cols, std::move(data));
}

}  // namespace lwp::metrics
