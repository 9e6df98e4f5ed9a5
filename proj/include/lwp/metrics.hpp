#pragma once

#include "lwp/losses.hpp"
#include "lwp/matrix.hpp"
#include "lwp/model.hpp"

#include <filesystem>
#include <vector>

namespace lwp::metrics {

/// Lower-triangular accuracy table: at(T, i) is the accuracy on task i after
/// training through task T, defined for i <= T.
class AccuracyMatrix {
public:
    explicit AccuracyMatrix(std::size_t tasks);

    std::size_t tasks() const { return rows_.size(); }
    double at(std::size_t after, std::size_t task) const;
    /// Throws ValueError for i > T or values outside [0, 1].
    void set(std::size_t after, std::size_t task, double acc);
    const std::vector<std::vector<double>>& rows() const { return rows_; }

    bool operator==(const AccuracyMatrix&) const = default;

private:
    std::vector<std::vector<double>> rows_;
};

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy(const Matrix& logits, const Matrix& labels);

/// (1 / (T - 1)) * sum_{i < T-1} (R[T-1][i] - R[i][i]), 0-based. Needs T >= 2.
double backward_transfer(const AccuracyMatrix& r);

/// Mean of the final row.
double final_average_accuracy(const AccuracyMatrix& r);

/// Per-bin occupancy used by ece().
struct CalibrationBins {
    std::vector<double> confidence_sum;
    std::vector<double> accuracy_sum;
    std::vector<std::size_t> count;
};

/// Equal-width bins over [0, 1] of max-softmax confidence; confidence c goes
/// to bin min(floor(c * bins), bins - 1).
CalibrationBins calibration_bins(const Matrix& logits, const Matrix& labels, std::size_t bins);

/// sum_b (n_b / N) |acc_b - conf_b|; empty bins contribute 0.
double ece(const Matrix& logits, const Matrix& labels, std::size_t bins = 10);

/// (1 / N^2) ||M(z_new) - M(z_old)||_F for the variant's relation matrix M.
/// rbf_gram without an explicit sigma uses the median heuristic over the
/// pooled pair distances of both inputs, which keeps the result symmetric.
double gram_deviation(const Matrix& z_new, const Matrix& z_old, const loss::DistanceVariant& variant);

/// CSV of encode(m, x): header z0..z{L-1}, one row per input, 17 significant
/// digits so the values round-trip exactly.
void export_embeddings(const model::ModelState& m, const Matrix& x, const std::filesystem::path& path);

/// Reads a file written by export_embeddings.
Matrix read_embeddings(const std::filesystem::path& path);

}  // namespace lwp::metrics
