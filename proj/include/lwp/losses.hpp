#pragma once

#include "lwp/autodiff.hpp"
#include "lwp/matrix.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lwp::loss {

/// Weights of the composite objective
///   total = lambda_c * current + lambda_o * old + lambda_d * dwdp.
struct LossWeights {
    double lambda_c = 1.0;
    double lambda_o = 1.0;
    double lambda_d = 0.01;

    /// Throws ValueError unless all three are finite and non-negative.
    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

enum class DistanceKind { sq_euclidean, cosine, rbf_gram, rkd_unmasked };

std::string_view to_string(DistanceKind k);
DistanceKind parse_distance_kind(std::string_view s);

/// Pairwise relation d(z_i, z_j) used by the preservation losses.
///
///  - sq_euclidean: ||z_i - z_j||^2
///  - cosine:       <z_i, z_j> / (max(||z_i||, 1e-12) * max(||z_j||, 1e-12))
///  - rbf_gram:     exp(-||z_i - z_j||^2 / (2 sigma^2)); sigma unset means the
///                  median heuristic over the teacher batch (see rbf_sigma)
///  - rkd_unmasked: Euclidean distance divided by the batch's mean
///                  off-diagonal distance; ignores any mask
struct DistanceVariant {
    DistanceKind kind = DistanceKind::sq_euclidean;
    std::optional<double> sigma;

    static DistanceVariant sq_euclidean() { return {DistanceKind::sq_euclidean, std::nullopt}; }
    static DistanceVariant cosine() { return {DistanceKind::cosine, std::nullopt}; }
    static DistanceVariant rbf(std::optional<double> sigma = std::nullopt) { return {DistanceKind::rbf_gram, sigma}; }
    static DistanceVariant rkd() { return {DistanceKind::rkd_unmasked, std::nullopt}; }

    /// sigma only with rbf_gram, and positive when given.
    void validate() const;
    std::string describe() const;
};

inline constexpr double kCosineNormFloor = 1e-12;
inline constexpr double kRkdSqrtEps = 1e-12;

/// Symmetric binary N x N matrix with a unit diagonal.
class Mask {
public:
    /// Validates the invariants; throws ValueError otherwise.
    explicit Mask(Matrix m);
    static Mask all_ones(std::size_t n) { return Mask(Matrix(n, n, 1.0)); }

    const Matrix& matrix() const { return m_; }
    std::size_t size() const { return m_.rows(); }

private:
    Matrix m_;
};

/// Bandwidth used for rbf_gram: the explicit sigma, or else the median of
/// the Euclidean distances over pairs i < j of `z_teacher` (1.0 when that
/// median is zero or the batch has a single row).
double rbf_sigma(const DistanceVariant& v, const Matrix& z_teacher);

/// The variant's N x N relation matrix, differentiable in z. `sigma` is only
/// read by rbf_gram.
ad::Node relation_matrix(const ad::Node& z, DistanceKind kind, double sigma);

/// Plain-matrix version of relation_matrix (same arithmetic, no graph).
Matrix relation_matrix(const Matrix& z, DistanceKind kind, double sigma);

/// Row indices -> one-hot rows. Labels must lie in [0, classes).
Matrix one_hot(const Matrix& labels, std::size_t classes);

/// Softmax cross-entropy of the current task's head against its labels.
ad::Node current_task_loss(const ad::Node& logits, const Matrix& one_hot_labels);

enum class PseudolabelKind { soft, hard };

/// Sum over old tasks of CE(softmax(teacher / T), student / T), each averaged
/// over the batch. Hard pseudolabels replace the teacher softmax by the
/// one-hot of its argmax (lowest index on ties). Empty lists give 0.
ad::Node old_task_loss(const std::vector<ad::Node>& student_logits, const std::vector<Matrix>& teacher_logits,
                       double temperature, PseudolabelKind kind = PseudolabelKind::soft);

/// (1/N^2) * sum_ij (d(z_i, z_j) - d(z'_i, z'_j))^2 over all pairs.
ad::Node preservation_loss(const ad::Node& z_new, const Matrix& z_old, const DistanceVariant& variant);

/// m_ij = 1 iff labels i and j are equal. Labels are N x 1.
Mask dwdp_mask(const Matrix& labels);

/// Preservation loss restricted to pairs with m_ij = 1.
ad::Node dwdp_loss(const ad::Node& z_new, const Matrix& z_old, const Mask& mask, const DistanceVariant& variant);

ad::Node lwp_total(const ad::Node& l_cur, const ad::Node& l_old, const ad::Node& l_dwdp, const LossWeights& w);

}  // namespace lwp::loss
