#include "lwp/losses.hpp"

#include "lwp/errors.hpp"

#include <algorithm>
#include <cmath>

namespace lwp::loss {

void LossWeights::validate() const {
    for (double v : {lambda_c, lambda_o, lambda_d}) {
        if (!std::isfinite(v) || v < 0.0) {
            throw ValueError("LossWeights: weights must be finite and non-negative");
        }
    }
}

std::string_view to_string(DistanceKind k) {
    switch (k) {
        case DistanceKind::sq_euclidean: return "sq_euclidean";
        case DistanceKind::cosine: return "cosine";
        case DistanceKind::rbf_gram: return "rbf_gram";
        case DistanceKind::rkd_unmasked: return "rkd_unmasked";
    }
    return "?";
}

DistanceKind parse_distance_kind(std::string_view s) {
    for (auto k : {DistanceKind::sq_euclidean, DistanceKind::cosine, DistanceKind::rbf_gram,
                   DistanceKind::rkd_unmasked}) {
        if (s == to_string(k)) return k;
    }
    throw ValueError("unknown distance variant '" + std::string(s) +
                     "' (expected sq_euclidean, cosine, rbf_gram or rkd_unmasked)");
}

void DistanceVariant::validate() const {
    if (sigma && kind != DistanceKind::rbf_gram) {
        throw ValueError("DistanceVariant: sigma is only meaningful for rbf_gram");
    }
    if (sigma && !(*sigma > 0.0 && std::isfinite(*sigma))) {
        throw ValueError("DistanceVariant: sigma must be positive");
    }
}

std::string DistanceVariant::describe() const {
    std::string s(to_string(kind));
    if (kind == DistanceKind::rbf_gram) {
        s += sigma ? "(sigma=" + std::to_string(*sigma) + ")" : "(sigma=median)";
    }
    return s;
}

Mask::Mask(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw ValueError("Mask: must be square, got " + m_.shape_string());
    for (std::size_t i = 0; i < m_.rows(); ++i) {
        if (m_(i, i) != 1.0) throw ValueError("Mask: diagonal must be 1");
        for (std::size_t j = 0; j < m_.cols(); ++j) {
            const double v = m_(i, j);
            if (v != 0.0 && v != 1.0) throw ValueError("Mask: entries must be 0 or 1");
            if (v != m_(j, i)) throw ValueError("Mask: must be symmetric");
        }
    }
}

double rbf_sigma(const DistanceVariant& v, const Matrix& z_teacher) {
    if (v.sigma) return *v.sigma;
    const std::size_t n = z_teacher.rows();
    if (n < 2) return 1.0;
    std::vector<double> d;
    d.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < z_teacher.cols(); ++k) {
                const double diff = z_teacher(i, k) - z_teacher(j, k);
                s += diff * diff;
            }
            d.push_back(std::sqrt(s));
        }
    }
    // Lower median for even counts keeps the result an observed distance.
    const auto mid = d.begin() + static_cast<std::ptrdiff_t>((d.size() - 1) / 2);
    std::nth_element(d.begin(), mid, d.end());
    return *mid > 0.0 ? *mid : 1.0;
}

ad::Node relation_matrix(const ad::Node& z, DistanceKind kind, double sigma) {
    switch (kind) {
        case DistanceKind::sq_euclidean:
            return ad::pairwise_sq_dist(z);
        case DistanceKind::cosine: {
            const ad::Node unit = ad::row_normalize(z, kCosineNormFloor);
            return ad::matmul(unit, ad::transpose(unit));
        }
        case DistanceKind::rbf_gram:
            return ad::exp(ad::scale(ad::pairwise_sq_dist(z), -1.0 / (2.0 * sigma * sigma)));
        case DistanceKind::rkd_unmasked: {
            const std::size_t n = z.rows();
            Matrix off(n, n, 1.0);
            for (std::size_t i = 0; i < n; ++i) off(i, i) = 0.0;
            const ad::Node d = ad::hadamard(ad::sqrt(ad::pairwise_sq_dist(z), kRkdSqrtEps), ad::constant(off));
            if (n < 2) return d;
            const ad::Node mean = ad::scale(ad::sum(d), 1.0 / static_cast<double>(n * (n - 1)));
            if (mean.value().item() == 0.0) return d;
            return ad::divide(d, mean);
        }
    }
    throw ValueError("relation_matrix: bad distance kind");
}

Matrix relation_matrix(const Matrix& z, DistanceKind kind, double sigma) {
    return relation_matrix(ad::constant(z), kind, sigma).value();
}

Matrix one_hot(const Matrix& labels, std::size_t classes) {
    if (labels.cols() != 1) throw ShapeError("one_hot: labels must be N x 1");
    Matrix out(labels.rows(), classes);
    for (std::size_t i = 0; i < labels.rows(); ++i) {
        const double y = labels(i, 0);
        if (!(y >= 0.0 && y < static_cast<double>(classes)) || y != std::floor(y)) {
            throw ValueError("one_hot: label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
        }
        out(i, static_cast<std::size_t>(y)) = 1.0;
    }
    return out;
}

ad::Node current_task_loss(const ad::Node& logits, const Matrix& one_hot_labels) {
    return ad::softmax_cross_entropy(logits, one_hot_labels);
}

ad::Node old_task_loss(const std::vector<ad::Node>& student_logits, const std::vector<Matrix>& teacher_logits,
                       double temperature, PseudolabelKind kind) {
    if (!(temperature > 0.0)) throw ValueError("old_task_loss: temperature must be positive");
    if (student_logits.size() != teacher_logits.size()) {
        throw ShapeError("old_task_loss: " + std::to_string(student_logits.size()) + " student heads vs " +
                         std::to_string(teacher_logits.size()) + " teacher heads");
    }
    ad::Node total = ad::constant(Matrix::scalar(0.0));
    for (std::size_t o = 0; o < student_logits.size(); ++o) {
        if (!student_logits[o].value().same_shape(teacher_logits[o])) {
            throw ShapeError("old_task_loss: shape mismatch for old task " + std::to_string(o));
        }
        Matrix targets = ad::softmax_rows((1.0 / temperature) * teacher_logits[o]);
        if (kind == PseudolabelKind::hard) {
            for (std::size_t i = 0; i < targets.rows(); ++i) {
                auto r = targets.row(i);
                const auto best = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
                std::fill(r.begin(), r.end(), 0.0);
                r[best] = 1.0;
            }
        }
        const ad::Node scaled = temperature == 1.0 ? student_logits[o] : ad::scale(student_logits[o], 1.0 / temperature);
        total = ad::add(total, ad::softmax_cross_entropy(scaled, targets));
    }
    return total;
}

namespace {

struct RelationDiff {
    ad::Node diff;
    double inv_n2;
};

RelationDiff relation_diff(const ad::Node& z_new, const Matrix& z_old, const DistanceVariant& variant) {
    variant.validate();
    if (!z_new.value().same_shape(z_old)) {
        throw ShapeError("preservation: student " + z_new.value().shape_string() + " vs teacher " +
                         z_old.shape_string());
    }
    const std::size_t n = z_old.rows();
    if (n == 0) throw ShapeError("preservation: empty batch");
    const double sigma = variant.kind == DistanceKind::rbf_gram ? rbf_sigma(variant, z_old) : 1.0;
    const Matrix old_rel = relation_matrix(z_old, variant.kind, sigma);
    const ad::Node new_rel = relation_matrix(z_new, variant.kind, sigma);
    return {ad::sub(new_rel, ad::constant(old_rel)), 1.0 / static_cast<double>(n * n)};
}

}  // namespace

ad::Node preservation_loss(const ad::Node& z_new, const Matrix& z_old, const DistanceVariant& variant) {
    const auto [diff, inv_n2] = relation_diff(z_new, z_old, variant);
    return ad::scale(ad::frobenius_sq(diff), inv_n2);
}

Mask dwdp_mask(const Matrix& labels) {
    if (labels.cols() != 1) throw ShapeError("dwdp_mask: labels must be N x 1");
    const std::size_t n = labels.rows();
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(i, j) = labels(i, 0) == labels(j, 0) ? 1.0 : 0.0;
    return Mask(std::move(m));
}

ad::Node dwdp_loss(const ad::Node& z_new, const Matrix& z_old, const Mask& mask, const DistanceVariant& variant) {
    if (mask.size() != z_old.rows()) {
        throw ShapeError("dwdp_loss: mask " + mask.matrix().shape_string() + " for batch of " +
                         std::to_string(z_old.rows()));
    }
    if (variant.kind == DistanceKind::rkd_unmasked) return preservation_loss(z_new, z_old, variant);
    const auto [diff, inv_n2] = relation_diff(z_new, z_old, variant);
    // Mask entries are 0/1, so m_ij * diff_ij^2 == (m_ij * diff_ij)^2.
    return ad::scale(ad::frobenius_sq(ad::hadamard(diff, ad::constant(mask.matrix()))), inv_n2);
}

ad::Node lwp_total(const ad::Node& l_cur, const ad::Node& l_old, const ad::Node& l_dwdp, const LossWeights& w) {
    w.validate();
    for (const auto* n : {&l_cur, &l_old, &l_dwdp}) {
        if (n->rows() != 1 || n->cols() != 1) throw ShapeError("lwp_total: components must be scalars");
    }
    return ad::add(ad::add(ad::scale(l_cur, w.lambda_c), ad::scale(l_old, w.lambda_o)),
                   ad::scale(l_dwdp, w.lambda_d));
}

}  // namespace lwp::loss
