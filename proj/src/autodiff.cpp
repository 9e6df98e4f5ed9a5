#include "lwp/autodiff.hpp"

#include "lwp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace lwp::ad {

namespace {

using Rule = std::function<void(NodeData&)>;

Node make_node(Matrix value, std::string op, std::vector<std::shared_ptr<NodeData>> parents, Rule rule) {
    require_finite(value, op.c_str());
    auto d = std::make_shared<NodeData>();
    d->grad = Matrix(value.rows(), value.cols());
    d->value = std::move(value);
    d->op = std::move(op);
    d->requires_grad = std::any_of(parents.begin(), parents.end(),
                                   [](const auto& p) { return p->requires_grad; });
    if (d->requires_grad) {
        d->parents = std::move(parents);
        d->backward_rule = std::move(rule);
    }
    return Node(std::move(d));
}

void accumulate(NodeData& target, const Matrix& g) {
    if (!target.requires_grad) return;
    auto t = target.grad.data();
    auto s = g.data();
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += s[i];
}

void check_same_shape(const Node& a, const Node& b, const char* op) {
    if (!a.value().same_shape(b.value())) {
        throw ShapeError(std::string(op) + ": " + a.value().shape_string() + " vs " +
                         b.value().shape_string());
    }
}

template <typename Fwd, typename Deriv>
Node unary(const Node& a, const char* op, Fwd fwd, Deriv deriv) {
    Matrix out = a.value();
    for (double& v : out.data()) v = fwd(v);
    return make_node(std::move(out), op, {a.handle()}, [deriv](NodeData& self) {
        NodeData& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto g = self.grad.data();
        auto x = p.value.data();
        auto y = self.value.data();
        auto pg = p.grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * deriv(x[i], y[i]);
    });
}

}  // namespace

Node parameter(Matrix value) {
    require_finite(value, "parameter");
    auto d = std::make_shared<NodeData>();
    d->grad = Matrix(value.rows(), value.cols());
    d->value = std::move(value);
    d->op = "parameter";
    d->requires_grad = true;
    return Node(std::move(d));
}

Node constant(Matrix value) {
    require_finite(value, "constant");
    auto d = std::make_shared<NodeData>();
    d->grad = Matrix(value.rows(), value.cols());
    d->value = std::move(value);
    d->op = "constant";
    return Node(std::move(d));
}

Node matmul(const Node& a, const Node& b) {
    Matrix out = lwp::matmul(a.value(), b.value());
    return make_node(std::move(out), "matmul", {a.handle(), b.handle()}, [](NodeData& self) {
        NodeData& pa = *self.parents[0];
        NodeData& pb = *self.parents[1];
        if (pa.requires_grad) accumulate(pa, lwp::matmul(self.grad, lwp::transpose(pb.value)));
        if (pb.requires_grad) accumulate(pb, lwp::matmul(lwp::transpose(pa.value), self.grad));
    });
}

Node transpose(const Node& a) {
    return make_node(lwp::transpose(a.value()), "transpose", {a.handle()}, [](NodeData& self) {
        accumulate(*self.parents[0], lwp::transpose(self.grad));
    });
}

Node add(const Node& a, const Node& b) {
    check_same_shape(a, b, "add");
    return make_node(a.value() + b.value(), "add", {a.handle(), b.handle()}, [](NodeData& self) {
        accumulate(*self.parents[0], self.grad);
        accumulate(*self.parents[1], self.grad);
    });
}

Node sub(const Node& a, const Node& b) {
    check_same_shape(a, b, "sub");
    return make_node(a.value() - b.value(), "sub", {a.handle(), b.handle()}, [](NodeData& self) {
        accumulate(*self.parents[0], self.grad);
        accumulate(*self.parents[1], -1.0 * self.grad);
    });
}

Node add_row(const Node& a, const Node& b) {
    if (b.rows() != 1 || b.cols() != a.cols()) {
        throw ShapeError("add_row: " + a.value().shape_string() + " with row " + b.value().shape_string());
    }
    Matrix out = a.value();
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += b.value()(0, j);
    }
    return make_node(std::move(out), "add_row", {a.handle(), b.handle()}, [](NodeData& self) {
        accumulate(*self.parents[0], self.grad);
        NodeData& pb = *self.parents[1];
        if (!pb.requires_grad) return;
        for (std::size_t i = 0; i < self.grad.rows(); ++i)
            for (std::size_t j = 0; j < self.grad.cols(); ++j) pb.grad(0, j) += self.grad(i, j);
    });
}

Node hadamard(const Node& a, const Node& b) {
    check_same_shape(a, b, "hadamard");
    return make_node(lwp::hadamard(a.value(), b.value()), "hadamard", {a.handle(), b.handle()},
                     [](NodeData& self) {
                         NodeData& pa = *self.parents[0];
                         NodeData& pb = *self.parents[1];
                         if (pa.requires_grad) accumulate(pa, lwp::hadamard(self.grad, pb.value));
                         if (pb.requires_grad) accumulate(pb, lwp::hadamard(self.grad, pa.value));
                     });
}

Node scale(const Node& a, double s) {
    return make_node(s * a.value(), "scale", {a.handle()}, [s](NodeData& self) {
        accumulate(*self.parents[0], s * self.grad);
    });
}

Node divide(const Node& a, const Node& s) {
    if (s.rows() != 1 || s.cols() != 1) throw ShapeError("divide: divisor must be 1x1");
    const double denom = s.value().item();
    if (denom == 0.0) throw NumericError("divide: division by zero");
    return make_node((1.0 / denom) * a.value(), "divide", {a.handle(), s.handle()}, [](NodeData& self) {
        NodeData& pa = *self.parents[0];
        NodeData& ps = *self.parents[1];
        const double d = ps.value.item();
        if (pa.requires_grad) accumulate(pa, (1.0 / d) * self.grad);
        if (ps.requires_grad) {
            // d(a/s)/ds = -a/s^2
            double acc = 0.0;
            auto g = self.grad.data();
            auto x = pa.value.data();
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x[i];
            ps.grad(0, 0) -= acc / (d * d);
        }
    });
}

Node tanh(const Node& a) {
    return unary(a, "tanh", [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
}

Node relu(const Node& a) {
    return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Node exp(const Node& a) {
    return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Node sqrt(const Node& a, double eps) {
    for (double v : a.value().data()) {
        if (!(v + eps > 0.0)) throw NumericError("sqrt: non-positive argument");
    }
    return unary(a, "sqrt", [eps](double x) { return std::sqrt(x + eps); },
                 [](double, double y) { return 0.5 / y; });
}

Node sum(const Node& a) {
    return make_node(Matrix::scalar(lwp::sum(a.value())), "sum", {a.handle()}, [](NodeData& self) {
        NodeData& p = *self.parents[0];
        if (!p.requires_grad) return;
        const double g = self.grad(0, 0);
        for (double& v : p.grad.data()) v += g;
    });
}

Node pairwise_sq_dist(const Node& z) {
    const Matrix& zv = z.value();
    const std::size_t n = zv.rows();
    if (n == 0) throw ShapeError("pairwise_sq_dist: empty batch");
    std::vector<double> norms(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (double v : zv.row(i)) norms[i] += v * v;
    Matrix gram = lwp::matmul(zv, lwp::transpose(zv));
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            out(i, j) = std::max(0.0, norms[i] + norms[j] - 2.0 * gram(i, j));
        }
    }
    return make_node(std::move(out), "pairwise_sq_dist", {z.handle()}, [](NodeData& self) {
        NodeData& p = *self.parents[0];
        if (!p.requires_grad) return;
        // grad_i = 2 * sum_j H_ij (z_i - z_j) with H = G + G^T
        const Matrix h = self.grad + lwp::transpose(self.grad);
        const Matrix hz = lwp::matmul(h, p.value);
        const std::size_t n = h.rows();
        for (std::size_t i = 0; i < n; ++i) {
            double rowsum = 0.0;
            for (double v : h.row(i)) rowsum += v;
            for (std::size_t k = 0; k < p.value.cols(); ++k) {
                p.grad(i, k) += 2.0 * (rowsum * p.value(i, k) - hz(i, k));
            }
        }
    });
}

Node row_normalize(const Node& a, double eps) {
    const Matrix& av = a.value();
    Matrix out = av;
    std::vector<double> norms(av.rows());
    for (std::size_t i = 0; i < av.rows(); ++i) {
        double s = 0.0;
        for (double v : av.row(i)) s += v * v;
        norms[i] = std::max(std::sqrt(s), eps);
        for (double& v : out.row(i)) v /= norms[i];
    }
    return make_node(std::move(out), "row_normalize", {a.handle()},
                     [norms = std::move(norms), eps](NodeData& self) {
                         NodeData& p = *self.parents[0];
                         if (!p.requires_grad) return;
                         for (std::size_t i = 0; i < self.value.rows(); ++i) {
                             const auto g = self.grad.row(i);
                             const auto y = self.value.row(i);
                             auto pg = p.grad.row(i);
                             const bool clamped = norms[i] == eps;
                             double dot = 0.0;
                             if (!clamped)
                                 for (std::size_t k = 0; k < g.size(); ++k) dot += g[k] * y[k];
                             for (std::size_t k = 0; k < g.size(); ++k) {
                                 pg[k] += (g[k] - dot * y[k]) / norms[i];
                             }
                         }
                     });
}

Node frobenius_sq(const Node& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v * v;
    return make_node(Matrix::scalar(s), "frobenius_sq", {a.handle()}, [](NodeData& self) {
        NodeData& p = *self.parents[0];
        if (!p.requires_grad) return;
        const double g = self.grad(0, 0);
        auto pg = p.grad.data();
        auto x = p.value.data();
        for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += 2.0 * g * x[i];
    });
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out = logits;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        const double mx = *std::max_element(r.begin(), r.end());
        double z = 0.0;
        for (double& v : r) {
            v = std::exp(v - mx);
            z += v;
        }
        for (double& v : r) v /= z;
    }
    return out;
}

Node softmax_cross_entropy(const Node& logits, const Matrix& targets) {
    const Matrix& lv = logits.value();
    if (!lv.same_shape(targets)) {
        throw ShapeError("softmax_cross_entropy: logits " + lv.shape_string() + " vs targets " +
                         targets.shape_string());
    }
    if (lv.cols() < 2) throw ShapeError("softmax_cross_entropy: need at least 2 classes");
    if (lv.rows() == 0) throw ShapeError("softmax_cross_entropy: empty batch");
    for (std::size_t i = 0; i < targets.rows(); ++i) {
        double s = 0.0;
        for (double v : targets.row(i)) s += v;
        if (std::abs(s - 1.0) > 1e-6) {
            throw ValueError("softmax_cross_entropy: target row " + std::to_string(i) + " sums to " +
                             std::to_string(s));
        }
    }
    const std::size_t n = lv.rows();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = lv.row(i);
        const double mx = *std::max_element(r.begin(), r.end());
        double z = 0.0;
        for (double v : r) z += std::exp(v - mx);
        const double log_z = mx + std::log(z);
        const auto t = targets.row(i);
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (t[c] != 0.0) loss -= t[c] * (r[c] - log_z);
        }
    }
    loss /= static_cast<double>(n);
    return make_node(Matrix::scalar(loss), "softmax_cross_entropy", {logits.handle()},
                     [targets](NodeData& self) {
                         NodeData& p = *self.parents[0];
                         if (!p.requires_grad) return;
                         const double g = self.grad(0, 0) / static_cast<double>(p.value.rows());
                         const Matrix sm = softmax_rows(p.value);
                         auto pg = p.grad.data();
                         auto s = sm.data();
                         auto t = targets.data();
                         for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g * (s[i] - t[i]);
                     });
}

namespace {

std::vector<NodeData*> topo_order(NodeData* root) {
    enum class Mark { visiting, done };
    std::unordered_map<NodeData*, Mark> marks;
    std::vector<NodeData*> order;
    std::vector<std::pair<NodeData*, std::size_t>> stack{{root, 0}};
    marks[root] = Mark::visiting;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            NodeData* parent = node->parents[next++].get();
            auto it = marks.find(parent);
            if (it == marks.end()) {
                marks[parent] = Mark::visiting;
                stack.emplace_back(parent, 0);
            } else if (it->second == Mark::visiting) {
                throw StateError("backward: cycle detected at op '" + parent->op + "'");
            }
        } else {
            marks[node] = Mark::done;
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;  // parents before children
}

}  // namespace

void backward(const Node& loss) {
    if (!loss) throw StateError("backward: null node");
    NodeData& root = loss.data();
    if (root.value.rows() != 1 || root.value.cols() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + root.value.shape_string());
    }
    if (root.backward_done) {
        throw StateError("backward: already called on this graph; call reset_gradients first");
    }
    const auto order = topo_order(&root);
    root.grad(0, 0) = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodeData* n = *it;
        if (n->requires_grad && n->backward_rule) n->backward_rule(*n);
    }
    root.backward_done = true;
}

void reset_gradients(const Node& root) {
    if (!root) return;
    for (NodeData* n : topo_order(&root.data())) {
        for (double& v : n->grad.data()) v = 0.0;
    }
    root.data().backward_done = false;
}

}  // namespace lwp::ad
