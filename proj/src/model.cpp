#include "lwp/model.hpp"

#include "lwp/errors.hpp"

#include <cmath>
#include <fstream>

namespace lwp::model {

std::string_view to_string(Activation a) {
    return a == Activation::tanh ? "tanh" : "relu";
}

Activation parse_activation(std::string_view s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    throw ValueError("unknown activation '" + std::string(s) + "' (expected tanh or relu)");
}

std::vector<Matrix*> ModelState::parameters() {
    std::vector<Matrix*> out;
    for (auto& l : encoder.layers) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    for (auto& h : heads) {
        out.push_back(&h.weight);
        out.push_back(&h.bias);
    }
    return out;
}

std::vector<const Matrix*> ModelState::parameters() const {
    std::vector<const Matrix*> out;
    for (const auto& l : encoder.layers) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    for (const auto& h : heads) {
        out.push_back(&h.weight);
        out.push_back(&h.bias);
    }
    return out;
}

bool ModelState::operator==(const ModelState& o) const {
    if (encoder.layer_sizes != o.encoder.layer_sizes || encoder.activation != o.encoder.activation ||
        heads.size() != o.heads.size()) {
        return false;
    }
    const auto a = parameters();
    const auto b = o.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(*a[i] == *b[i])) return false;
    }
    return true;
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

namespace {

Matrix glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = glorot_limit(fan_in, fan_out);
    Matrix w(fan_in, fan_out);
    for (double& v : w.data()) v = rng.uniform(-a, a);
    return w;
}

}  // namespace

ModelState make_model(const std::vector<std::size_t>& layer_sizes, Activation activation, Rng& rng) {
    if (layer_sizes.size() < 2) throw ValueError("make_model: need at least input and latent sizes");
    for (std::size_t s : layer_sizes) {
        if (s == 0) throw ValueError("make_model: layer sizes must be positive");
    }
    ModelState m;
    m.encoder.layer_sizes = layer_sizes;
    m.encoder.activation = activation;
    for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
        m.encoder.layers.push_back({glorot(layer_sizes[i], layer_sizes[i + 1], rng), Matrix(1, layer_sizes[i + 1])});
    }
    return m;
}

ModelState add_head(ModelState m, std::size_t classes, Rng& rng) {
    if (classes < 2) throw ValueError("add_head: classes must be >= 2, got " + std::to_string(classes));
    const std::size_t latent = m.encoder.latent_dim();
    m.heads.push_back({m.heads.size(), glorot(latent, classes, rng), Matrix(1, classes)});
    return m;
}

namespace {

template <typename Leaf>
ad::Node run_encoder(const Encoder& e, const Matrix& x, Leaf leaf) {
    if (x.cols() != e.input_dim()) {
        throw ShapeError("encode: input has " + std::to_string(x.cols()) + " columns, encoder expects " +
                         std::to_string(e.input_dim()));
    }
    ad::Node h = ad::constant(x);
    for (std::size_t i = 0; i < e.layers.size(); ++i) {
        h = ad::add_row(ad::matmul(h, leaf(2 * i)), leaf(2 * i + 1));
        if (i + 1 < e.layers.size()) {
            h = e.activation == Activation::tanh ? ad::tanh(h) : ad::relu(h);
        }
    }
    return h;
}

void check_task(const ModelState& m, std::size_t task) {
    if (task >= m.heads.size()) {
        throw ValueError("unknown task index " + std::to_string(task) + " (model has " +
                         std::to_string(m.heads.size()) + " heads)");
    }
}

}  // namespace

ad::Node encode(const ModelState& m, const Matrix& x) {
    const auto params = m.parameters();
    return run_encoder(m.encoder, x, [&](std::size_t i) { return ad::constant(*params[i]); });
}

ad::Node predict(const ModelState& m, const Matrix& x, std::size_t task) {
    check_task(m, task);
    const Head& h = m.heads[task];
    return ad::add_row(ad::matmul(encode(m, x), ad::constant(h.weight)), ad::constant(h.bias));
}

ModelGraph::ModelGraph(const ModelState& m) : state_(&m) {
    for (const Matrix* p : m.parameters()) params_.push_back(ad::parameter(*p));
}

ad::Node ModelGraph::encode(const Matrix& x) const {
    return run_encoder(state_->encoder, x, [&](std::size_t i) { return params_[i]; });
}

ad::Node ModelGraph::head_logits(const ad::Node& z, std::size_t task) const {
    check_task(*state_, task);
    const std::size_t base = 2 * state_->encoder.layers.size() + 2 * task;
    return ad::add_row(ad::matmul(z, params_[base]), params_[base + 1]);
}

std::vector<Matrix> ModelGraph::gradients() const {
    std::vector<Matrix> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.grad());
    return out;
}

TeacherSnapshot snapshot(const ModelState& m) {
    if (m.heads.empty()) throw StateError("snapshot: model has no trained task");
    return TeacherSnapshot(m);
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()},
            {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
             j.at("data").get<std::vector<double>>());
    require_finite(m, "checkpoint");
    return m;
}

}  // namespace

nlohmann::json to_json(const ModelState& m) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : m.encoder.layers) {
        layers.push_back({{"weight", matrix_to_json(l.weight)}, {"bias", matrix_to_json(l.bias)}});
    }
    nlohmann::json heads = nlohmann::json::array();
    for (const auto& h : m.heads) {
        heads.push_back({{"task", h.task}, {"weight", matrix_to_json(h.weight)}, {"bias", matrix_to_json(h.bias)}});
    }
    return {{"format", "lwp-model"},
            {"version", 1},
            {"layer_sizes", m.encoder.layer_sizes},
            {"activation", std::string(to_string(m.encoder.activation))},
            {"encoder", layers},
            {"heads", heads},
            {"task_count", m.heads.size()}};
}

ModelState from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "lwp-model") throw FormatError("checkpoint: unexpected format tag");
        ModelState m;
        m.encoder.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
        m.encoder.activation = parse_activation(j.at("activation").get<std::string>());
        const auto& sizes = m.encoder.layer_sizes;
        if (sizes.size() < 2) throw FormatError("checkpoint: need at least two layer sizes");
        const auto& layers = j.at("encoder");
        if (layers.size() + 1 != sizes.size()) throw FormatError("checkpoint: layer count mismatch");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            DenseLayer l{matrix_from_json(layers[i].at("weight")), matrix_from_json(layers[i].at("bias"))};
            if (l.weight.rows() != sizes[i] || l.weight.cols() != sizes[i + 1] || l.bias.rows() != 1 ||
                l.bias.cols() != sizes[i + 1]) {
                throw FormatError("checkpoint: layer " + std::to_string(i) + " shape mismatch");
            }
            m.encoder.layers.push_back(std::move(l));
        }
        for (const auto& hj : j.at("heads")) {
            Head h{hj.at("task").get<std::size_t>(), matrix_from_json(hj.at("weight")), matrix_from_json(hj.at("bias"))};
            if (h.task != m.heads.size() || h.weight.rows() != sizes.back() || h.classes() < 2 ||
                h.bias.rows() != 1 || h.bias.cols() != h.classes()) {
                throw FormatError("checkpoint: head " + std::to_string(m.heads.size()) + " malformed");
            }
            m.heads.push_back(std::move(h));
        }
        if (j.at("task_count").get<std::size_t>() != m.heads.size()) {
            throw FormatError("checkpoint: task_count does not match head list");
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
}

void save_checkpoint(const ModelState& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out << to_json(m).dump() << '\n';
}

ModelState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read checkpoint " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

}  // namespace lwp::model
