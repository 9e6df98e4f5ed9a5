#pragma once

#include "lwp/autodiff.hpp"
#include "lwp/matrix.hpp"
#include "lwp/rng.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace lwp::model {

enum class Activation { tanh, relu };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);

struct DenseLayer {
    Matrix weight;  // fan_in x fan_out
    Matrix bias;    // 1 x fan_out
};

/// Shared feature extractor. Hidden layers apply `activation`; the final
/// (latent) layer is affine, so a one-layer encoder is a linear map.
struct Encoder {
    std::vector<std::size_t> layer_sizes;  // input, hidden..., latent
    std::vector<DenseLayer> layers;
    Activation activation = Activation::tanh;

    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t latent_dim() const { return layer_sizes.back(); }
};

/// Per-task linear projection from the latent space to class logits.
struct Head {
    std::size_t task = 0;
    Matrix weight;  // latent x classes
    Matrix bias;    // 1 x classes

    std::size_t classes() const { return weight.cols(); }
};

struct ModelState {
    Encoder encoder;
    std::vector<Head> heads;

    std::size_t task_count() const { return heads.size(); }

    /// Every trainable matrix, encoder layers (weight, bias) first, then
    /// heads in task order. ModelGraph::parameters() uses the same order.
    std::vector<Matrix*> parameters();
    std::vector<const Matrix*> parameters() const;

    bool operator==(const ModelState&) const;
};

/// Glorot-uniform half-width sqrt(6 / (fan_in + fan_out)).
double glorot_limit(std::size_t fan_in, std::size_t fan_out);

/// Encoder with Glorot-uniform weights and zero biases, no heads.
ModelState make_model(const std::vector<std::size_t>& layer_sizes, Activation activation, Rng& rng);

/// Appends a head for the next task index. Weights Glorot-uniform, bias zero.
ModelState add_head(ModelState m, std::size_t classes, Rng& rng);

/// Inference forward passes; the returned nodes are constants.
ad::Node encode(const ModelState& m, const Matrix& x);
ad::Node predict(const ModelState& m, const Matrix& x, std::size_t task);

/// Model parameters lifted into graph leaves for one training step.
class ModelGraph {
public:
    explicit ModelGraph(const ModelState& m);

    ad::Node encode(const Matrix& x) const;
    ad::Node head_logits(const ad::Node& z, std::size_t task) const;
    ad::Node predict(const Matrix& x, std::size_t task) const { return head_logits(encode(x), task); }

    const std::vector<ad::Node>& parameters() const { return params_; }
    std::vector<Matrix> gradients() const;

private:
    const ModelState* state_;
    std::vector<ad::Node> params_;
};

/// Frozen copy of a model taken at a task boundary.
class TeacherSnapshot {
public:
    explicit TeacherSnapshot(ModelState m) : state_(std::move(m)) {}
    const ModelState& state() const { return state_; }

private:
    ModelState state_;
};

/// Requires at least one head (a trained task).
TeacherSnapshot snapshot(const ModelState& m);

// Checkpoint JSON. Doubles are written in shortest round-trip form, so
// load(save(m)) == m bitwise.
nlohmann::json to_json(const ModelState& m);
ModelState from_json(const nlohmann::json& j);
void save_checkpoint(const ModelState& m, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace lwp::model
