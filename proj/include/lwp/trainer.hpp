#pragma once

#include "lwp/losses.hpp"
#include "lwp/metrics.hpp"
#include "lwp/model.hpp"
#include "lwp/optimizer.hpp"
#include "lwp/rng.hpp"
#include "lwp/tasks.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace lwp::train {

/// lwp: all three terms. lwf: distillation only (lambda_d = 0).
/// naive_ft: current-task loss only. stl: a fresh model per task.
enum class Mode { lwp, lwf, naive_ft, stl };

std::string_view to_string(Mode m);
Mode parse_mode(std::string_view s);

struct ModelSpec {
    std::vector<std::size_t> hidden{64, 64};
    std::size_t latent = 16;
    model::Activation activation = model::Activation::tanh;

    std::vector<std::size_t> layer_sizes(std::size_t input_dim) const;
};

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 64;
    AdamOptions adam{};
    loss::LossWeights weights{};
    loss::DistanceVariant variant{};
    bool mask = true;
    double temperature = 1.0;
    loss::PseudolabelKind pseudolabels = loss::PseudolabelKind::soft;
    std::size_t patience = 5;
    std::uint64_t seed = 0;
    Mode mode = Mode::lwp;
    ModelSpec model{};
    std::size_t ece_bins = 10;

    void validate() const;
    /// Configured weights with the terms the mode disables set to zero.
    loss::LossWeights effective_weights() const;
};

struct RunRecord {
    std::size_t task = 0;
    std::vector<double> train_losses;  // mean mini-batch composite loss per epoch
    std::vector<double> val_losses;    // composite loss on the whole val split per epoch
    std::size_t best_epoch = 0;        // 0-based; weights are rolled back to it
    bool stopped_early = false;
    std::size_t steps = 0;
    double wall_seconds = 0.0;
    model::ModelState model;
};

/// True iff the minimum of `val_losses` (first occurrence) is at least
/// `patience` epochs old. patience must be >= 1.
bool early_stop(std::span<const double> val_losses, std::size_t patience);

/// Called after every epoch with the 0-based epoch index and current weights.
using EpochObserver = std::function<void(std::size_t epoch, const model::ModelState&)>;

/// Trains head `task` (which must already exist) and the shared encoder.
///
/// Per epoch the training rows are Fisher-Yates shuffled with `rng` and cut
/// into mini-batches of cfg.batch_size; a trailing batch of one row is folded
/// into the previous batch. Each batch composes
///   lambda_c * CE(current head) + lambda_o * distillation(old heads)
///   + lambda_d * dwdp(z, teacher z)
/// and takes one Adam step. The teacher runs as constants, so only student
/// parameters get gradients. With a non-empty val split the composite val
/// loss drives early stopping and the best-epoch weights are restored.
RunRecord train_task(model::ModelState m, const model::TeacherSnapshot* teacher, const tasks::TaskSplit& data,
                     std::size_t task, const TrainConfig& cfg, Rng& rng, const EpochObserver& observer = {});

/// Composite loss of one batch under `graph`'s parameters.
ad::Node batch_loss(const model::ModelGraph& graph, const model::TeacherSnapshot* teacher, const Matrix& x,
                    const Matrix& y, std::size_t task, std::size_t classes, const TrainConfig& cfg,
                    const loss::LossWeights& weights);

struct ExperimentResult {
    Mode mode = Mode::lwp;
    std::uint64_t seed = 0;
    std::vector<std::string> task_names;
    metrics::AccuracyMatrix accuracy{0};
    std::vector<double> ece_per_task;
    /// Entry t - 1 is the sq_euclidean gram_deviation between student and
    /// teacher latents on task t's test inputs at the end of task t.
    /// Empty for stl, which has no teacher.
    std::vector<double> gram_deviation_trace;
    std::vector<RunRecord> records;
    /// Final model (stl: the last task's model).
    model::ModelState final_model;
};

/// Called at each task boundary with the task index and trained model.
using TaskObserver = std::function<void(std::size_t task, const model::ModelState&)>;

/// Runs the task sequence. The model is initialised from
/// Rng(cfg.seed).derive(1); shuffling uses Rng(cfg.seed).derive(2).
/// Before task t > 0 the model is snapshotted as teacher and a head is added;
/// after each task every head seen so far is evaluated on its test split.
ExperimentResult run_sequence(const tasks::TaskStream& stream, const TrainConfig& cfg,
                              const TaskObserver& on_task_end = {});

}  // namespace lwp::train
