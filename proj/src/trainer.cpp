#include "lwp/trainer.hpp"

#include "lwp/errors.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

namespace lwp::train {

std::string_view to_string(Mode m) {
    switch (m) {
        case Mode::lwp: return "lwp";
        case Mode::lwf: return "lwf";
        case Mode::naive_ft: return "naive_ft";
        case Mode::stl: return "stl";
    }
    return "?";
}

Mode parse_mode(std::string_view s) {
    for (auto m : {Mode::lwp, Mode::lwf, Mode::naive_ft, Mode::stl}) {
        if (s == to_string(m)) return m;
    }
    throw ValueError("unknown mode '" + std::string(s) + "' (expected lwp, lwf, naive_ft or stl)");
}

std::vector<std::size_t> ModelSpec::layer_sizes(std::size_t input_dim) const {
    std::vector<std::size_t> sizes{input_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(latent);
    return sizes;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ValueError("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw ValueError("TrainConfig: batch_size must be >= 1");
    if (patience < 1) throw ValueError("TrainConfig: patience must be >= 1");
    if (!(temperature > 0.0)) throw ValueError("TrainConfig: temperature must be positive");
    if (model.latent < 1) throw ValueError("TrainConfig: latent dim must be >= 1");
    if (ece_bins < 2) throw ValueError("TrainConfig: ece_bins must be >= 2");
    weights.validate();
    variant.validate();
    if (effective_weights().lambda_d > 0.0 && batch_size < 2) {
        throw ValueError("TrainConfig: batch_size must be >= 2 when the preservation loss is active");
    }
}

loss::LossWeights TrainConfig::effective_weights() const {
    loss::LossWeights w = weights;
    switch (mode) {
        case Mode::lwp: break;
        case Mode::lwf: w.lambda_d = 0.0; break;
        case Mode::naive_ft:
        case Mode::stl:
            w.lambda_o = 0.0;
            w.lambda_d = 0.0;
            break;
    }
    return w;
}

bool early_stop(std::span<const double> val_losses, std::size_t patience) {
    if (patience < 1) throw ValueError("early_stop: patience must be >= 1");
    if (val_losses.empty()) return false;
    std::size_t best = 0;
    for (std::size_t i = 1; i < val_losses.size(); ++i) {
        if (val_losses[i] < val_losses[best]) best = i;
    }
    return val_losses.size() - 1 - best >= patience;
}

namespace {

Matrix teacher_head_logits(const model::ModelState& t, const Matrix& z, std::size_t head) {
    const auto& h = t.heads[head];
    return ad::add_row(ad::matmul(ad::constant(z), ad::constant(h.weight)), ad::constant(h.bias)).value();
}

bool uses_teacher(std::size_t task, const loss::LossWeights& w) {
    return task > 0 && (w.lambda_o > 0.0 || w.lambda_d > 0.0);
}

}  // namespace

ad::Node batch_loss(const model::ModelGraph& graph, const model::TeacherSnapshot* teacher, const Matrix& x,
                    const Matrix& y, std::size_t task, std::size_t classes, const TrainConfig& cfg,
                    const loss::LossWeights& weights) {
    const ad::Node z = graph.encode(x);
    const ad::Node logits = graph.head_logits(z, task);
    const ad::Node l_cur = loss::current_task_loss(logits, loss::one_hot(y, classes));
    ad::Node l_old = ad::constant(Matrix::scalar(0.0));
    ad::Node l_dwdp = ad::constant(Matrix::scalar(0.0));
    if (uses_teacher(task, weights)) {
        const model::ModelState& t = teacher->state();
        const Matrix z_teacher = model::encode(t, x).value();
        if (weights.lambda_o > 0.0) {
            std::vector<ad::Node> student;
            std::vector<Matrix> pseudo;
            for (std::size_t o = 0; o < task; ++o) {
                student.push_back(graph.head_logits(z, o));
                pseudo.push_back(teacher_head_logits(t, z_teacher, o));
            }
            l_old = loss::old_task_loss(student, pseudo, cfg.temperature, cfg.pseudolabels);
        }
        if (weights.lambda_d > 0.0) {
            const loss::Mask mask = cfg.mask ? loss::dwdp_mask(y) : loss::Mask::all_ones(x.rows());
            l_dwdp = loss::dwdp_loss(z, z_teacher, mask, cfg.variant);
        }
    }
    return loss::lwp_total(l_cur, l_old, l_dwdp, weights);
}

RunRecord train_task(model::ModelState m, const model::TeacherSnapshot* teacher, const tasks::TaskSplit& data,
                     std::size_t task, const TrainConfig& cfg, Rng& rng, const EpochObserver& observer) {
    cfg.validate();
    const auto started = std::chrono::steady_clock::now();
    if (task >= m.heads.size()) throw ValueError("train_task: no head for task " + std::to_string(task));
    const loss::LossWeights w = cfg.effective_weights();
    if (uses_teacher(task, w)) {
        if (teacher == nullptr) {
            throw StateError("train_task: mode " + std::string(to_string(cfg.mode)) + " needs a teacher for task " +
                             std::to_string(task));
        }
        if (teacher->state().heads.size() < task) throw StateError("train_task: teacher is missing old-task heads");
    }
    const std::size_t n = data.train.size();
    if (n == 0) throw ValueError("train_task: empty training split");
    if (uses_teacher(task, w) && w.lambda_d > 0.0 && n < 2) {
        throw ValueError("train_task: preservation loss needs at least 2 training rows");
    }

    RunRecord rec;
    rec.task = task;
    Adam adam(cfg.adam);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const bool has_val = data.val.size() > 0;
    double best_val = std::numeric_limits<double>::infinity();
    std::optional<model::ModelState> best_state;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < n;) {
            std::size_t end = std::min(n, begin + cfg.batch_size);
            if (n - end == 1) end = n;
            const std::span<const std::size_t> idx(order.data() + begin, end - begin);
            const Matrix xb = gather_rows(data.train.x, idx);
            const Matrix yb = gather_rows(data.train.y, idx);
            try {
                const model::ModelGraph graph(m);
                const ad::Node total = batch_loss(graph, teacher, xb, yb, task, data.classes, cfg, w);
                ad::backward(total);
                const auto grads = graph.gradients();
                for (const auto& g : grads) require_finite(g, "gradient");
                const auto params = m.parameters();
                adam.step(params, grads);
                epoch_loss += total.value().item();
            } catch (const NumericError& e) {
                throw NumericError("task " + std::to_string(task) + " epoch " + std::to_string(epoch) + " step " +
                                   std::to_string(rec.steps) + ": " + e.what());
            }
            ++rec.steps;
            ++batches;
            begin = end;
        }
        rec.train_losses.push_back(epoch_loss / static_cast<double>(batches));

        if (has_val) {
            const model::ModelGraph graph(m);
            double val = 0.0;
            try {
                val = batch_loss(graph, teacher, data.val.x, data.val.y, task, data.classes, cfg, w).value().item();
            } catch (const NumericError& e) {
                throw NumericError("task " + std::to_string(task) + " epoch " + std::to_string(epoch) +
                                   " validation: " + e.what());
            }
            rec.val_losses.push_back(val);
            if (val < best_val) {
                best_val = val;
                best_state = m;
                rec.best_epoch = epoch;
            }
        } else {
            rec.best_epoch = epoch;
        }
        if (observer) observer(epoch, m);
        if (has_val && early_stop(rec.val_losses, cfg.patience)) {
            rec.stopped_early = true;
            break;
        }
    }
    if (best_state) m = std::move(*best_state);
    rec.model = std::move(m);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return rec;
}

ExperimentResult run_sequence(const tasks::TaskStream& stream, const TrainConfig& cfg,
                              const TaskObserver& on_task_end) {
    stream.validate();
    cfg.validate();
    const Rng root(cfg.seed);
    Rng init_rng = root.derive(1);
    Rng shuffle_rng = root.derive(2);
    const std::size_t T = stream.size();
    const auto sizes = cfg.model.layer_sizes(stream.input_dim);

    ExperimentResult result;
    result.mode = cfg.mode;
    result.seed = cfg.seed;
    result.accuracy = metrics::AccuracyMatrix(T);
    for (const auto& t : stream.tasks) result.task_names.push_back(t.name);

    auto accuracy_of = [&](const model::ModelState& m, std::size_t head, std::size_t task) {
        const auto& test = stream.tasks[task].test;
        if (test.size() == 0) return 0.0;
        return metrics::accuracy(model::predict(m, test.x, head).value(), test.y);
    };

    if (cfg.mode == Mode::stl) {
        std::vector<model::ModelState> models;
        for (std::size_t t = 0; t < T; ++t) {
            model::ModelState fresh = model::make_model(sizes, cfg.model.activation, init_rng);
            fresh = model::add_head(std::move(fresh), stream.tasks[t].classes, init_rng);
            RunRecord rec = train_task(std::move(fresh), nullptr, stream.tasks[t], 0, cfg, shuffle_rng);
            models.push_back(rec.model);
            if (on_task_end) on_task_end(t, rec.model);
            result.records.push_back(std::move(rec));
            for (std::size_t i = 0; i <= t; ++i) result.accuracy.set(t, i, accuracy_of(models[i], 0, i));
        }
        for (std::size_t i = 0; i < T; ++i) {
            const auto& test = stream.tasks[i].test;
            result.ece_per_task.push_back(
                test.size() ? metrics::ece(model::predict(models[i], test.x, 0).value(), test.y, cfg.ece_bins) : 0.0);
        }
        result.final_model = models.back();
        return result;
    }

    model::ModelState m = model::make_model(sizes, cfg.model.activation, init_rng);
    for (std::size_t t = 0; t < T; ++t) {
        std::optional<model::TeacherSnapshot> teacher;
        if (t > 0) teacher = model::snapshot(m);
        m = model::add_head(std::move(m), stream.tasks[t].classes, init_rng);
        const bool pass_teacher = uses_teacher(t, cfg.effective_weights());
        RunRecord rec = train_task(std::move(m), pass_teacher ? &*teacher : nullptr, stream.tasks[t], t, cfg,
                                   shuffle_rng);
        m = rec.model;
        if (teacher) {
            const auto& test = stream.tasks[t].test;
            if (test.size() > 0) {
                result.gram_deviation_trace.push_back(metrics::gram_deviation(
                    model::encode(m, test.x).value(), model::encode(teacher->state(), test.x).value(),
                    loss::DistanceVariant::sq_euclidean()));
            }
        }
        if (on_task_end) on_task_end(t, m);
        result.records.push_back(std::move(rec));
        for (std::size_t i = 0; i <= t; ++i) result.accuracy.set(t, i, accuracy_of(m, i, i));
    }
    for (std::size_t i = 0; i < T; ++i) {
        const auto& test = stream.tasks[i].test;
        result.ece_per_task.push_back(test.size() ? metrics::ece(model::predict(m, test.x, i).value(), test.y, cfg.ece_bins) : 0.0);
    }
    result.final_model = std::move(m);
    return result;
}

}  // namespace lwp::train
