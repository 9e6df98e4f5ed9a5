#include "lwp/experiment.hpp"

#include "lwp/metrics.hpp"
#include "lwp/svg.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace lwp::cli {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::uint64_t to_u64(const std::string& field, const std::string& s) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
        throw ConfigError(field, "expected a non-negative integer, got '" + s + "'");
    }
    return v;
}

std::size_t to_size(const std::string& field, const std::string& s) {
    return static_cast<std::size_t>(to_u64(field, s));
}

double to_double(const std::string& field, const std::string& s) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty() || !std::isfinite(v)) {
        throw ConfigError(field, "expected a number, got '" + s + "'");
    }
    return v;
}

bool to_bool(const std::string& field, const std::string& s) {
    if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
    if (s == "false" || s == "no" || s == "off" || s == "0") return false;
    throw ConfigError(field, "expected true or false, got '" + s + "'");
}

template <typename F>
auto rethrow_as_config(const std::string& field, F f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(field, e.what());
    }
}

void apply(ExperimentConfig& c, const std::string& section, const std::string& key, const std::string& v) {
    const std::string field = section + "." + key;
    auto& s = c.stream;
    auto& t = c.train;
    if (section == "experiment") {
        if (key == "modes") {
            c.modes.clear();
            for (const auto& m : split_list(v)) {
                c.modes.push_back(rethrow_as_config(field, [&] { return train::parse_mode(m); }));
            }
        } else if (key == "seeds") {
            c.seeds.clear();
            for (const auto& x : split_list(v)) c.seeds.push_back(to_u64(field, x));
        } else if (key == "output") {
            c.output = v;
        } else if (key == "workers") {
            c.workers = to_size(field, v);
        } else if (key == "checkpoints") {
            c.checkpoints = to_bool(field, v);
        } else if (key == "export_embeddings") {
            c.export_embeddings = to_bool(field, v);
        } else {
            throw ConfigError(field, "unknown key");
        }
    } else if (section == "stream") {
        if (key == "generator") {
            if (v != "toy" && v != "attribute" && v != "shift" && v != "csv") {
                throw ConfigError(field, "unknown generator '" + v + "' (expected toy, attribute, shift or csv)");
            }
            s.generator = v;
        } else if (key == "n") {
            s.n = to_size(field, v);
        } else if (key == "noise") {
            s.noise = to_double(field, v);
        } else if (key == "order") {
            if (v == "circles_first") {
                s.order = tasks::ToyOrder::circles_first;
            } else if (v == "xor_first") {
                s.order = tasks::ToyOrder::xor_first;
            } else {
                throw ConfigError(field, "expected circles_first or xor_first");
            }
        } else if (key == "dim") {
            s.dim = to_size(field, v);
        } else if (key == "tasks") {
            s.tasks = to_size(field, v);
        } else if (key == "components") {
            s.components = to_size(field, v);
        } else if (key == "shift_scale") {
            s.shift_scale = to_double(field, v);
        } else if (key == "seed") {
            s.seed = to_u64(field, v);
        } else if (key == "schema") {
            s.schema = v;
        } else if (key == "files") {
            s.files.clear();
            for (const auto& f : split_list(v)) s.files.emplace_back(f);
        } else {
            throw ConfigError(field, "unknown key");
        }
    } else if (section == "model") {
        if (key == "hidden") {
            t.model.hidden.clear();
            for (const auto& h : split_list(v)) t.model.hidden.push_back(to_size(field, h));
        } else if (key == "latent") {
            t.model.latent = to_size(field, v);
        } else if (key == "activation") {
            t.model.activation = rethrow_as_config(field, [&] { return model::parse_activation(v); });
        } else {
            throw ConfigError(field, "unknown key");
        }
    } else if (section == "train") {
        if (key == "epochs") {
            t.epochs = to_size(field, v);
        } else if (key == "batch_size") {
            t.batch_size = to_size(field, v);
        } else if (key == "lr") {
            t.adam.lr = to_double(field, v);
        } else if (key == "beta1") {
            t.adam.beta1 = to_double(field, v);
        } else if (key == "beta2") {
            t.adam.beta2 = to_double(field, v);
        } else if (key == "epsilon") {
            t.adam.epsilon = to_double(field, v);
        } else if (key == "lambda_c") {
            t.weights.lambda_c = to_double(field, v);
        } else if (key == "lambda_o") {
            t.weights.lambda_o = to_double(field, v);
        } else if (key == "lambda_d") {
            t.weights.lambda_d = to_double(field, v);
        } else if (key == "distance") {
            t.variant.kind = rethrow_as_config(field, [&] { return loss::parse_distance_kind(v); });
        } else if (key == "sigma") {
            if (v == "median") {
                t.variant.sigma.reset();
            } else {
                t.variant.sigma = to_double(field, v);
            }
        } else if (key == "mask") {
            t.mask = to_bool(field, v);
        } else if (key == "temperature") {
            t.temperature = to_double(field, v);
        } else if (key == "pseudolabels") {
            if (v == "soft") {
                t.pseudolabels = loss::PseudolabelKind::soft;
            } else if (v == "hard") {
                t.pseudolabels = loss::PseudolabelKind::hard;
            } else {
                throw ConfigError(field, "expected soft or hard");
            }
        } else if (key == "patience") {
            t.patience = to_size(field, v);
        } else if (key == "ece_bins") {
            t.ece_bins = to_size(field, v);
        } else {
            throw ConfigError(field, "unknown key");
        }
    } else {
        throw ConfigError(section, "unknown section");
    }
}

}  // namespace

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw ConfigError("experiment.seeds", "at least one seed is required");
    if (modes.empty()) throw ConfigError("experiment.modes", "at least one mode is required");
    for (std::size_t i = 0; i < modes.size(); ++i) {
        for (std::size_t j = i + 1; j < modes.size(); ++j) {
            if (modes[i] == modes[j]) throw ConfigError("experiment.modes", "duplicate mode");
        }
    }
    if (workers == 0) throw ConfigError("experiment.workers", "must be >= 1");
    if (output.empty()) throw ConfigError("experiment.output", "must not be empty");
    if (stream.generator == "csv") {
        if (stream.files.empty()) throw ConfigError("stream.files", "csv streams need at least one file");
        if (stream.schema.empty()) throw ConfigError("stream.schema", "csv streams need a schema file");
    } else {
        if (stream.n < 8) throw ConfigError("stream.n", "must be >= 8");
        if (stream.noise < 0.0) throw ConfigError("stream.noise", "must be >= 0");
        if (stream.generator != "toy") {
            if (stream.tasks < 2) throw ConfigError("stream.tasks", "must be >= 2");
            if (stream.dim < stream.tasks) throw ConfigError("stream.dim", "must be >= stream.tasks");
            if (stream.components < 1) throw ConfigError("stream.components", "must be >= 1");
            if (stream.shift_scale < 0.0) throw ConfigError("stream.shift_scale", "must be >= 0");
        }
    }
    if (train.model.hidden.empty() && train.model.latent == 0) throw ConfigError("model.latent", "must be >= 1");
    for (std::size_t h : train.model.hidden) {
        if (h == 0) throw ConfigError("model.hidden", "layer sizes must be >= 1");
    }
    const auto nonneg = [](const char* field, double v) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(field, "must be a finite number >= 0");
    };
    nonneg("train.lambda_c", train.weights.lambda_c);
    nonneg("train.lambda_o", train.weights.lambda_o);
    nonneg("train.lambda_d", train.weights.lambda_d);
    if (!(train.adam.lr > 0.0)) throw ConfigError("train.lr", "must be positive");
    if (!(train.temperature > 0.0)) throw ConfigError("train.temperature", "must be positive");
    if (train.variant.sigma) {
        if (train.variant.kind != loss::DistanceKind::rbf_gram) {
            throw ConfigError("train.sigma", "only applies to distance = rbf_gram");
        }
        if (!(*train.variant.sigma > 0.0)) throw ConfigError("train.sigma", "must be positive");
    }
    rethrow_as_config("train", [&] {
        train.validate();
        return 0;
    });
}

ExperimentConfig parse_config(std::istream& in) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config", e.message() + " at line " + std::to_string(e.line()));
    }
    ExperimentConfig cfg;
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError(section, "keys must live inside a [section]");
        for (const auto& [key, value] : body) apply(cfg, section, key, trim(value.get_value<std::string>()));
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot read " + path.string());
    return parse_config(in);
}

tasks::TaskStream build_stream(const StreamSpec& spec, std::uint64_t cell_seed) {
    const std::uint64_t seed = spec.seed.value_or(cell_seed);
    if (spec.generator == "toy") return tasks::gen_toy_xor_circles(spec.n, spec.noise, seed, spec.order);
    tasks::AttributeStreamParams p{spec.n, spec.dim, spec.tasks, spec.components, seed};
    if (spec.generator == "attribute") return tasks::gen_attribute_stream(p);
    if (spec.generator == "shift") return tasks::gen_shift_stream(p, spec.shift_scale);
    if (spec.generator == "csv") {
        return tasks::load_csv_stream(spec.files, tasks::CsvSchema::from_json_file(spec.schema));
    }
    throw ConfigError("stream.generator", "unknown generator '" + spec.generator + "'");
}

namespace {

nlohmann::ordered_json weights_json(const loss::LossWeights& w) {
    nlohmann::ordered_json j;
    j["lambda_c"] = w.lambda_c;
    j["lambda_o"] = w.lambda_o;
    j["lambda_d"] = w.lambda_d;
    return j;
}

}  // namespace

nlohmann::ordered_json metrics_json(const train::ExperimentResult& r, const ExperimentConfig& cfg) {
    train::TrainConfig tc = cfg.train;
    tc.mode = r.mode;
    nlohmann::ordered_json j;
    j["mode"] = std::string(train::to_string(r.mode));
    j["seed"] = r.seed;
    j["stream"] = cfg.stream.generator;
    j["tasks"] = r.task_names;
    j["loss_weights"] = weights_json(cfg.train.weights);
    j["effective_loss_weights"] = weights_json(tc.effective_weights());
    j["distance"] = cfg.train.variant.describe();
    j["mask"] = cfg.train.mask;
    j["temperature"] = cfg.train.temperature;
    j["accuracy_matrix"] = r.accuracy.rows();
    j["final_average_accuracy"] = metrics::final_average_accuracy(r.accuracy);
    j["bwt"] = r.accuracy.tasks() >= 2 ? nlohmann::ordered_json(metrics::backward_transfer(r.accuracy))
                                       : nlohmann::ordered_json(nullptr);
    j["ece_bins"] = cfg.train.ece_bins;
    j["ece_per_task"] = r.ece_per_task;
    j["gram_deviation_trace"] = r.gram_deviation_trace;
    std::vector<std::size_t> epochs, best;
    for (const auto& rec : r.records) {
        epochs.push_back(rec.train_losses.size());
        best.push_back(rec.best_epoch);
    }
    j["epochs_run"] = epochs;
    j["best_epoch"] = best;
    return j;
}

namespace {

std::string num17(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::pair<double, double> mean_sd(const std::vector<double>& xs) {
    if (xs.empty()) return {std::nan(""), std::nan("")};
    double m = 0.0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    if (xs.size() < 2) return {m, std::nan("")};
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

std::vector<std::string> ordered_modes(const std::vector<nlohmann::json>& metrics,
                                       const std::vector<train::Mode>& preferred) {
    std::vector<std::string> out;
    for (auto m : preferred) out.emplace_back(train::to_string(m));
    for (const auto& j : metrics) {
        const auto m = j.at("mode").get<std::string>();
        if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    return out;
}

}  // namespace

std::string aggregate_csv(const std::vector<nlohmann::json>& metrics, const std::vector<train::Mode>& mode_order) {
    std::ostringstream out;
    out << "mode,runs,final_accuracy_mean,final_accuracy_sd,bwt_mean,bwt_sd\n";
    for (const auto& mode : ordered_modes(metrics, mode_order)) {
        std::vector<double> acc, bwt;
        for (const auto& j : metrics) {
            if (j.at("mode") != mode) continue;
            acc.push_back(j.at("final_average_accuracy").get<double>());
            if (!j.at("bwt").is_null()) bwt.push_back(j.at("bwt").get<double>());
        }
        if (acc.empty()) continue;
        const auto [am, as] = mean_sd(acc);
        const auto [bm, bs] = mean_sd(bwt);
        out << mode << ',' << acc.size() << ',' << num17(am) << ',' << num17(as) << ',' << num17(bm) << ','
            << num17(bs) << '\n';
    }
    return out.str();
}

namespace {

void write_text(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << body;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::size_t worker_count(const ExperimentConfig& cfg) {
    if (const char* env = std::getenv("LWP_WORKERS"); env != nullptr && *env != '\0') {
        return std::max<std::size_t>(1, to_size("LWP_WORKERS", env));
    }
    return cfg.workers;
}

fs::path cell_dir(const fs::path& out, train::Mode mode, std::uint64_t seed) {
    return out / std::string(train::to_string(mode)) / ("seed" + std::to_string(seed));
}

}  // namespace

void run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    struct Cell {
        train::Mode mode;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (auto m : cfg.modes)
        for (auto s : cfg.seeds) cells.push_back({m, s});

    std::vector<nlohmann::json> results(cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;
    std::string failed_cell;

    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            {
                std::lock_guard lock(err_mu);
                if (first_error) return;
            }
            const Cell c = cells[i];
            const std::string name = std::string(train::to_string(c.mode)) + "/seed" + std::to_string(c.seed);
            try {
                const tasks::TaskStream stream = build_stream(cfg.stream, c.seed);
                train::TrainConfig tc = cfg.train;
                tc.mode = c.mode;
                tc.seed = c.seed;
                const fs::path dir = cell_dir(cfg.output, c.mode, c.seed);
                fs::create_directories(dir);
                train::TaskObserver on_task;
                if (cfg.checkpoints) {
                    on_task = [&](std::size_t t, const model::ModelState& m) {
                        model::save_checkpoint(m, dir / ("task" + std::to_string(t) + ".json"));
                    };
                }
                const train::ExperimentResult r = train::run_sequence(stream, tc, on_task);
                if (cfg.export_embeddings) {
                    for (std::size_t t = 0; t < stream.size(); ++t) {
                        metrics::export_embeddings(r.final_model, stream.tasks[t].test.x,
                                                   dir / ("embeddings_task" + std::to_string(t) + ".csv"));
                    }
                }
                const auto j = metrics_json(r, cfg);
                write_text(dir / "metrics.json", j.dump(2) + "\n");
                results[i] = nlohmann::json::parse(j.dump());
            } catch (...) {
                std::lock_guard lock(err_mu);
                if (!first_error) {
                    first_error = std::current_exception();
                    failed_cell = name;
                }
                return;
            }
        }
    };

    const std::size_t nworkers = std::min(worker_count(cfg), cells.size());
    if (nworkers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < nworkers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (first_error) {
        try {
            std::rethrow_exception(first_error);
        } catch (const std::exception& e) {
            throw CellError("cell " + failed_cell + " failed: " + e.what());
        }
    }
    write_text(cfg.output / "aggregate.csv", aggregate_csv(results, cfg.modes));
    plot_results(cfg.output);
}

std::vector<fs::path> plot_results(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw FormatError("plot: " + dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& mode_entry : fs::directory_iterator(dir)) {
        if (!mode_entry.is_directory() || mode_entry.path().filename() == "plots") continue;
        for (const auto& seed_entry : fs::directory_iterator(mode_entry.path())) {
            const fs::path f = seed_entry.path() / "metrics.json";
            if (seed_entry.is_directory() && fs::is_regular_file(f)) files.push_back(f);
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw FormatError("plot: no metrics.json files under " + dir.string());

    std::vector<nlohmann::json> metrics;
    for (const auto& f : files) {
        std::ifstream in(f);
        try {
            nlohmann::json j;
            in >> j;
            j.at("mode").get<std::string>();
            j.at("accuracy_matrix").get<std::vector<std::vector<double>>>();
            j.at("bwt");
            metrics.push_back(std::move(j));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("plot: corrupt " + f.string() + ": " + e.what());
        }
    }

    const std::vector<train::Mode> canonical{train::Mode::lwp, train::Mode::lwf, train::Mode::naive_ft,
                                             train::Mode::stl};
    std::vector<std::string> present;
    for (const auto& mode : ordered_modes(metrics, canonical)) {
        if (std::any_of(metrics.begin(), metrics.end(), [&](const auto& j) { return j.at("mode") == mode; })) {
            present.push_back(mode);
        }
    }

    const fs::path plots = dir / "plots";
    fs::create_directories(plots);
    std::vector<fs::path> written;
    std::vector<std::pair<std::string, std::optional<double>>> bars;
    for (const auto& mode : present) {
        std::vector<std::vector<double>> mean;
        std::size_t runs = 0;
        std::vector<double> bwts;
        for (const auto& j : metrics) {
            if (j.at("mode") != mode) continue;
            const auto r = j.at("accuracy_matrix").get<std::vector<std::vector<double>>>();
            if (runs == 0) {
                mean = r;
            } else {
                if (r.size() != mean.size()) throw FormatError("plot: runs of mode " + mode + " differ in task count");
                for (std::size_t a = 0; a < r.size(); ++a)
                    for (std::size_t b = 0; b < r[a].size(); ++b) mean[a][b] += r[a][b];
            }
            ++runs;
            if (!j.at("bwt").is_null()) bwts.push_back(j.at("bwt").get<double>());
        }
        for (auto& row : mean)
            for (double& v : row) v /= static_cast<double>(runs);
        const fs::path p = plots / ("accuracy_" + mode + ".svg");
        write_text(p, svg::accuracy_heatmap(mode + ": accuracy by task (mean of " + std::to_string(runs) + " runs)", mean));
        written.push_back(p);
        bars.emplace_back(mode, bwts.empty() ? std::nullopt : std::optional<double>(mean_sd(bwts).first));
    }
    const fs::path p = plots / "bwt.svg";
    write_text(p, svg::bar_chart("Backward transfer by mode", bars));
    written.push_back(p);
    return written;
}

}  // namespace lwp::cli
