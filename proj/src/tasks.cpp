#include "lwp/tasks.hpp"

#include "lwp/errors.hpp"
#include "lwp/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace lwp::tasks {

void TaskStream::validate() const {
    if (tasks.empty()) throw ValueError("TaskStream: no tasks");
    for (const auto& t : tasks) {
        if (t.classes < 2) throw ValueError("TaskStream: task '" + t.name + "' has fewer than 2 classes");
        for (const Split* s : {&t.train, &t.val, &t.test}) {
            if (s->x.rows() != s->y.rows() || s->y.cols() != 1) {
                throw ValueError("TaskStream: task '" + t.name + "' split shape mismatch");
            }
            if (s->x.rows() > 0 && s->x.cols() != input_dim) {
                throw ValueError("TaskStream: task '" + t.name + "' input dim differs from stream");
            }
            for (double y : s->y.data()) {
                if (!(y >= 0.0 && y < static_cast<double>(t.classes)) || y != std::floor(y)) {
                    throw ValueError("TaskStream: task '" + t.name + "' label out of range");
                }
            }
        }
        if (t.train.size() == 0) throw ValueError("TaskStream: task '" + t.name + "' has an empty train split");
    }
}

SplitSizes split_sizes(std::size_t n) {
    std::size_t val = n * 15 / 100;
    std::size_t test = n - n * 70 / 100 - val;
    if (n >= 3) {
        // tiny inputs still get one validation and one test row
        val = std::max<std::size_t>(val, 1);
        test = std::max<std::size_t>(test, 1);
    }
    return {n - val - test, val, test};
}

namespace {

Split slice(const Matrix& x, const Matrix& y, std::size_t begin, std::size_t count) {
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = begin + i;
    return {gather_rows(x, idx), gather_rows(y, idx)};
}

}  // namespace

TaskSplit partition(std::string name, std::size_t classes, const Matrix& x, const Matrix& y) {
    const auto s = split_sizes(x.rows());
    TaskSplit t;
    t.name = std::move(name);
    t.classes = classes;
    t.train = slice(x, y, 0, s.train);
    t.val = slice(x, y, s.train, s.val);
    t.test = slice(x, y, s.train + s.val, s.test);
    return t;
}

double toy_circle_radius() { return std::sqrt(2.0 / std::numbers::pi); }

std::size_t toy_xor_label(double a, double b) { return (a < 0.0) != (b < 0.0) ? 1 : 0; }

std::size_t toy_circle_label(double a, double b) {
    const double r = toy_circle_radius();
    return a * a + b * b < r * r ? 0 : 1;
}

TaskStream gen_toy_xor_circles(std::size_t n, double noise, std::uint64_t seed, ToyOrder order) {
    if (n < 8) throw ValueError("gen_toy_xor_circles: n must be >= 8");
    if (!(noise >= 0.0)) throw ValueError("gen_toy_xor_circles: noise must be >= 0");
    Rng rng(seed);
    Matrix x(n, 2), y_xor(n, 1), y_circle(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = rng.uniform(-1.0, 1.0);
        const double b = rng.uniform(-1.0, 1.0);
        y_xor(i, 0) = static_cast<double>(toy_xor_label(a, b));
        y_circle(i, 0) = static_cast<double>(toy_circle_label(a, b));
        x(i, 0) = a;
        x(i, 1) = b;
    }
    if (noise > 0.0) {
        for (double& v : x.data()) v += noise * rng.normal();
    }
    TaskStream s;
    s.input_dim = 2;
    TaskSplit circles = partition("circles", 2, x, y_circle);
    TaskSplit xr = partition("xor", 2, x, y_xor);
    if (order == ToyOrder::circles_first) {
        s.tasks = {std::move(circles), std::move(xr)};
    } else {
        s.tasks = {std::move(xr), std::move(circles)};
    }
    return s;
}

namespace {

constexpr double kMixtureMeanSd = 1.5;

struct AttributeSample {
    Matrix x;
    std::vector<Matrix> labels;
    std::vector<double> mixture_mean;
};

std::size_t window_width(const AttributeStreamParams& p) {
    return std::min(p.dim, std::max<std::size_t>(2, 2 * p.dim / p.tasks));
}

AttributeSample sample_attributes(const AttributeStreamParams& p) {
    if (p.tasks < 2) throw ValueError("attribute stream: need at least 2 tasks");
    if (p.dim < p.tasks) throw ValueError("attribute stream: dim must be >= tasks");
    if (p.components == 0) throw ValueError("attribute stream: need at least one mixture component");
    if (p.n < 8) throw ValueError("attribute stream: n must be >= 8");
    Rng rng(p.seed);
    Matrix means(p.components, p.dim);
    for (double& v : means.data()) v = kMixtureMeanSd * rng.normal();
    AttributeSample s;
    s.mixture_mean.assign(p.dim, 0.0);
    for (std::size_t k = 0; k < p.components; ++k)
        for (std::size_t d = 0; d < p.dim; ++d) s.mixture_mean[d] += means(k, d) / static_cast<double>(p.components);

    s.x = Matrix(p.n, p.dim);
    for (std::size_t i = 0; i < p.n; ++i) {
        const std::size_t k = rng.below(p.components);
        for (std::size_t d = 0; d < p.dim; ++d) s.x(i, d) = means(k, d) + rng.normal();
    }
    const std::size_t w = window_width(p);
    for (std::size_t t = 0; t < p.tasks; ++t) {
        const std::size_t start = t * p.dim / p.tasks;
        std::vector<std::pair<std::size_t, double>> weights;
        for (std::size_t j = 0; j < w; ++j) weights.emplace_back((start + j) % p.dim, rng.normal());
        std::vector<double> proj(p.n, 0.0);
        for (std::size_t i = 0; i < p.n; ++i)
            for (const auto& [d, wt] : weights) proj[i] += wt * s.x(i, d);
        std::vector<double> sorted = proj;
        const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>((p.n - 1) / 2);
        std::nth_element(sorted.begin(), mid, sorted.end());
        const double threshold = *mid;
        Matrix y(p.n, 1);
        for (std::size_t i = 0; i < p.n; ++i) y(i, 0) = proj[i] > threshold ? 1.0 : 0.0;
        s.labels.push_back(std::move(y));
    }
    return s;
}

}  // namespace

TaskStream gen_attribute_stream(const AttributeStreamParams& p) {
    const AttributeSample s = sample_attributes(p);
    TaskStream out;
    out.input_dim = p.dim;
    for (std::size_t t = 0; t < p.tasks; ++t) {
        out.tasks.push_back(partition("attr" + std::to_string(t), 2, s.x, s.labels[t]));
    }
    return out;
}

std::vector<std::size_t> shifted_coordinates(const AttributeStreamParams& base) {
    Rng rng = Rng(base.seed).derive(0x5b1f7);
    std::vector<std::size_t> coords(base.dim);
    for (std::size_t i = 0; i < base.dim; ++i) coords[i] = i;
    rng.shuffle(coords);
    coords.resize(std::max<std::size_t>(1, base.dim / 2));
    std::sort(coords.begin(), coords.end());
    return coords;
}

TaskStream gen_shift_stream(const AttributeStreamParams& base, double shift_scale) {
    if (!(shift_scale >= 0.0) || !std::isfinite(shift_scale)) {
        throw ValueError("gen_shift_stream: shift_scale must be finite and >= 0");
    }
    const AttributeSample s = sample_attributes(base);
    const auto coords = shifted_coordinates(base);
    TaskStream out;
    out.input_dim = base.dim;
    out.stationary = shift_scale == 0.0;
    for (std::size_t t = 0; t < base.tasks; ++t) {
        const double shift = static_cast<double>(t) * shift_scale;
        const double stretch = 1.0 + 0.25 * shift;
        Matrix x = s.x;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t d : coords) {
                const double mu = s.mixture_mean[d];
                x(i, d) = mu + (x(i, d) - mu) * stretch + shift;
            }
        }
        if (shift_scale == 0.0) x = s.x;
        out.tasks.push_back(partition("shift" + std::to_string(t), 2, x, s.labels[t]));
    }
    return out;
}

CsvSchema CsvSchema::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read schema " + path.string());
    try {
        nlohmann::json j;
        in >> j;
        CsvSchema s;
        s.features = j.at("features").get<std::vector<std::string>>();
        const auto& label = j.at("label");
        if (label.is_array()) {
            s.labels = label.get<std::vector<std::string>>();
        } else {
            s.labels = {label.get<std::string>()};
        }
        const auto& classes = j.at("classes");
        if (classes.is_array()) {
            s.classes = classes.get<std::vector<std::size_t>>();
        } else {
            s.classes = {classes.get<std::size_t>()};
        }
        if (s.features.empty()) throw FormatError("schema: no feature columns");
        if (s.labels.size() != s.classes.size()) throw FormatError("schema: label and classes lists differ in length");
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("schema " + path.string() + ": " + e.what());
    }
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) {
        throw FormatError(where + ": non-numeric feature value '" + s + "'");
    }
    return v;
}

TaskSplit read_task_csv(const std::filesystem::path& path, const CsvSchema& schema, std::size_t task) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = split_line(line);
    auto column = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw FormatError(path.string() + ": missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    std::vector<std::size_t> feature_cols;
    for (const auto& f : schema.features) feature_cols.push_back(column(f));
    const std::size_t k = schema.labels.size() == 1 ? 0 : task;
    const std::size_t label_col = column(schema.labels[k]);
    const std::size_t classes = schema.classes[k];
    if (classes < 2) throw FormatError(path.string() + ": classes must be >= 2");

    std::vector<double> xs, ys;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split_line(line);
        const std::string where = path.string() + ":" + std::to_string(line_no);
        if (cells.size() != header.size()) {
            throw FormatError(where + ": ragged row (" + std::to_string(cells.size()) + " cells, header has " +
                              std::to_string(header.size()) + ")");
        }
        for (std::size_t c : feature_cols) xs.push_back(parse_double(cells[c], where));
        long label = -1;
        const auto& ls = cells[label_col];
        const auto [ptr, ec] = std::from_chars(ls.data(), ls.data() + ls.size(), label);
        if (ec != std::errc() || ptr != ls.data() + ls.size() || label < 0 ||
            static_cast<std::size_t>(label) >= classes) {
            throw FormatError(where + ": unknown label value '" + ls + "' for " + std::to_string(classes) +
                              " classes");
        }
        ys.push_back(static_cast<double>(label));
    }
    const std::size_t n = ys.size();
    Matrix x(n, feature_cols.size(), std::move(xs));
    Matrix y(n, 1, std::move(ys));
    TaskSplit t = partition(path.stem().string(), classes, x, y);
    if (t.train.size() == 0 || t.val.size() == 0 || t.test.size() == 0) {
        throw FormatError(path.string() + ": " + std::to_string(n) + " rows leave an empty split");
    }
    return t;
}

}  // namespace

TaskStream load_csv_stream(const std::vector<std::filesystem::path>& paths, const CsvSchema& schema) {
    if (paths.empty()) throw ValueError("load_csv_stream: no files");
    if (schema.labels.size() != 1 && schema.labels.size() != paths.size()) {
        throw ValueError("load_csv_stream: schema lists " + std::to_string(schema.labels.size()) +
                         " label columns for " + std::to_string(paths.size()) + " files");
    }
    TaskStream s;
    s.input_dim = schema.features.size();
    for (std::size_t t = 0; t < paths.size(); ++t) s.tasks.push_back(read_task_csv(paths[t], schema, t));

    const Matrix& ref = s.tasks.front().train.x;
    const auto n = static_cast<double>(ref.rows());
    std::vector<double> mean(ref.cols(), 0.0), sd(ref.cols(), 0.0);
    for (std::size_t i = 0; i < ref.rows(); ++i)
        for (std::size_t d = 0; d < ref.cols(); ++d) mean[d] += ref(i, d);
    for (double& m : mean) m /= n;
    for (std::size_t i = 0; i < ref.rows(); ++i)
        for (std::size_t d = 0; d < ref.cols(); ++d) sd[d] += (ref(i, d) - mean[d]) * (ref(i, d) - mean[d]);
    for (double& v : sd) {
        v = std::sqrt(v / n);
        if (v == 0.0) v = 1.0;
    }
    for (auto& t : s.tasks) {
        for (Split* sp : {&t.train, &t.val, &t.test}) {
            for (std::size_t i = 0; i < sp->x.rows(); ++i)
                for (std::size_t d = 0; d < sp->x.cols(); ++d) sp->x(i, d) = (sp->x(i, d) - mean[d]) / sd[d];
        }
    }
    s.validate();
    return s;
}

void write_csv_stream(const TaskStream& s, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> features;
    for (std::size_t d = 0; d < s.input_dim; ++d) features.push_back("x" + std::to_string(d));
    std::vector<std::size_t> classes;
    for (std::size_t t = 0; t < s.tasks.size(); ++t) {
        const auto& task = s.tasks[t];
        classes.push_back(task.classes);
        const auto path = dir / ("task" + std::to_string(t) + ".csv");
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        for (const auto& f : features) out << f << ',';
        out << "y\n";
        char buf[32];
        for (const Split* sp : {&task.train, &task.val, &task.test}) {
            for (std::size_t i = 0; i < sp->size(); ++i) {
                for (double v : sp->x.row(i)) {
                    std::snprintf(buf, sizeof buf, "%.17g", v);
                    out << buf << ',';
                }
                out << static_cast<long>(sp->y(i, 0)) << '\n';
            }
        }
    }
    nlohmann::ordered_json schema;
    schema["features"] = features;
    schema["label"] = std::vector<std::string>(s.tasks.size(), "y");
    schema["classes"] = classes;
    std::ofstream(dir / "schema.json") << schema.dump(2) << '\n';
}

}  // namespace lwp::tasks
