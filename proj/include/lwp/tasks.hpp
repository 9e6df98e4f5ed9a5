#pragma once

#include "lwp/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lwp::tasks {

struct Split {
    Matrix x;  // N x D
    Matrix y;  // N x 1, class indices

    std::size_t size() const { return x.rows(); }
};

struct TaskSplit {
    std::string name;
    std::size_t classes = 2;
    Split train;
    Split val;
    Split test;
};

struct TaskStream {
    std::vector<TaskSplit> tasks;
    std::size_t input_dim = 0;
    bool stationary = true;

    std::size_t size() const { return tasks.size(); }
    /// Throws ValueError on empty streams, differing input dims, or labels
    /// outside [0, classes).
    void validate() const;
};

/// Split sizes used by every generator and by the CSV loader:
/// train = floor(0.70 n), val = floor(0.15 n), test = the rest; for n >= 3,
/// val and test get at least one row each (taken from train).
struct SplitSizes {
    std::size_t train, val, test;
};
SplitSizes split_sizes(std::size_t n);

/// Partitions rows [0, n) contiguously into train / val / test.
TaskSplit partition(std::string name, std::size_t classes, const Matrix& x, const Matrix& y);

enum class ToyOrder { circles_first, xor_first };

/// Points uniform on [-1, 1]^2, shared by two tasks:
///   xor:     1 iff the coordinate signs differ (points on an axis count as positive)
///   circles: 0 inside radius sqrt(2 / pi) (half the square's area), 1 outside
/// Labels come from the clean point; then N(0, noise^2) jitter is added.
TaskStream gen_toy_xor_circles(std::size_t n, double noise, std::uint64_t seed,
                               ToyOrder order = ToyOrder::circles_first);

/// The toy circle radius, sqrt(2 / pi).
double toy_circle_radius();

/// Clean-point labelling rules of the toy tasks.
std::size_t toy_xor_label(double a, double b);
std::size_t toy_circle_label(double a, double b);

struct AttributeStreamParams {
    std::size_t n = 2000;
    std::size_t dim = 10;
    std::size_t tasks = 5;
    std::size_t components = 4;
    std::uint64_t seed = 0;
};

/// Binary-attribute tasks over one shared Gaussian-mixture input sample.
///
/// Mixture: `components` equally weighted isotropic unit-variance Gaussians
/// with means drawn N(0, 1.5^2) per coordinate. Task t looks at the window of
/// coordinates {(t * dim / tasks + j) mod dim : j < w}, w = max(2, 2 * dim / tasks),
/// with N(0, 1) weights on that window; its label is 1 iff the projection
/// exceeds the sample median of the projection.
TaskStream gen_attribute_stream(const AttributeStreamParams& p);

/// The attribute stream with task-dependent covariate shift. A seeded half of
/// the coordinates (at least one) is shifted: for task t they become
///   mu + (x - mu) * (1 + 0.25 * t * shift_scale) + t * shift_scale
/// where mu is the mixture mean. Labels are those of the unshifted sample,
/// so shift_scale = 0 reproduces gen_attribute_stream bit for bit.
TaskStream gen_shift_stream(const AttributeStreamParams& base, double shift_scale);

/// Indices of coordinates gen_shift_stream moves, for the given params.
std::vector<std::size_t> shifted_coordinates(const AttributeStreamParams& base);

/// CSV ingestion schema: feature columns, and per file a label column and
/// class count. A single label/classes applies to every file.
struct CsvSchema {
    std::vector<std::string> features;
    std::vector<std::string> labels;
    std::vector<std::size_t> classes;

    static CsvSchema from_json_file(const std::filesystem::path& path);
};

/// One task per file. Rows are split in file order with split_sizes().
/// Features are z-scored with task-0 train mean and population sd
/// (columns with zero sd are only centred).
TaskStream load_csv_stream(const std::vector<std::filesystem::path>& paths, const CsvSchema& schema);

/// Writes task k to dir/task<k>.csv (train, val, test rows in order) plus a
/// matching dir/schema.json, so load_csv_stream reproduces the splits.
void write_csv_stream(const TaskStream& s, const std::filesystem::path& dir);

}  // namespace lwp::tasks
