#pragma once

#include "lwp/errors.hpp"
#include "lwp/tasks.hpp"
#include "lwp/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace lwp::cli {

/// Invalid experiment configuration; `field()` is the offending key.
class ConfigError : public ValueError {
public:
    ConfigError(std::string field, const std::string& message)
        : ValueError(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct StreamSpec {
    /// toy | attribute | shift | csv
    std::string generator = "toy";
    std::size_t n = 2000;
    double noise = 0.05;
    tasks::ToyOrder order = tasks::ToyOrder::circles_first;
    std::size_t dim = 10;
    std::size_t tasks = 5;
    std::size_t components = 4;
    double shift_scale = 0.5;
    /// Data seed; unset means each cell uses its own training seed.
    std::optional<std::uint64_t> seed;
    std::filesystem::path schema;
    std::vector<std::filesystem::path> files;
};

struct ExperimentConfig {
    StreamSpec stream;
    train::TrainConfig train;
    std::vector<std::uint64_t> seeds{0};
    std::vector<train::Mode> modes{train::Mode::lwp};
    std::filesystem::path output = "results";
    std::size_t workers = 1;
    bool checkpoints = true;
    bool export_embeddings = false;

    void validate() const;
};

/// Parses the flat `key = value` / `[section]` format. Unknown sections or
/// keys and malformed values raise ConfigError naming the field.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

tasks::TaskStream build_stream(const StreamSpec& spec, std::uint64_t cell_seed);

/// Per-cell metrics document. Contains no timing data, so reruns are
/// byte-identical.
nlohmann::ordered_json metrics_json(const train::ExperimentResult& r, const ExperimentConfig& cfg);

/// A (mode, seed) cell failed; what() names the cell.
class CellError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Runs every (mode, seed) cell, writing
///   <out>/<mode>/seed<k>/metrics.json  (+ task<t>.json checkpoints)
///   <out>/aggregate.csv
///   <out>/plots/*.svg
/// `workers` threads execute cells; LWP_WORKERS overrides the config.
void run_experiment(const ExperimentConfig& cfg);

/// Rows of aggregate.csv: per mode, mean and sample sd (n - 1) of final
/// average accuracy and BWT over seeds.
std::string aggregate_csv(const std::vector<nlohmann::json>& metrics, const std::vector<train::Mode>& mode_order);

/// Regenerates <dir>/plots from the metrics JSONs under <dir>. Returns the
/// written SVG paths. Throws FormatError when no or corrupt metrics exist.
std::vector<std::filesystem::path> plot_results(const std::filesystem::path& dir);

/// Entry point of the `lwp` executable. Exit codes: 0 ok, 1 runtime
/// failure, 2 invalid configuration or usage.
int main_entry(int argc, char** argv);

}  // namespace lwp::cli
