#pragma once

#include "tedl/data.hpp"
#include "tedl/train.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tedl::cli {

enum ExitCode : int { ok = 0, usage_error = 1, runtime_failure = 2 };

/// Where a run's data comes from: a generator spec or CSV files.
struct DataSource {
    std::optional<std::filesystem::path> csv;             // full dataset, split by the run
    std::optional<std::filesystem::path> validation_csv;  // with csv: used as-is, no split
    BlobParams blobs;
    NoiseScope noise_scope = NoiseScope::train;
    SplitSpec split;
    // When the config leaves data_seed / split_seed unset they track the run seed.
    bool seed_follows_run = true;
    bool split_seed_follows_run = true;
};

struct RunConfig {
    TrainPlan plan;
    DataSource data;
    std::filesystem::path out_dir = "run";
    bool write_csv = true;
    bool write_json = true;
};

/// Parses a flat JSON config. Unknown keys and every invalid value are
/// collected and reported together in one ConfigError.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

/// Fully resolved config as flat JSON; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const RunConfig& config);

/// Applies EVIDENTIAL_SEED when set. Returns true if the seed changed.
bool apply_seed_override(RunConfig& config);

/// Builds (train, validation) for a config.
std::pair<Dataset, Dataset> materialize(const DataSource& source);

// Model persistence.
inline constexpr int kModelFormatVersion = 1;
nlohmann::json model_to_json(const Network& net);
Network model_from_json(const nlohmann::json& doc);
void save_model(const Network& net, const std::filesystem::path& path);
Network load_model(const std::filesystem::path& path);

// Report serialization.
std::string epochs_csv(const std::vector<EpochRecord>& records);
nlohmann::json report_to_json(const EvalReport& report);
std::string curve_csv(const std::vector<EvalReport>& reports);
std::string histogram_csv(const std::vector<EvalReport>& reports);

// CRC-32 of a byte string, as 8 lowercase hex digits.
std::string crc32_hex(const std::string& bytes);

// Writes to a sibling temporary file and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

/// Runs one training config and writes its run directory. Returns the result.
RunResult train_to_directory(const RunConfig& config, const Dataset& train, const Dataset& validation,
                             bool verbose = false);

/// Entry point of the `tedl` command. Returns the process exit code.
int run(int argc, char** argv);

} // namespace tedl::cli
