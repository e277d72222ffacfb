#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fr/network.hpp"

namespace fr {

// Flat key-value run manifest with dotted sections, e.g. `retrain.mu = 1.0`.
// `#` starts a comment. Every run copies its resolved config into the
// output directory.
struct KeyValueFile {
    std::map<std::string, std::string> values;

    static KeyValueFile parse_text(const std::string& text);
    static KeyValueFile parse_file(const std::string& path);

    bool has(const std::string& key) const;
    std::string get(const std::string& key) const;  // throws ConfigError
    std::string get_or(const std::string& key, const std::string& fallback) const;
    std::string render() const;  // sorted, normalized
};

struct DatasetSpec {
    std::string kind;        // "synthetic" | "idx" | "csv"
    std::string synthetic;   // blobs | spirals | digits
    std::size_t n_per_class = 200;
    int classes = 3;
    double noise = 0.05;
    double test_fraction = 0.2;
    std::string images, labels;            // idx train pair
    std::string test_images, test_labels;  // idx test pair (optional)
    std::string csv, test_csv;
};

struct TrainConfig {
    std::string arch = "mlp";
    DatasetSpec dataset;
    std::size_t total_epochs = 1;
    std::uint64_t seed = 0;
    SgdConfig sgd;
    std::string ra_schedule_text = "0:1.0";
    RetrainRunConfig retrain;
    double dense_dropout = 0.0;
    bool record_timing = false;  // wall-clock columns in metrics.csv
    std::string output_dir = "run";

    RateSchedule ra_schedule() const;
};

// Parses and validates; throws ConfigError with a field-specific message.
// FR_OUTPUT_DIR, when set, overrides output_dir.
TrainConfig parse_train_config(const KeyValueFile& kv);
TrainConfig load_train_config(const std::string& path);

// Resolved-manifest echo written next to the run outputs.
std::string render_train_config(const TrainConfig& cfg);

// Materializes the train/test pair named by the spec.
void load_dataset_pair(const DatasetSpec& spec, std::uint64_t seed, Dataset& train,
                       std::optional<Dataset>& test);

}  // namespace fr
