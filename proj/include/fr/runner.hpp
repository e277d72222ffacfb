#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fr/config.hpp"
#include "fr/network.hpp"

namespace fr {

struct EpochRow {
    std::size_t epoch = 0;
    std::size_t step = 0;  // cumulative SGD steps
    double loss = 0.0;
    double acc = 0.0;  // eval accuracy when a test set is attached, else train
    double r_a = 1.0;
    std::size_t l_a = 0;
    double step1_ms = 0.0;
    double step2_ms = 0.0;
    std::size_t peak_bytes = 0;
};

struct RunSummary {
    std::vector<EpochRow> rows;
    std::vector<GeneralEpochReport> reports;
    double final_test_accuracy = -1.0;
    double final_train_accuracy = 0.0;
    double total_step1_ms = 0.0;
    double total_step2_ms = 0.0;
    std::size_t max_peak_bytes = 0;
    std::string output_dir;
};

std::string metrics_csv(const RunSummary& summary, bool record_timing);
std::string summary_json(const TrainConfig& cfg, const RunSummary& summary);

// Full training run: total_epochs general epochs, then metrics.csv,
// summary.json, checkpoint.bin, and the resolved config written to
// cfg.output_dir.
RunSummary run_train(const TrainConfig& cfg);

struct MemoryBenchRow {
    std::size_t mp_batch = 0;
    std::size_t oneshot_peak_bytes = 0;
    std::size_t rls_peak_bytes = 0;
    double peak_ratio = 0.0;
    double divergence = 0.0;  // relative Frobenius vs the one-shot solution
    double oneshot_ms = 0.0;
    double rls_ms = 0.0;
};

// One-shot ridge vs the batch-by-batch solver on identical seeded data;
// records peak transient solver bytes and the result divergence per batch
// size.
std::vector<MemoryBenchRow> run_bench_memory(std::size_t n, std::size_t d,
                                             std::size_t c,
                                             const std::vector<std::size_t>& batches,
                                             double reg_c, std::uint64_t seed);
std::string memory_bench_csv(const std::vector<MemoryBenchRow>& rows);
std::string memory_bench_json(const std::vector<MemoryBenchRow>& rows);

struct FreezeBenchRow {
    double rate = 0.0;
    std::size_t l_a = 0;
    double median_epoch_ms = 0.0;
    double backward_flops = 0.0;  // per epoch
    double flop_ratio = 0.0;      // vs rate 1.0
    double time_ratio = 0.0;
};

// Fixed-seed epochs at each constant activation rate; frozen-layer
// parameter integrity is verified every epoch.
std::vector<FreezeBenchRow> run_bench_freeze(const TrainConfig& cfg,
                                             const std::vector<double>& rates,
                                             std::size_t epochs_per_rate);
std::string freeze_bench_csv(const std::vector<FreezeBenchRow>& rows);

struct CompareRow {
    std::string config;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    std::vector<double> per_seed;
};

// Mean +/- std of final test accuracy over the seed list, per config.
std::vector<CompareRow> run_compare(const std::vector<std::string>& config_paths,
                                    const std::vector<std::uint64_t>& seeds);
std::string compare_csv(const std::vector<CompareRow>& rows);

}  // namespace fr
