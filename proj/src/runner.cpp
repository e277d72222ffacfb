#include "fr/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "fr/checkpoint.hpp"
#include "fr/linalg.hpp"
#include "json.hpp"

namespace fr {

namespace {

std::string fmt(double v, const char* spec = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << content;
    if (!out) throw IoError("short write to " + path);
}

}  // namespace

std::string metrics_csv(const RunSummary& summary, bool record_timing) {
    std::string out = "epoch,step,loss,acc,r_a,l_a,step1_ms,step2_ms,peak_bytes\n";
    for (const EpochRow& r : summary.rows) {
        out += std::to_string(r.epoch) + "," + std::to_string(r.step) + "," +
               fmt(r.loss) + "," + fmt(r.acc) + "," + fmt(r.r_a) + "," +
               std::to_string(r.l_a) + ",";
        if (record_timing)
            out += fmt(r.step1_ms, "%.0f") + "," + fmt(r.step2_ms, "%.0f");
        else
            out += "0,0";
        out += "," + std::to_string(r.peak_bytes) + "\n";
    }
    return out;
}

std::string summary_json(const TrainConfig& cfg, const RunSummary& summary) {
    nlohmann::json j;
    j["arch"] = cfg.arch;
    j["seed"] = cfg.seed;
    j["total_epochs"] = cfg.total_epochs;
    j["retrain_enabled"] = cfg.retrain.enabled;
    j["final_test_accuracy"] = summary.final_test_accuracy;
    j["final_train_accuracy"] = summary.final_train_accuracy;
    j["totals"] = {{"step1_ms", summary.total_step1_ms},
                   {"step2_ms", summary.total_step2_ms},
                   {"max_peak_bytes", summary.max_peak_bytes}};
    j["epochs"] = nlohmann::json::array();
    for (std::size_t i = 0; i < summary.reports.size(); ++i) {
        const GeneralEpochReport& r = summary.reports[i];
        nlohmann::json e;
        e["epoch"] = r.epoch;
        e["r_a"] = r.rate;
        e["l_a"] = r.l_a;
        e["step1"] = {{"loss", r.step1.avg_loss},
                      {"train_accuracy", r.step1.train_accuracy},
                      {"steps", r.step1.steps},
                      {"backward_flops", r.step1.backward_flops}};
        if (r.retrained) {
            nlohmann::json layers = nlohmann::json::array();
            for (const auto& s : r.step2.layers)
                layers.push_back({{"residual_before", s.residual_before},
                                  {"residual_after", s.residual_after},
                                  {"batches", s.batches},
                                  {"eta_norm", s.eta_norm}});
            e["step2"] = {{"layers", layers}, {"peak_bytes", r.step2.peak_bytes}};
        }
        if (r.eval_accuracy >= 0.0) e["eval_accuracy"] = r.eval_accuracy;
        j["epochs"].push_back(e);
    }
    return j.dump(2) + "\n";
}

RunSummary run_train(const TrainConfig& cfg) {
    Dataset train;
    std::optional<Dataset> test;
    load_dataset_pair(cfg.dataset, cfg.seed, train, test);

    Net net = make_net(cfg.arch, train.shape, static_cast<std::size_t>(train.num_classes),
                       cfg.seed, cfg.dense_dropout);
    SgdState state;
    const RateSchedule schedule = cfg.ra_schedule();

    RunSummary summary;
    std::size_t cumulative_steps = 0;
    for (std::size_t epoch = 0; epoch < cfg.total_epochs; ++epoch) {
        GeneralEpochReport rep =
            general_epoch(net, train, test ? &*test : nullptr, cfg.sgd, schedule,
                          cfg.retrain, epoch, state);
        cumulative_steps += rep.step1.steps;

        EpochRow row;
        row.epoch = epoch;
        row.step = cumulative_steps;
        row.loss = rep.step1.avg_loss;
        row.acc = rep.eval_accuracy >= 0.0 ? rep.eval_accuracy
                                           : rep.step1.train_accuracy;
        row.r_a = rep.rate;
        row.l_a = rep.l_a;
        row.step1_ms = rep.step1.wall_ms;
        row.step2_ms = rep.retrained ? rep.step2.duration_ms : 0.0;
        row.peak_bytes = rep.retrained ? rep.step2.peak_bytes : 0;
        summary.rows.push_back(row);

        summary.total_step1_ms += row.step1_ms;
        summary.total_step2_ms += row.step2_ms;
        summary.max_peak_bytes = std::max(summary.max_peak_bytes, row.peak_bytes);
        summary.reports.push_back(std::move(rep));
    }
    summary.final_train_accuracy = accuracy(net, train);
    if (test) summary.final_test_accuracy = accuracy(net, *test);

    if (!cfg.output_dir.empty()) {
        std::filesystem::create_directories(cfg.output_dir);
        const std::filesystem::path dir(cfg.output_dir);
        write_file((dir / "metrics.csv").string(),
                   metrics_csv(summary, cfg.record_timing));
        write_file((dir / "summary.json").string(), summary_json(cfg, summary));
        write_file((dir / "config.resolved").string(), render_train_config(cfg));
        save_checkpoint(net, (dir / "checkpoint.bin").string());
        summary.output_dir = cfg.output_dir;
    }
    return summary;
}

namespace {

// Deterministic uniform[-1,1] chunk shared by both bench-memory paths.
Mat bench_chunk(std::size_t rows, std::size_t cols, std::uint64_t seed,
                std::size_t chunk_idx, std::uint32_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(chunk_idx), salt};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Mat m(rows, cols);
    for (double& v : m.data()) v = dist(rng);
    return m;
}

}  // namespace

std::vector<MemoryBenchRow> run_bench_memory(std::size_t n, std::size_t d,
                                             std::size_t c,
                                             const std::vector<std::size_t>& batches,
                                             double reg_c, std::uint64_t seed) {
    std::vector<MemoryBenchRow> rows;
    for (const std::size_t mp_batch : batches) {
        if (mp_batch == 0 || mp_batch > n)
            throw DomainError("bench-memory: batch size must be in [1, N]");
        MemoryBenchRow row;
        row.mp_batch = mp_batch;
        const std::size_t n_chunks = (n + mp_batch - 1) / mp_batch;

        // one-shot: materialize the full system, solve once
        Mat eta_oneshot;
        {
            memtrack::reset();
            const auto t0 = std::chrono::steady_clock::now();
            Mat h(n, d), e(n, c);
            for (std::size_t k = 0; k < n_chunks; ++k) {
                const std::size_t start = k * mp_batch;
                const std::size_t rowsk = std::min(mp_batch, n - start);
                Mat hk = bench_chunk(rowsk, d, seed, k, 0x68656864u);
                Mat ek = bench_chunk(rowsk, c, seed, k, 0x65656565u);
                for (std::size_t i = 0; i < rowsk; ++i) {
                    std::memcpy(h.row(start + i).data(), hk.row(i).data(),
                                d * sizeof(double));
                    std::memcpy(e.row(start + i).data(), ek.row(i).data(),
                                c * sizeof(double));
                }
            }
            eta_oneshot = ridge_solve(h, e, reg_c);
            row.oneshot_ms = std::chrono::duration<double, std::milli>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count();
            row.oneshot_peak_bytes = memtrack::peak_delta();
        }

        // batch-by-batch on the identical data stream
        {
            memtrack::reset();
            const auto t0 = std::chrono::steady_clock::now();
            RlsState st;
            for (std::size_t k = 0; k < n_chunks; ++k) {
                const std::size_t start = k * mp_batch;
                const std::size_t rowsk = std::min(mp_batch, n - start);
                Mat hk = bench_chunk(rowsk, d, seed, k, 0x68656864u);
                Mat ek = bench_chunk(rowsk, c, seed, k, 0x65656565u);
                if (k == 0)
                    st = rls_init(hk, ek, reg_c);
                else
                    rls_update(st, hk, ek);
            }
            row.rls_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
            row.rls_peak_bytes = memtrack::peak_delta();
            row.divergence = rel_frobenius_diff(st.eta, eta_oneshot);
        }
        row.peak_ratio = static_cast<double>(row.rls_peak_bytes) /
                         static_cast<double>(row.oneshot_peak_bytes);
        rows.push_back(row);
    }
    return rows;
}

std::string memory_bench_csv(const std::vector<MemoryBenchRow>& rows) {
    std::string out =
        "mp_batch,oneshot_peak_bytes,rls_peak_bytes,peak_ratio,divergence,"
        "oneshot_ms,rls_ms\n";
    for (const auto& r : rows)
        out += std::to_string(r.mp_batch) + "," +
               std::to_string(r.oneshot_peak_bytes) + "," +
               std::to_string(r.rls_peak_bytes) + "," + fmt(r.peak_ratio) + "," +
               fmt(r.divergence, "%.3e") + "," + fmt(r.oneshot_ms, "%.1f") + "," +
               fmt(r.rls_ms, "%.1f") + "\n";
    return out;
}

std::string memory_bench_json(const std::vector<MemoryBenchRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows)
        j.push_back({{"mp_batch", r.mp_batch},
                     {"oneshot_peak_bytes", r.oneshot_peak_bytes},
                     {"rls_peak_bytes", r.rls_peak_bytes},
                     {"peak_ratio", r.peak_ratio},
                     {"divergence", r.divergence},
                     {"oneshot_ms", r.oneshot_ms},
                     {"rls_ms", r.rls_ms}});
    return j.dump(2) + "\n";
}

std::vector<FreezeBenchRow> run_bench_freeze(const TrainConfig& cfg,
                                             const std::vector<double>& rates,
                                             std::size_t epochs_per_rate) {
    Dataset train;
    std::optional<Dataset> test;
    load_dataset_pair(cfg.dataset, cfg.seed, train, test);

    std::vector<FreezeBenchRow> rows;
    for (const double rate : rates) {
        if (rate < 0.0 || rate > 1.0)
            throw DomainError("bench-freeze: rates must lie in [0,1]");
        Net net = make_net(cfg.arch, train.shape,
                           static_cast<std::size_t>(train.num_classes), cfg.seed,
                           cfg.dense_dropout);
        SgdState state;
        SgdConfig sgd = cfg.sgd;
        sgd.total_epochs = std::max(sgd.total_epochs, epochs_per_rate);

        FreezeBenchRow row;
        row.rate = rate;
        std::vector<double> wall;
        double flops = 0.0;
        for (std::size_t epoch = 0; epoch < epochs_per_rate; ++epoch) {
            const FreezePlan plan =
                plan_epoch(net.conv_count(), rate, cfg.seed, epoch);
            row.l_a = plan.l_a;

            // frozen-parameter integrity is part of the measurement contract
            std::vector<std::vector<double>> frozen_kernels;
            std::vector<std::size_t> frozen_idx;
            for (std::size_t i = 0; i < net.conv.size(); ++i)
                if (!plan.is_active(i)) {
                    frozen_idx.push_back(i);
                    frozen_kernels.push_back(net.conv[i].kernels);
                }

            const EpochStats stats = sgd_epoch(net, train, sgd, plan, epoch, state);
            wall.push_back(stats.wall_ms);
            flops = stats.backward_flops;

            for (std::size_t t = 0; t < frozen_idx.size(); ++t)
                if (std::memcmp(frozen_kernels[t].data(),
                                net.conv[frozen_idx[t]].kernels.data(),
                                frozen_kernels[t].size() * sizeof(double)) != 0)
                    throw DivergenceError("bench-freeze: frozen conv layer " +
                                          std::to_string(frozen_idx[t]) +
                                          " changed during epoch " +
                                          std::to_string(epoch));
        }
        std::sort(wall.begin(), wall.end());
        row.median_epoch_ms = wall[wall.size() / 2];
        row.backward_flops = flops;
        rows.push_back(row);
    }
    for (auto& row : rows) {
        const auto baseline =
            std::find_if(rows.begin(), rows.end(),
                         [](const FreezeBenchRow& r) { return r.rate == 1.0; });
        if (baseline != rows.end() && baseline->backward_flops > 0.0) {
            row.flop_ratio = row.backward_flops / baseline->backward_flops;
            row.time_ratio = row.median_epoch_ms / baseline->median_epoch_ms;
        }
    }
    return rows;
}

std::string freeze_bench_csv(const std::vector<FreezeBenchRow>& rows) {
    std::string out =
        "rate,l_a,median_epoch_ms,backward_flops,flop_ratio,time_ratio\n";
    for (const auto& r : rows)
        out += fmt(r.rate) + "," + std::to_string(r.l_a) + "," +
               fmt(r.median_epoch_ms, "%.1f") + "," + fmt(r.backward_flops, "%.4e") +
               "," + fmt(r.flop_ratio, "%.4f") + "," + fmt(r.time_ratio, "%.4f") +
               "\n";
    return out;
}

std::vector<CompareRow> run_compare(const std::vector<std::string>& config_paths,
                                    const std::vector<std::uint64_t>& seeds) {
    if (config_paths.size() < 2)
        throw ConfigError("compare needs at least two configs");
    if (seeds.empty()) throw ConfigError("compare needs at least one seed");

    std::vector<CompareRow> rows;
    for (const std::string& path : config_paths) {
        CompareRow row;
        row.config = path;
        for (const std::uint64_t seed : seeds) {
            TrainConfig cfg = load_train_config(path);
            cfg.seed = seed;
            cfg.sgd.seed = seed;
            cfg.output_dir.clear();  // no artifacts for sweep members
            const RunSummary s = run_train(cfg);
            row.per_seed.push_back(s.final_test_accuracy >= 0.0
                                       ? s.final_test_accuracy
                                       : s.final_train_accuracy);
        }
        double mean = 0.0;
        for (double a : row.per_seed) mean += a;
        mean /= static_cast<double>(row.per_seed.size());
        double var = 0.0;
        for (double a : row.per_seed) var += (a - mean) * (a - mean);
        var /= static_cast<double>(row.per_seed.size());
        row.mean_accuracy = mean;
        row.std_accuracy = std::sqrt(var);
        rows.push_back(row);
    }
    return rows;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
    std::string out = "config,mean_accuracy,std_accuracy,per_seed\n";
    for (const auto& r : rows) {
        out += r.config + "," + fmt(r.mean_accuracy) + "," + fmt(r.std_accuracy) + ",";
        for (std::size_t i = 0; i < r.per_seed.size(); ++i) {
            if (i) out += ";";
            out += fmt(r.per_seed[i]);
        }
        out += "\n";
    }
    return out;
}

}  // namespace fr
