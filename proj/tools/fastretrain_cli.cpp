// Command-line front end: train, bench-memory, bench-freeze, compare,
// gen-data, eval.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fr/checkpoint.hpp"
#include "fr/runner.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;

void write_or_print(const std::string& path, const std::string& content) {
    if (path.empty()) {
        std::cout << content;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw fr::IoError("cannot write " + path);
    out << content;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"fast-retraining trainer: SGD with random conv-layer freezing "
                 "plus batch-by-batch MP-inverse dense retraining"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "run a full training config");
    std::string train_config;
    train->add_option("--config", train_config, "run config file")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string eval_checkpoint, eval_config;
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint.bin path")
        ->required();
    eval->add_option("--config", eval_config,
                     "config whose dataset section names the eval data")
        ->required();

    // bench-memory
    auto* bmem = app.add_subcommand(
        "bench-memory", "one-shot vs batch-by-batch solver peak memory");
    std::size_t bm_n = 50000, bm_d = 256, bm_c = 10;
    std::vector<std::size_t> bm_batches{1024};
    double bm_reg_c = 10.0;
    std::uint64_t bm_seed = 1;
    std::string bm_out;
    bmem->add_option("--n", bm_n, "sample count");
    bmem->add_option("--d", bm_d, "feature width");
    bmem->add_option("--c", bm_c, "output width");
    bmem->add_option("--batch", bm_batches, "MP-inverse batch sizes");
    bmem->add_option("--reg-c", bm_reg_c, "regularization C");
    bmem->add_option("--seed", bm_seed, "data seed");
    bmem->add_option("--out", bm_out, "output directory (default: stdout)");

    // bench-freeze
    auto* bfrz = app.add_subcommand(
        "bench-freeze", "epoch cost at constant activation rates");
    std::string bf_config;
    std::vector<double> bf_rates{1.0, 0.8, 0.6, 0.4};
    std::size_t bf_epochs = 5;
    std::string bf_out;
    bfrz->add_option("--config", bf_config, "run config file")->required();
    bfrz->add_option("--rates", bf_rates, "activation rates to benchmark");
    bfrz->add_option("--epochs", bf_epochs, "epochs per rate");
    bfrz->add_option("--out", bf_out, "output file (default: stdout)");

    // compare
    auto* cmp = app.add_subcommand(
        "compare", "final accuracy mean/std over seeds per config");
    std::vector<std::string> cmp_configs;
    std::vector<std::uint64_t> cmp_seeds{1, 2, 3};
    std::string cmp_out;
    cmp->add_option("--config", cmp_configs, "config files (two or more)")
        ->required();
    cmp->add_option("--seeds", cmp_seeds, "seeds to sweep");
    cmp->add_option("--out", cmp_out, "output file (default: stdout)");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
    std::string gd_kind = "blobs", gd_format = "csv", gd_out = "dataset";
    std::size_t gd_n = 200;
    int gd_classes = 3;
    double gd_noise = 0.05;
    std::uint64_t gd_seed = 1;
    gen->add_option("--kind", gd_kind, "blobs | spirals | digits");
    gen->add_option("--format", gd_format, "csv | idx");
    gen->add_option("--n-per-class", gd_n, "samples per class");
    gen->add_option("--classes", gd_classes, "class count");
    gen->add_option("--noise", gd_noise, "noise level");
    gen->add_option("--seed", gd_seed, "generator seed");
    gen->add_option("--out", gd_out, "output path prefix");

    CLI11_PARSE(app, argc, argv);

    if (train->parsed()) {
        const fr::TrainConfig cfg = fr::load_train_config(train_config);
        const fr::RunSummary s = fr::run_train(cfg);
        std::printf("run complete: %zu epochs, final train acc %.4f",
                    s.rows.size(), s.final_train_accuracy);
        if (s.final_test_accuracy >= 0.0)
            std::printf(", test acc %.4f", s.final_test_accuracy);
        std::printf("\n  artifacts in %s\n", cfg.output_dir.c_str());
    } else if (eval->parsed()) {
        const fr::TrainConfig cfg = fr::load_train_config(eval_config);
        const fr::Net net = fr::load_checkpoint(eval_checkpoint);
        fr::Dataset ds_train;
        std::optional<fr::Dataset> ds_test;
        fr::load_dataset_pair(cfg.dataset, cfg.seed, ds_train, ds_test);
        const fr::Dataset& ds = ds_test ? *ds_test : ds_train;
        std::printf("accuracy on %s (%zu samples): %.4f\n", ds.name.c_str(),
                    ds.size(), fr::accuracy(net, ds));
    } else if (bmem->parsed()) {
        const auto rows =
            fr::run_bench_memory(bm_n, bm_d, bm_c, bm_batches, bm_reg_c, bm_seed);
        if (bm_out.empty()) {
            std::cout << fr::memory_bench_csv(rows);
        } else {
            std::filesystem::create_directories(bm_out);
            write_or_print(bm_out + "/bench_memory.csv", fr::memory_bench_csv(rows));
            write_or_print(bm_out + "/bench_memory.json",
                           fr::memory_bench_json(rows));
        }
    } else if (bfrz->parsed()) {
        const fr::TrainConfig cfg = fr::load_train_config(bf_config);
        const auto rows = fr::run_bench_freeze(cfg, bf_rates, bf_epochs);
        write_or_print(bf_out, fr::freeze_bench_csv(rows));
    } else if (cmp->parsed()) {
        const auto rows = fr::run_compare(cmp_configs, cmp_seeds);
        write_or_print(cmp_out, fr::compare_csv(rows));
    } else if (gen->parsed()) {
        const fr::Dataset ds =
            fr::gen_synthetic(gd_kind, gd_n, gd_classes, gd_noise, gd_seed);
        if (gd_format == "csv") {
            fr::save_csv(ds, gd_out + ".csv");
            std::printf("wrote %s.csv (%zu samples)\n", gd_out.c_str(), ds.size());
        } else if (gd_format == "idx") {
            fr::save_idx(ds, gd_out + "-images-idx3-ubyte",
                         gd_out + "-labels-idx1-ubyte");
            std::printf("wrote %s-{images,labels} (%zu samples)\n", gd_out.c_str(),
                        ds.size());
        } else {
            throw fr::ConfigError("gen-data: format must be csv or idx");
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const fr::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const fr::DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return kExitDivergence;
    } catch (const fr::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
