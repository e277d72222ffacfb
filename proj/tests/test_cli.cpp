#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

std::string cli_path() {
    const char* p = std::getenv("FR_CLI");
    REQUIRE_MESSAGE(p != nullptr, "FR_CLI must point at the fastretrain binary");
    return p;
}

RunResult run_cli(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult r;
    std::array<char, 4096> buf;
    while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe))
        r.output.append(buf.data(), n);
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    const std::string missing = "missing file: " + p.string();
    REQUIRE_MESSAGE(in.good(), missing);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::path("/tmp") / ("fr_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

std::string blobs_config(const fs::path& out_dir, const std::string& extra = "") {
    return "arch = mlp\n"
           "total_epochs = 8\n"
           "seed = 3\n"
           "dataset.kind = synthetic\n"
           "dataset.synthetic = blobs\n"
           "dataset.n_per_class = 30\n"
           "dataset.classes = 3\n"
           "dataset.noise = 0.1\n"
           "sgd.lr = 0:0.05\n"
           "sgd.mini_batch = 16\n"
           "ra_schedule = 0:1.0,0.25:0.8,0.5:0.6,0.75:0.4\n"
           "retrain.c = 4\n"
           "retrain.mp_batch_size = 32\n"
           "output_dir = " +
           out_dir.string() + "\n" + extra;
}

std::vector<std::string> csv_column(const std::string& csv, const std::string& name) {
    std::stringstream ss(csv);
    std::string line;
    REQUIRE(std::getline(ss, line));
    std::vector<std::string> header;
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
    const auto it = std::find(header.begin(), header.end(), name);
    const std::string missing = "no column " + name + " in: " + csv;
    REQUIRE_MESSAGE(it != header.end(), missing);
    const std::size_t col = it - header.begin();
    std::vector<std::string> out;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        REQUIRE(cells.size() > col);
        out.push_back(cells[col]);
    }
    return out;
}

}  // namespace

TEST_CASE("cli: no subcommand is an error") {
    CHECK(run_cli("").exit_code != 0);
}

TEST_CASE("cli: missing config file exits with the I/O code") {
    const RunResult r = run_cli("train --config /tmp/fr_cli_no_such_file.cfg");
    CHECK(r.exit_code == 4);
    CHECK(r.output.find("io error") != std::string::npos);
}

TEST_CASE("cli: invalid config value exits with the config code") {
    const fs::path dir = fresh_dir("badcfg");
    write_file(dir / "bad.cfg", blobs_config(dir / "run", "retrain.mu = 0\n"));
    const RunResult r = run_cli("train --config " + (dir / "bad.cfg").string());
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("retrain.mu") != std::string::npos);
}

TEST_CASE("cli: non-finite training data exits with the divergence code") {
    const fs::path dir = fresh_dir("diverge");
    // absurd feature magnitudes overflow the forward pass immediately
    write_file(dir / "data.csv",
               "f0,f1,label\n"
               "1e308,1e308,0\n"
               "-1e308,1e308,1\n"
               "1e308,-1e308,2\n"
               "-1e308,-1e308,0\n");
    write_file(dir / "run.cfg",
               "arch = mlp\n"
               "total_epochs = 2\n"
               "seed = 1\n"
               "dataset.kind = csv\n"
               "dataset.csv = " +
                   (dir / "data.csv").string() +
                   "\n"
                   "sgd.lr = 0:1000\n"
                   "sgd.mini_batch = 4\n"
                   "retrain.enabled = false\n"
                   "output_dir = " +
                   (dir / "run").string() + "\n");
    const RunResult r = run_cli("train --config " + (dir / "run.cfg").string());
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("divergence") != std::string::npos);
}

TEST_CASE("cli: train writes all artifacts and the scheduled r_a column") {
    const fs::path dir = fresh_dir("train");
    write_file(dir / "run.cfg", blobs_config(dir / "run"));
    const RunResult r = run_cli("train --config " + (dir / "run.cfg").string());
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    CHECK(r.output.find("run complete") != std::string::npos);

    for (const char* f :
         {"metrics.csv", "summary.json", "checkpoint.bin", "config.resolved"})
        CHECK_MESSAGE(fs::exists(dir / "run" / f), f);

    const std::string metrics = slurp(dir / "run" / "metrics.csv");
    const auto ra = csv_column(metrics, "r_a");
    REQUIRE(ra.size() == 8);
    const char* expected[8] = {"1", "1", "0.8", "0.8", "0.6", "0.6", "0.4", "0.4"};
    for (std::size_t i = 0; i < 8; ++i)
        CHECK(std::stod(ra[i]) == doctest::Approx(std::stod(expected[i])));

    // epoch column is 0..7, timing columns stay zero by default
    const auto epochs = csv_column(metrics, "epoch");
    for (std::size_t i = 0; i < 8; ++i) CHECK(epochs[i] == std::to_string(i));
    for (const std::string& v : csv_column(metrics, "step1_ms"))
        CHECK(std::stod(v) == 0.0);

    const std::string summary = slurp(dir / "run" / "summary.json");
    CHECK(summary.find("\"residual_before\"") != std::string::npos);
    CHECK(summary.find("\"residual_after\"") != std::string::npos);
    CHECK(summary.find("\"final_test_accuracy\"") != std::string::npos);

    // the checkpoint evaluates through the eval subcommand
    const RunResult ev =
        run_cli("eval --checkpoint " + (dir / "run" / "checkpoint.bin").string() +
                " --config " + (dir / "run.cfg").string());
    REQUIRE_MESSAGE(ev.exit_code == 0, ev.output);
    CHECK(ev.output.find("accuracy") != std::string::npos);
}

TEST_CASE("cli: identical train runs emit byte-identical metrics.csv") {
    const fs::path dir = fresh_dir("repeat");
    write_file(dir / "a.cfg", blobs_config(dir / "run_a"));
    write_file(dir / "b.cfg", blobs_config(dir / "run_b"));
    REQUIRE(run_cli("train --config " + (dir / "a.cfg").string()).exit_code == 0);
    REQUIRE(run_cli("train --config " + (dir / "b.cfg").string()).exit_code == 0);
    CHECK(slurp(dir / "run_a" / "metrics.csv") == slurp(dir / "run_b" / "metrics.csv"));
}

TEST_CASE("cli: retraining ablation switch changes step 2 reporting") {
    const fs::path dir = fresh_dir("ablate");
    write_file(dir / "off.cfg",
               blobs_config(dir / "run_off", "retrain.enabled = false\n"));
    REQUIRE(run_cli("train --config " + (dir / "off.cfg").string()).exit_code == 0);
    const std::string summary = slurp(dir / "run_off" / "summary.json");
    CHECK(summary.find("\"step2\"") == std::string::npos);
    CHECK(summary.find("\"residual_before\"") == std::string::npos);
}

TEST_CASE("cli: gen-data writes loadable csv and idx datasets") {
    const fs::path dir = fresh_dir("gendata");
    const RunResult csv = run_cli("gen-data --kind blobs --n-per-class 5 --out " +
                                  (dir / "blobs").string());
    REQUIRE_MESSAGE(csv.exit_code == 0, csv.output);
    CHECK(fs::exists(dir / "blobs.csv"));

    const RunResult idx = run_cli(
        "gen-data --kind digits --classes 10 --n-per-class 3 --format idx --out " +
        (dir / "dig").string());
    REQUIRE_MESSAGE(idx.exit_code == 0, idx.output);
    CHECK(fs::exists(dir / "dig-images-idx3-ubyte"));
    CHECK(fs::exists(dir / "dig-labels-idx1-ubyte"));

    CHECK(run_cli("gen-data --format yaml").exit_code == 2);
}

TEST_CASE("cli: bench-memory reports ratios and tiny divergence") {
    const fs::path dir = fresh_dir("benchmem");
    const RunResult r = run_cli(
        "bench-memory --n 512 --d 16 --c 4 --batch 512 64 --reg-c 4 --out " +
        dir.string());
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    const std::string csv = slurp(dir / "bench_memory.csv");
    const auto divergence = csv_column(csv, "divergence");
    REQUIRE(divergence.size() == 2);
    for (const std::string& d : divergence) CHECK(std::stod(d) <= 1e-8);
    // single-batch row: both paths materialize everything at once
    const auto ratios = csv_column(csv, "peak_ratio");
    CHECK(std::stod(ratios[0]) >= 0.5);
    // chunked row strictly cheaper than one-shot
    CHECK(std::stod(ratios[1]) < 1.0);
    CHECK(fs::exists(dir / "bench_memory.json"));
}

TEST_CASE("cli: bench-freeze column is monotone in the activation rate") {
    const fs::path dir = fresh_dir("benchfrz");
    write_file(dir / "run.cfg",
               "arch = cnn-s\n"
               "total_epochs = 1\n"
               "seed = 5\n"
               "dataset.kind = synthetic\n"
               "dataset.synthetic = digits\n"
               "dataset.n_per_class = 4\n"
               "dataset.classes = 10\n"
               "sgd.mini_batch = 8\n"
               "retrain.enabled = false\n"
               "output_dir = " +
                   (dir / "run").string() + "\n");
    const RunResult r =
        run_cli("bench-freeze --config " + (dir / "run.cfg").string() +
                " --rates 1.0 0.6 0.4 --epochs 1 --out " +
                (dir / "freeze.csv").string());
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    const auto flops = csv_column(slurp(dir / "freeze.csv"), "backward_flops");
    REQUIRE(flops.size() == 3);
    CHECK(std::stod(flops[1]) <= std::stod(flops[0]));
    CHECK(std::stod(flops[2]) <= std::stod(flops[1]));
    CHECK(std::stod(flops[2]) < std::stod(flops[0]));
}

TEST_CASE("cli: compare needs at least two configs and sweeps seeds") {
    const fs::path dir = fresh_dir("compare");
    write_file(dir / "a.cfg",
               blobs_config(dir / "run_cmp", "retrain.enabled = false\n"));
    write_file(dir / "b.cfg", blobs_config(dir / "run_cmp"));

    CHECK(run_cli("compare --config " + (dir / "a.cfg").string()).exit_code == 2);

    const RunResult r =
        run_cli("compare --config " + (dir / "a.cfg").string() + " " +
                (dir / "b.cfg").string() + " --seeds 1 2 --out " +
                (dir / "cmp.csv").string());
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    const std::string csv = slurp(dir / "cmp.csv");
    const auto means = csv_column(csv, "mean_accuracy");
    REQUIRE(means.size() == 2);
    for (const std::string& m : means) {
        CHECK(std::stod(m) >= 0.0);
        CHECK(std::stod(m) <= 1.0);
    }
}
