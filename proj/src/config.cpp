#include "fr/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fr {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(key + ": '" + v + "' is not a number");
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const unsigned long long u = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return u;
    } catch (const std::exception&) {
        throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": '" + v + "' is not a boolean");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(parse_double(key, trim(cell)));
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
}

std::vector<LrMilestone> parse_lr_milestones(const std::string& key,
                                             const std::string& v) {
    std::vector<LrMilestone> out;
    std::stringstream ss(v);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        cell = trim(cell);
        const auto colon = cell.find(':');
        if (colon == std::string::npos)
            throw ConfigError(key + ": entry '" + cell + "' is not fraction:lr");
        out.push_back({parse_double(key, cell.substr(0, colon)),
                       parse_double(key, cell.substr(colon + 1))});
    }
    if (out.empty() || out.front().fraction != 0.0)
        throw ConfigError(key + ": must start at fraction 0");
    for (const auto& m : out)
        if (!(m.lr > 0.0)) throw ConfigError(key + ": lr must be > 0");
    return out;
}

}  // namespace

KeyValueFile KeyValueFile::parse_text(const std::string& text) {
    KeyValueFile kv;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) +
                              ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) +
                                           ": empty key");
        kv.values[key] = value;
    }
    return kv;
}

KeyValueFile KeyValueFile::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

bool KeyValueFile::has(const std::string& key) const { return values.count(key) > 0; }

std::string KeyValueFile::get(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) throw ConfigError("missing required key: " + key);
    return it->second;
}

std::string KeyValueFile::get_or(const std::string& key,
                                 const std::string& fallback) const {
    const auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
}

std::string KeyValueFile::render() const {
    std::string out;
    for (const auto& [k, v] : values) out += k + " = " + v + "\n";
    return out;
}

RateSchedule TrainConfig::ra_schedule() const {
    return parse_rate_schedule(ra_schedule_text, total_epochs);
}

TrainConfig parse_train_config(const KeyValueFile& kv) {
    TrainConfig cfg;
    cfg.arch = kv.get_or("arch", "mlp");
    if (cfg.arch != "mlp" && cfg.arch != "cnn-s")
        throw ConfigError("arch: must be mlp or cnn-s");

    cfg.total_epochs = parse_uint("total_epochs", kv.get("total_epochs"));
    if (cfg.total_epochs == 0) throw ConfigError("total_epochs: must be >= 1");
    cfg.seed = parse_uint("seed", kv.get("seed"));  // reproducibility mandatory

    DatasetSpec& ds = cfg.dataset;
    ds.kind = kv.get_or("dataset.kind", "synthetic");
    if (ds.kind == "synthetic") {
        ds.synthetic = kv.get_or("dataset.synthetic", "blobs");
        ds.n_per_class = parse_uint("dataset.n_per_class",
                                    kv.get_or("dataset.n_per_class", "200"));
        ds.classes = static_cast<int>(
            parse_uint("dataset.classes", kv.get_or("dataset.classes", "3")));
        ds.noise = parse_double("dataset.noise", kv.get_or("dataset.noise", "0.05"));
        ds.test_fraction = parse_double("dataset.test_fraction",
                                        kv.get_or("dataset.test_fraction", "0.2"));
        if (ds.test_fraction < 0.0 || ds.test_fraction >= 1.0)
            throw ConfigError("dataset.test_fraction: must be in [0,1)");
    } else if (ds.kind == "idx") {
        ds.images = kv.get("dataset.images");
        ds.labels = kv.get("dataset.labels");
        ds.test_images = kv.get_or("dataset.test_images", "");
        ds.test_labels = kv.get_or("dataset.test_labels", "");
    } else if (ds.kind == "csv") {
        ds.csv = kv.get("dataset.csv");
        ds.test_csv = kv.get_or("dataset.test_csv", "");
    } else {
        throw ConfigError("dataset.kind: must be synthetic, idx, or csv");
    }

    cfg.sgd.lr_milestones =
        parse_lr_milestones("sgd.lr", kv.get_or("sgd.lr", "0:0.01"));
    cfg.sgd.momentum = parse_double("sgd.momentum", kv.get_or("sgd.momentum", "0"));
    if (cfg.sgd.momentum < 0.0) throw ConfigError("sgd.momentum: must be >= 0");
    cfg.sgd.mini_batch =
        parse_uint("sgd.mini_batch", kv.get_or("sgd.mini_batch", "32"));
    if (cfg.sgd.mini_batch == 0) throw ConfigError("sgd.mini_batch: must be >= 1");
    cfg.sgd.seed = cfg.seed;
    cfg.sgd.total_epochs = cfg.total_epochs;

    cfg.ra_schedule_text = kv.get_or("ra_schedule", "0:1.0");
    parse_rate_schedule(cfg.ra_schedule_text, cfg.total_epochs);  // validate now

    cfg.retrain.enabled =
        parse_bool("retrain.enabled", kv.get_or("retrain.enabled", "true"));
    cfg.retrain.reg_c = parse_double_list("retrain.c", kv.get_or("retrain.c", "4"));
    for (double c : cfg.retrain.reg_c)
        if (!(c > 0.0)) throw ConfigError("retrain.c: C must be > 0");
    cfg.retrain.mu = parse_double("retrain.mu", kv.get_or("retrain.mu", "1.0"));
    if (!(cfg.retrain.mu > 0.0) || cfg.retrain.mu > 1.0)
        throw ConfigError("retrain.mu: must be in (0,1]");
    cfg.retrain.mp_batch = parse_uint("retrain.mp_batch_size",
                                      kv.get_or("retrain.mp_batch_size", "1024"));
    if (cfg.retrain.mp_batch == 0)
        throw ConfigError("retrain.mp_batch_size: must be >= 1");
    cfg.dense_dropout = parse_double("retrain.dropout_rate",
                                     kv.get_or("retrain.dropout_rate", "0"));
    if (cfg.dense_dropout < 0.0 || cfg.dense_dropout >= 1.0)
        throw ConfigError("retrain.dropout_rate: must be in [0,1)");

    cfg.record_timing =
        parse_bool("metrics.timing", kv.get_or("metrics.timing", "false"));
    cfg.output_dir = kv.get_or("output_dir", "run");
    if (const char* env = std::getenv("FR_OUTPUT_DIR"); env && *env)
        cfg.output_dir = env;
    return cfg;
}

TrainConfig load_train_config(const std::string& path) {
    return parse_train_config(KeyValueFile::parse_file(path));
}

std::string render_train_config(const TrainConfig& cfg) {
    std::ostringstream out;
    out << "arch = " << cfg.arch << "\n";
    out << "total_epochs = " << cfg.total_epochs << "\n";
    out << "seed = " << cfg.seed << "\n";
    const DatasetSpec& ds = cfg.dataset;
    out << "dataset.kind = " << ds.kind << "\n";
    if (ds.kind == "synthetic") {
        out << "dataset.synthetic = " << ds.synthetic << "\n";
        out << "dataset.n_per_class = " << ds.n_per_class << "\n";
        out << "dataset.classes = " << ds.classes << "\n";
        out << "dataset.noise = " << ds.noise << "\n";
        out << "dataset.test_fraction = " << ds.test_fraction << "\n";
    } else if (ds.kind == "idx") {
        out << "dataset.images = " << ds.images << "\n";
        out << "dataset.labels = " << ds.labels << "\n";
        if (!ds.test_images.empty()) {
            out << "dataset.test_images = " << ds.test_images << "\n";
            out << "dataset.test_labels = " << ds.test_labels << "\n";
        }
    } else {
        out << "dataset.csv = " << ds.csv << "\n";
        if (!ds.test_csv.empty()) out << "dataset.test_csv = " << ds.test_csv << "\n";
    }
    out << "sgd.lr = ";
    for (std::size_t i = 0; i < cfg.sgd.lr_milestones.size(); ++i) {
        if (i) out << ",";
        out << cfg.sgd.lr_milestones[i].fraction << ":" << cfg.sgd.lr_milestones[i].lr;
    }
    out << "\n";
    out << "sgd.momentum = " << cfg.sgd.momentum << "\n";
    out << "sgd.mini_batch = " << cfg.sgd.mini_batch << "\n";
    out << "ra_schedule = " << cfg.ra_schedule_text << "\n";
    out << "retrain.enabled = " << (cfg.retrain.enabled ? "true" : "false") << "\n";
    out << "retrain.c = ";
    for (std::size_t i = 0; i < cfg.retrain.reg_c.size(); ++i) {
        if (i) out << ",";
        out << cfg.retrain.reg_c[i];
    }
    out << "\n";
    out << "retrain.mu = " << cfg.retrain.mu << "\n";
    out << "retrain.mp_batch_size = " << cfg.retrain.mp_batch << "\n";
    out << "retrain.dropout_rate = " << cfg.dense_dropout << "\n";
    out << "metrics.timing = " << (cfg.record_timing ? "true" : "false") << "\n";
    out << "output_dir = " << cfg.output_dir << "\n";
    return out.str();
}

void load_dataset_pair(const DatasetSpec& spec, std::uint64_t seed, Dataset& train,
                       std::optional<Dataset>& test) {
    test.reset();
    if (spec.kind == "synthetic") {
        Dataset all = gen_synthetic(spec.synthetic, spec.n_per_class, spec.classes,
                                    spec.noise, seed);
        if (spec.test_fraction <= 0.0) {
            train = std::move(all);
            return;
        }
        // deterministic shuffled split
        const auto perm = batch_indices(all.size(), all.size(), seed, 0xABCD).front();
        Dataset shuffled = all;
        shuffled.features = gather_rows(all.features, perm);
        shuffled.labels = gather_labels(all.labels, perm);
        const auto n_test = static_cast<std::size_t>(
            spec.test_fraction * static_cast<double>(all.size()));
        train = take_rows(shuffled, 0, all.size() - n_test);
        if (n_test > 0) test = take_rows(shuffled, all.size() - n_test, all.size());
    } else if (spec.kind == "idx") {
        train = load_idx(spec.images, spec.labels);
        if (!spec.test_images.empty())
            test = load_idx(spec.test_images, spec.test_labels);
    } else if (spec.kind == "csv") {
        train = load_csv(spec.csv);
        if (!spec.test_csv.empty()) test = load_csv(spec.test_csv);
    } else {
        throw ConfigError("unknown dataset kind: " + spec.kind);
    }
}

}  // namespace fr
