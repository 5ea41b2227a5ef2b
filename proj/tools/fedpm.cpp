// fedpm: simulate -> encode -> train (centralized / federated) -> evaluate.
//
// Exit codes: 0 ok, 1 configuration error, 2 I/O error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedpm/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fedpm;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitIo = 2;

struct Options {
    std::vector<std::string> configs;
    std::string out = "runs/out";
    std::optional<std::uint64_t> seed;
    bool dump_predictions = false;
    bool timing = false;
    bool parallel = false;
};

ScenarioConfig load(const std::string& path, const Options& opt) {
    auto cfg = load_config(path);
    if (opt.seed) cfg.master_seed = *opt.seed;
    return cfg;
}

std::string scenario_name(const std::string& path) { return fs::path(path).stem().string(); }

void cmd_simulate(const Options& opt) {
    const auto cfg = load(opt.configs.front(), opt);
    const fs::path dir(opt.out);
    ensure_dir(dir);
    Manifest m(scenario_name(opt.configs.front()), cfg);
    Experiment e{cfg, run(cfg), {}};
    write_simulation(e, dir, m);
    m.write(dir);
    std::cout << "telemetry: " << e.log.records.size() << " records, failed gNBs:";
    for (int g : e.log.failed_gnbs) std::cout << ' ' << g;
    std::cout << '\n';
}

void cmd_encode(const Options& opt) {
    const auto cfg = load(opt.configs.front(), opt);
    const fs::path dir(opt.out);
    ensure_dir(dir);
    Manifest m(scenario_name(opt.configs.front()), cfg);
    const auto e = prepare(cfg);
    write_simulation(e, dir, m);
    write_encoding(e, dir, m);
    m.write(dir);
    std::cout << "windows: " << e.data.pooled.size() << " (train " << e.data.pooled_train.size() << ", test "
              << e.data.pooled_test.size() << ") across " << e.data.clients.size() << " gNBs\n";
}

void print_metrics(const char* mode, const Metrics& m) {
    std::cout << mode << ": exact_match=" << m.exact_match;
    for (std::size_t j = 0; j < kNumLabels; ++j) {
        std::cout << ' ' << kLabelNames[j] << '=';
        if (m.per_label_precision[j]) std::cout << *m.per_label_precision[j];
        else std::cout << "n/a";
    }
    std::cout << '\n';
}

void cmd_train_central(const Options& opt) {
    const auto name = scenario_name(opt.configs.front());
    const auto cfg = load(opt.configs.front(), opt);
    const fs::path dir(opt.out);
    ensure_dir(dir);
    Manifest m(name, cfg);
    const auto e = prepare(cfg);
    const auto res = centralized_pipeline(e);
    detail::write_json(dir / "report_centralized.json", mode_report(name, "centralized", res.metrics));
    save_checkpoint(res.params, cfg.model, dir / "model_centralized.json");
    m.add("report", dir / "report_centralized.json");
    m.add("model", dir / "model_centralized.json");
    if (opt.dump_predictions) {
        write_predictions(res.params, e.data.pooled_test, dir / "predictions_centralized.csv");
        m.add("predictions", dir / "predictions_centralized.csv");
    }
    m.write(dir);
    print_metrics("centralized", res.metrics);
}

void cmd_train_fed(const Options& opt) {
    const auto name = scenario_name(opt.configs.front());
    const auto cfg = load(opt.configs.front(), opt);
    const fs::path dir(opt.out);
    ensure_dir(dir);
    Manifest m(name, cfg);
    const auto e = prepare(cfg);
    const auto res = federated_pipeline(e, opt.parallel ? Execution::parallel : Execution::sequential);
    const auto& final_metrics = res.history.back().metrics;
    detail::write_json(dir / "report_federated.json", mode_report(name, "federated", final_metrics));
    detail::write_file(dir / "convergence.csv",
                       [&](std::ostream& os) { write_round_history_csv(res.history, os, opt.timing); });
    save_checkpoint(res.params, cfg.model, dir / "model_federated.json");
    m.add("report", dir / "report_federated.json");
    m.add("convergence", dir / "convergence.csv");
    m.add("model", dir / "model_federated.json");
    if (opt.dump_predictions) {
        write_predictions(res.params, e.data.pooled_test, dir / "predictions_federated.csv");
        m.add("predictions", dir / "predictions_federated.csv");
    }
    m.write(dir);
    print_metrics("federated", final_metrics);
}

ComparisonOutcome compare_one(const std::string& config_path, const fs::path& dir, const Options& opt) {
    const auto name = scenario_name(config_path);
    const auto cfg = load(config_path, opt);
    ensure_dir(dir);
    Manifest m(name, cfg);
    const auto e = prepare(cfg);
    write_simulation(e, dir, m);
    CompareOptions co;
    co.dump_predictions = opt.dump_predictions;
    co.with_timing = opt.timing;
    co.execution = opt.parallel ? Execution::parallel : Execution::sequential;
    auto out = write_comparison(e, name, dir, m, co);
    m.write(dir);
    return out;
}

void cmd_compare(const Options& opt) {
    const auto out = compare_one(opt.configs.front(), opt.out, opt);
    print_metrics("centralized", out.centralized.metrics);
    print_metrics("federated", out.federated.history.back().metrics);
    std::cout << "gap (centralized - federated): " << out.report.at("gap").get<double>() << '\n';
}

void cmd_sweep(const Options& opt) {
    // validate everything before doing any work
    for (const auto& path : opt.configs) (void)load(path, opt);

    const fs::path dir(opt.out);
    ensure_dir(dir);
    std::ostringstream csv;
    csv << kSweepHeader << '\n';
    for (const auto& path : opt.configs) {
        const auto name = scenario_name(path);
        std::cout << "== " << name << '\n';
        const auto out = compare_one(path, dir / name, opt);
        write_sweep_row(csv, name, "centralized", out.centralized.metrics);
        write_sweep_row(csv, name, "federated", out.federated.history.back().metrics);
        print_metrics("  centralized", out.centralized.metrics);
        print_metrics("  federated", out.federated.history.back().metrics);
    }
    detail::write_file(dir / "sweep.csv", [&](std::ostream& os) { os << csv.str(); });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated predictive maintenance for small-cell networks"};
    app.require_subcommand(1);
    Options opt;

    auto add_common = [&](CLI::App* sub, bool many_configs) {
        if (many_configs) {
            sub->add_option("--config", opt.configs, "Scenario config files (repeatable)")->required();
        } else {
            sub->add_option("--config", opt.configs, "Scenario config file")->required()->expected(1);
        }
        sub->add_option("--out", opt.out, "Output directory");
        sub->add_option("--seed", opt.seed, "Override master_seed");
    };
    auto add_training = [&](CLI::App* sub) {
        sub->add_flag("--dump-predictions", opt.dump_predictions, "Write per-window predictions for the test split");
        sub->add_flag("--parallel", opt.parallel, "Train clients of a round concurrently (same results)");
    };

    auto* simulate = app.add_subcommand("simulate", "Generate telemetry CSV and fault summary");
    add_common(simulate, false);
    auto* encode = app.add_subcommand("encode", "Simulate, window, label and split into datasets");
    add_common(encode, false);
    auto* central = app.add_subcommand("train-central", "Train on the pooled dataset");
    add_common(central, false);
    add_training(central);
    auto* fed = app.add_subcommand("train-fed", "Federated training with FedAvg");
    add_common(fed, false);
    add_training(fed);
    fed->add_flag("--timing", opt.timing, "Record wall-clock seconds per round in convergence.csv");
    auto* compare = app.add_subcommand("compare", "Run both pipelines on the same split and compare");
    add_common(compare, false);
    add_training(compare);
    compare->add_flag("--timing", opt.timing, "Record wall-clock seconds per round in convergence.csv");
    auto* sweep = app.add_subcommand("sweep", "Compare across several scenarios");
    add_common(sweep, true);
    add_training(sweep);

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) cmd_simulate(opt);
        else if (encode->parsed()) cmd_encode(opt);
        else if (central->parsed()) cmd_train_central(opt);
        else if (fed->parsed()) cmd_train_fed(opt);
        else if (compare->parsed()) cmd_compare(opt);
        else if (sweep->parsed()) cmd_sweep(opt);
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kExitIo;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ParseError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return 0;
}
