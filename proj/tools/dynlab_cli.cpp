#include <dynlab/experiments.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

using namespace dynlab;

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<long> budget;
};

void apply(ExperimentConfig& c, const Overrides& o) {
    if (o.seed) c.values["experiment.seed"] = std::to_string(*o.seed);
    if (o.budget) {
        const auto* s = find_schema(c.experiment());
        bool takes = s && std::find(s->optional.begin(), s->optional.end(), "params.budget") != s->optional.end();
        if (takes)
            c.values["params.budget"] = std::to_string(*o.budget);
        else
            std::cerr << "note: --budget ignored for experiment '" << c.experiment() << "'\n";
    }
}

std::string out_dir(const std::string& flag, const ExperimentConfig* c) {
    if (!flag.empty()) return flag;
    if (c && c->has("output.dir")) return c->at("output.dir");
    if (const char* e = std::getenv("DYNLAB_OUT")) return e;
    return "dynlab-out";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynlab: pull-back geometry experiments for polynomial maps"};
    app.require_subcommand(1);

    std::string config, manifest, out;
    int workers = 1, jobs = 1;
    Overrides ov;
    bool quiet = false;

    auto* run = app.add_subcommand("run", "run one experiment config");
    run->add_option("--config", config, "experiment config file")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out, "output directory (default: output.dir, then $DYNLAB_OUT, then ./dynlab-out)");
    run->add_option("--workers", workers, "threads inside the experiment")->check(CLI::PositiveNumber);
    run->add_option("--seed", ov.seed, "override experiment.seed");
    run->add_option("--budget", ov.budget, "override params.budget (node budget)")->check(CLI::PositiveNumber);
    run->add_flag("--quiet", quiet, "do not print the report");

    auto* suite = app.add_subcommand("suite", "run every config listed in a manifest");
    suite->add_option("--manifest", manifest, "manifest file, one config path per line")
        ->required()
        ->check(CLI::ExistingFile);
    suite->add_option("--out", out, "output directory (default: $DYNLAB_OUT, then ./dynlab-out)");
    suite->add_option("--workers", workers, "threads inside each experiment")->check(CLI::PositiveNumber);
    suite->add_option("--jobs", jobs, "experiments run concurrently")->check(CLI::PositiveNumber);
    suite->add_option("--seed", ov.seed, "override experiment.seed in every config");
    suite->add_option("--budget", ov.budget, "override params.budget in every config")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    if (*run) {
        ExperimentConfig c;
        ReportRecord rec;
        try {
            c = load_config(config);
            apply(c, ov);
            rec = run_experiment(c, workers);
        } catch (const ConfigError& e) {
            std::cerr << e.what() << '\n';
            return 2;
        }
        auto path = write_report(rec, out_dir(out, &c));
        if (!quiet) std::cout << rec.report.dump(2) << '\n';
        std::cerr << rec.verdict() << ": " << rec.report.value("reason", "") << '\n' << "report: " << path << '\n';
        if (rec.report.contains("error")) std::cerr << "error: " << rec.report["error"].get<std::string>() << '\n';
        return exit_status(rec);
    }

    std::vector<SuiteEntry> entries;
    try {
        entries = load_manifest(manifest);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    }
    for (auto& e : entries)
        if (e.error.empty()) apply(e.config, ov);
    SuiteOptions opt;
    opt.workers = jobs;
    opt.inner_workers = workers;
    auto res = run_suite(std::move(entries), opt);
    std::string dir = out_dir(out, nullptr);
    for (const auto& rec : res.records)
        if (rec.report.value("config_hash", "none") != "none") write_report(rec, dir);
    std::filesystem::create_directories(dir);
    std::ofstream(std::filesystem::path(dir) / "suite.json") << res.summary.dump(2) << '\n';
    auto table = acceptance_table_text(res.summary);
    std::ofstream(std::filesystem::path(dir) / "acceptance.txt") << table;
    for (const auto& r : res.summary["runs"])
        std::cout << r["verdict"].get<std::string>() << "  " << r["label"].get<std::string>() << "  "
                  << r["reason"].get<std::string>() << '\n';
    for (const auto& n : res.summary["notes"]) std::cout << "note: " << n.get<std::string>() << '\n';
    std::cout << '\n' << table << "suite verdict: " << res.summary["verdict"].get<std::string>() << '\n';
    return res.summary["verdict"] == "fail" ? 1 : 0;
}
