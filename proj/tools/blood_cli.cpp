// Command line front end: blood <generate|train|score|eval|analyze|report> --config FILE

#include <CLI11.hpp>
#include <fmt/format.h>
#include <iostream>

#include "blood/config.hpp"
#include "blood/errors.hpp"
#include "blood/pipeline.hpp"

namespace {

enum ExitCode : int { kOk = 0, kOther = 1, kConfig = 2, kMissing = 3, kNumerical = 4 };

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Out-of-distribution detection from between-layer Jacobian norms"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::uint64_t> seeds;
    blood::PipelineOptions options;
    std::string out = options.out.string();

    using Stage = void (*)(const blood::ExperimentConfig&, const blood::PipelineOptions&);
    const std::vector<std::tuple<std::string, std::string, Stage>> stages{
        {"generate", "write the ID and OOD splits", blood::run_generate},
        {"train", "train the model (and ensemble members) on the training split", blood::run_train},
        {"score", "score the test sets with BLOOD and the comparison detectors", blood::run_score},
        {"eval", "compute AUROC, AUPR and FPR95 tables from the score files", blood::run_eval},
        {"analyze", "representation change, cartography, shift sweep and MDL", blood::run_analyze},
        {"report", "collect tables and analyses into report.md", blood::run_report},
    };
    Stage selected = nullptr;
    for (const auto& [name, help, fn] : stages) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "INI run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seeds, "run only these seeds instead of the configured list");
        sub->add_option("--jobs", options.jobs, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out", out, "artifact directory")->capture_default_str();
        sub->add_flag("--latex", options.latex, "also write LaTeX tables");
        sub->add_option("--baseline", options.baseline, "detector that significance stars compare against")
            ->capture_default_str();
        sub->callback([&selected, fn = fn] { selected = fn; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        blood::ExperimentConfig config = blood::load_config(config_path);
        if (!seeds.empty()) config.seeds = seeds;
        config.validate();
        options.out = out;
        selected(config, options);
        return kOk;
    } catch (const blood::ConfigError& e) {
        fmt::print(stderr, "configuration error: {}\n", e.what());
        return kConfig;
    } catch (const blood::MissingArtifactError& e) {
        fmt::print(stderr, "missing artifact: {}\n", e.what());
        return kMissing;
    } catch (const blood::NumericalError& e) {
        fmt::print(stderr, "numerical error: {}\n", e.what());
        return kNumerical;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kOther;
    }
}
