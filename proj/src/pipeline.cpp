#include "blood/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "blood/analysis.hpp"
#include "blood/config.hpp"
#include "blood/errors.hpp"
#include "blood/metrics.hpp"
#include "blood/model_io.hpp"
#include "blood/parallel.hpp"
#include "blood/report.hpp"
#include "json.hpp"

namespace blood {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kVersion = "0.1.0";
// Estimator stream ids of validation instances start here, away from test ids.
constexpr std::uint32_t kValidationInstanceBase = 1U << 24;

fs::path data_path(const PipelineOptions& o, std::string_view part, std::uint64_t seed)
{
    return o.out / "data" / fmt::format("{}-seed{}.csv", part, seed);
}

fs::path model_path(const PipelineOptions& o, std::string_view part, std::uint64_t seed)
{
    return o.out / "models" / fmt::format("{}-seed{}.bmdl", part, seed);
}

fs::path dynamics_path(const PipelineOptions& o, std::uint64_t seed)
{
    return o.out / "models" / fmt::format("dynamics-seed{}.jsonl", seed);
}

fs::path score_path(const PipelineOptions& o, std::string_view detector, std::uint64_t seed)
{
    return o.out / "scores" / fmt::format("{}-seed{}.jsonl", detector, seed);
}

fs::path analysis_path(const PipelineOptions& o, std::string_view part, std::uint64_t seed, std::string_view ext)
{
    return o.out / "analysis" / fmt::format("{}-seed{}.{}", part, seed, ext);
}

void require(const fs::path& path, std::string_view producer)
{
    if (!fs::exists(path)) {
        throw MissingArtifactError(fmt::format("missing {}; run `blood {}` with the same --config and --out first",
                                               path.string(), producer));
    }
}

Dataset load_data(const PipelineOptions& o, std::string_view part, std::uint64_t seed)
{
    const fs::path p = data_path(o, part, seed);
    require(p, "generate");
    return load_csv(p);
}

Model load_artifact_model(const PipelineOptions& o, std::string_view part, std::uint64_t seed)
{
    const fs::path p = model_path(o, part, seed);
    require(p, "train");
    return load_model(p);
}

bool wants(const ExperimentConfig& c, DetectorId id)
{
    return std::find(c.detectors.begin(), c.detectors.end(), id) != c.detectors.end();
}

/// Records which artifacts a stage wrote and how long it took.
class StageLog {
public:
    StageLog(const ExperimentConfig& config, const PipelineOptions& options, std::string stage)
        : config_(config), options_(options), stage_(std::move(stage)), start_(std::chrono::steady_clock::now())
    {
    }

    void add(const fs::path& p) { artifacts_.push_back(fs::relative(p, options_.out).generic_string()); }

    void finish()
    {
        const fs::path path = options_.out / "manifest.json";
        json manifest = json::object();
        if (fs::exists(path)) {
            try {
                manifest = json::parse(read_text_file(path));
            } catch (const json::exception&) {
                manifest = json::object();
            }
        }
        manifest["version"] = kVersion;
        manifest["config"] = to_ini(config_);
        manifest["jobs"] = options_.jobs;
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        manifest["stages"][stage_] = {{"seconds", seconds}, {"artifacts", artifacts_}};
        write_file_atomic(path, manifest.dump(2) + '\n');
    }

private:
    const ExperimentConfig& config_;
    const PipelineOptions& options_;
    std::string stage_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::string> artifacts_;
};

/// ID test instances first, then each OOD set in configured order.
struct ScoringInputs {
    std::vector<Tensor> x;
    std::vector<std::string> set;
};

ScoringInputs scoring_inputs(const ExperimentConfig& c, const PipelineOptions& o, std::uint64_t seed)
{
    ScoringInputs in;
    const Dataset test = load_data(o, "test", seed);
    for (const Tensor& x : test.x) {
        in.x.push_back(x);
        in.set.emplace_back(kIdSet);
    }
    for (const OodSpec& spec : c.ood) {
        const Dataset ood = load_data(o, "ood-" + spec.name(), seed);
        for (const Tensor& x : ood.x) {
            in.x.push_back(x);
            in.set.push_back(spec.name());
        }
    }
    return in;
}

std::vector<Model> load_ensemble(const ExperimentConfig& c, const PipelineOptions& o, std::uint64_t seed)
{
    std::vector<Model> members;
    for (std::size_t k = 0; k < c.ensemble_size; ++k) members.push_back(load_artifact_model(o, fmt::format("ensemble{}", k), seed));
    return members;
}

}  // namespace

std::vector<std::string> scored_detectors(const ExperimentConfig& config)
{
    std::vector<std::string> names{"blood_m", "blood_l", "blood_openbox"};
    for (DetectorId d : config.detectors) names.emplace_back(to_string(d));
    return names;
}

void run_generate(const ExperimentConfig& config, const PipelineOptions& options)
{
    StageLog log(config, options, "generate");
    for (std::uint64_t seed : config.seeds) {
        const Benchmark b = make_benchmark(config, seed);
        auto save = [&](const Dataset& d, std::string_view part) {
            const fs::path p = data_path(options, part, seed);
            fs::create_directories(p.parent_path());
            save_csv(d, p);
            log.add(p);
        };
        save(b.train, "train");
        save(b.val, "val");
        save(b.test, "test");
        for (const auto& [name, d] : b.ood) save(d, "ood-" + name);
        for (const auto& [name, d] : b.val_ood) save(d, "val-ood-" + name);
    }
    log.finish();
}

void run_train(const ExperimentConfig& config, const PipelineOptions& options)
{
    StageLog log(config, options, "train");
    for (std::uint64_t seed : config.seeds) {
        const Dataset train_set = load_data(options, "train", seed);
        const TrainedModels m =
            train_models(config, train_set, train_set.num_classes, seed, wants(config, DetectorId::Ensemble));
        auto save = [&](const Model& model, std::string_view part) {
            const fs::path p = model_path(options, part, seed);
            fs::create_directories(p.parent_path());
            save_model(model, p);
            log.add(p);
        };
        save(m.init, "init");
        save(m.trained, "model");
        for (std::size_t k = 0; k < m.ensemble.size(); ++k) save(m.ensemble[k], fmt::format("ensemble{}", k));
        std::ostringstream dyn;
        write_dynamics_jsonl(m.dynamics, dyn);
        write_file_atomic(dynamics_path(options, seed), dyn.str());
        log.add(dynamics_path(options, seed));
    }
    log.finish();
}

void run_score(const ExperimentConfig& config, const PipelineOptions& options)
{
    StageLog log(config, options, "score");
    for (std::uint64_t seed : config.seeds) {
        const Model model = load_artifact_model(options, "model", seed);
        const ScoringInputs in = scoring_inputs(config, options, seed);
        const BloodConfig bc = blood_config_for(config, seed);
        auto blood_record = [&](std::string detector, std::size_t i, LayerScores s, double score) {
            return ScoreRecord{i, std::move(detector), std::move(s.values), score, seed, in.set[i]};
        };

        const fs::path m_path = score_path(options, "blood_m", seed);
        const auto m_records = resume_score_file(
            m_path, in.x.size(),
            [&](std::size_t i) {
                LayerScores s = layer_scores(model, in.x[i], bc, static_cast<std::uint32_t>(i));
                const double score = blood_m(s);
                return blood_record("blood_m", i, std::move(s), score);
            },
            options.jobs);
        log.add(m_path);

        // The other BLOOD variants reuse the per-layer estimates.
        auto stored = [&](std::size_t i) {
            LayerScores s;
            s.first_layer = bc.layer_range(model).first;
            s.values = m_records[i].per_layer;
            return s;
        };
        const fs::path l_path = score_path(options, "blood_l", seed);
        resume_score_file(
            l_path, in.x.size(), [&](std::size_t i) { return blood_record("blood_l", i, stored(i), blood_l(stored(i))); },
            options.jobs);
        log.add(l_path);

        // Open-box weights come from the ID and OOD validation splits.
        std::vector<Tensor> val_x;
        std::vector<bool> val_ood;
        for (const Tensor& x : load_data(options, "val", seed).x) {
            val_x.push_back(x);
            val_ood.push_back(false);
        }
        for (const OodSpec& spec : config.ood) {
            for (const Tensor& x : load_data(options, "val-ood-" + spec.name(), seed).x) {
                val_x.push_back(x);
                val_ood.push_back(true);
            }
        }
        std::vector<LayerScores> val_scores(val_x.size());
        parallel_for(val_x.size(), options.jobs, [&](std::size_t i) {
            val_scores[i] = layer_scores(model, val_x[i], bc, kValidationInstanceBase + static_cast<std::uint32_t>(i));
        });
        const OpenBoxWeights w = openbox_fit(val_scores, val_ood);
        const fs::path o_path = score_path(options, "blood_openbox", seed);
        resume_score_file(
            o_path, in.x.size(),
            [&](std::size_t i) { return blood_record("blood_openbox", i, stored(i), openbox_logit(w, stored(i))); },
            options.jobs);
        log.add(o_path);

        if (config.detectors.empty()) continue;
        const Dataset train_set = load_data(options, "train", seed);
        const Dataset val = load_data(options, "val", seed);
        DetectorOptions dopt = config.detector_options;
        dopt.mc_seed = seed;
        FitContext ctx = build_fit_context(model, config.detectors, train_set.x, train_set.y, val.x, val.y, dopt);
        if (wants(config, DetectorId::Ensemble)) ctx.ensemble = load_ensemble(config, options, seed);
        for (DetectorId d : config.detectors) {
            const std::string name(to_string(d));
            const fs::path p = score_path(options, name, seed);
            resume_score_file(
                p, in.x.size(),
                [&](std::size_t i) {
                    const double s = detector_score(d, model, in.x[i], ctx, dopt, static_cast<std::uint32_t>(i));
                    return ScoreRecord{i, name, {}, s, seed, in.set[i]};
                },
                options.jobs);
            log.add(p);
        }
    }
    log.finish();
}

void run_eval(const ExperimentConfig& config, const PipelineOptions& options)
{
    StageLog log(config, options, "eval");
    std::vector<ScoreRecord> records;
    for (const std::string& det : scored_detectors(config)) {
        for (std::uint64_t seed : config.seeds) {
            const fs::path p = score_path(options, det, seed);
            require(p, "score");
            ScoreFile f = read_score_file(p);
            if (f.partial_tail) throw MissingArtifactError(p.string() + " is incomplete; rerun `blood score` to finish it");
            records.insert(records.end(), f.records.begin(), f.records.end());
        }
    }
    const std::vector<DetectorEval> evals = evaluate_records(records);
    const fs::path report = options.out / "eval" / "report.json";
    write_file_atomic(report, eval_reports_json(evals));
    log.add(report);

    std::string md;
    for (TableMetric m : {TableMetric::Auroc, TableMetric::AuprIn, TableMetric::Fpr95}) {
        md += fmt::format("## {}\n\n{}\n", to_string(m), render_markdown(make_table(evals, m, options.baseline)));
    }
    const fs::path table = options.out / "eval" / "table.md";
    write_file_atomic(table, md);
    log.add(table);
    if (options.latex) {
        const fs::path tex = options.out / "eval" / "table.tex";
        write_file_atomic(tex, render_latex(make_table(evals, TableMetric::Auroc, options.baseline)));
        log.add(tex);
    }
    log.finish();
}

void run_analyze(const ExperimentConfig& config, const PipelineOptions& options)
{
    StageLog log(config, options, "analyze");
    for (std::uint64_t seed : config.seeds) {
        const Model init = load_artifact_model(options, "init", seed);
        const Model model = load_artifact_model(options, "model", seed);
        const Dataset train_set = load_data(options, "train", seed);
        const Dataset test = load_data(options, "test", seed);

        for (const OodSpec& spec : config.ood) {
            const Dataset ood = load_data(options, "ood-" + spec.name(), seed);
            const fs::path p = analysis_path(options, "rep-change-" + spec.name(), seed, "json");
            write_file_atomic(p, rep_change_json(rep_change(init, model, test.x, ood.x)));
            log.add(p);
        }

        require(dynamics_path(options, seed), "train");
        std::istringstream dyn(read_text_file(dynamics_path(options, seed)));
        const auto carto = cartography(read_dynamics_jsonl(dyn));
        const fs::path cp = analysis_path(options, "cartography", seed, "jsonl");
        write_file_atomic(cp, cartography_jsonl(carto));
        log.add(cp);

        const BloodConfig bc = blood_config_for(config, seed);
        auto last_layer = [&](const std::vector<Tensor>& xs) {
            std::vector<double> out;
            for (const LayerScores& s : score_all(model, xs, bc, options.jobs)) out.push_back(blood_l(s));
            return out;
        };
        std::vector<std::string> levels{"train", std::string(kIdSet)};
        std::vector<std::vector<double>> level_scores{last_layer(train_set.x), last_layer(test.x)};
        for (const std::string& name : config.sweep) {
            levels.push_back(name);
            level_scores.push_back(last_layer(load_data(options, "ood-" + name, seed).x));
        }
        const fs::path sp = analysis_path(options, "shift-sweep", seed, "json");
        write_file_atomic(sp, shift_sweep_json(shift_sweep(level_scores), levels));
        log.add(sp);

        const std::size_t needed = config.mdl_blocks * config.mdl_block_size;
        if (needed > train_set.size()) {
            throw ConfigError(fmt::format("MDL needs {} training instances ({} blocks of {}), only {} available",
                                          needed, config.mdl_blocks, config.mdl_block_size, train_set.size()));
        }
        const auto blocks = uniform_blocks(config.mdl_blocks, config.mdl_block_size);
        const std::size_t classes = train_set.num_classes;
        const ModelFactory factory = [&](std::uint64_t s) { return build_model(config.model, train_set.dim, classes, s); };
        TrainConfig tc = config.train;
        tc.seed = seed;
        const double nats = mdl_prequential(train_set.x, train_set.y, classes, factory, tc, blocks);
        const json mdl = {{"codelength_nats", nats},
                          {"blocks", config.mdl_blocks},
                          {"block_size", config.mdl_block_size},
                          {"uniform_code_nats", static_cast<double>(needed) * std::log(static_cast<double>(classes))}};
        const fs::path mp = analysis_path(options, "mdl", seed, "json");
        write_file_atomic(mp, mdl.dump(2) + '\n');
        log.add(mp);
    }
    log.finish();
}

void run_report(const ExperimentConfig& config, const PipelineOptions& options)
{
    StageLog log(config, options, "report");
    const fs::path report_json = options.out / "eval" / "report.json";
    require(report_json, "eval");
    const auto evals = parse_eval_reports_json(read_text_file(report_json));

    std::string md = fmt::format("# {}\n\n## OOD detection (AUROC)\n\n{}\n", config.name,
                                 render_markdown(make_table(evals, TableMetric::Auroc, options.baseline)));

    md += "## Representation change (CLES of ID change exceeding OOD change)\n\n| OOD set | seed | per layer | mean |\n|---|---:|---|---:|\n";
    for (const OodSpec& spec : config.ood) {
        for (std::uint64_t seed : config.seeds) {
            const fs::path p = analysis_path(options, "rep-change-" + spec.name(), seed, "json");
            require(p, "analyze");
            const json j = json::parse(read_text_file(p));
            std::string layers;
            for (const json& l : j["layers"]) layers += fmt::format("{}{:.3f}", layers.empty() ? "" : " ", l["cles"].get<double>());
            md += fmt::format("| {} | {} | {} | {:.3f} |\n", spec.name(), seed, layers, j["cles_mean"].get<double>());
        }
    }

    md += "\n## Shift sweep (median BLOOD_L per level)\n\n| seed | medians | Spearman | strictly increasing |\n|---:|---|---:|---|\n";
    for (std::uint64_t seed : config.seeds) {
        const fs::path p = analysis_path(options, "shift-sweep", seed, "json");
        require(p, "analyze");
        const json j = json::parse(read_text_file(p));
        std::string medians;
        const auto names = j["levels"].get<std::vector<std::string>>();
        const auto values = j["medians"].get<std::vector<double>>();
        for (std::size_t k = 0; k < names.size(); ++k) medians += fmt::format("{}{}={:.4g}", k ? ", " : "", names[k], values[k]);
        md += fmt::format("| {} | {} | {:.2f}{} | {} |\n", seed, medians, j["spearman"].get<double>(),
                          j["degenerate"].get<bool>() ? " (degenerate)" : "", j["strictly_increasing"].get<bool>() ? "yes" : "no");
    }

    md += "\n## Prequential MDL\n\n| seed | codelength (nats) | relative to largest |\n|---:|---:|---:|\n";
    std::vector<double> nats;
    for (std::uint64_t seed : config.seeds) {
        const fs::path p = analysis_path(options, "mdl", seed, "json");
        require(p, "analyze");
        nats.push_back(json::parse(read_text_file(p))["codelength_nats"].get<double>());
    }
    const double largest = *std::max_element(nats.begin(), nats.end());
    for (std::size_t k = 0; k < nats.size(); ++k)
        md += fmt::format("| {} | {:.2f} | {:.3f} |\n", config.seeds[k], nats[k], nats[k] / largest);

    md += "\n## Data cartography (means over training instances)\n\n| seed | confidence | variability | correctness |\n|---:|---:|---:|---:|\n";
    for (std::uint64_t seed : config.seeds) {
        const fs::path p = analysis_path(options, "cartography", seed, "jsonl");
        require(p, "analyze");
        std::istringstream lines(read_text_file(p));
        double conf = 0, var = 0, corr = 0;
        std::size_t n = 0;
        for (std::string line; std::getline(lines, line);) {
            const json j = json::parse(line);
            conf += j["confidence"].get<double>();
            var += j["variability"].get<double>();
            corr += j["correctness"].get<double>();
            ++n;
        }
        const double d = std::max<double>(1.0, static_cast<double>(n));
        md += fmt::format("| {} | {:.3f} | {:.3f} | {:.3f} |\n", seed, conf / d, var / d, corr / d);
    }

    const fs::path out = options.out / "report.md";
    write_file_atomic(out, md);
    log.add(out);
    if (options.latex) {
        const fs::path tex = options.out / "report-table.tex";
        write_file_atomic(tex, render_latex(make_table(evals, TableMetric::Auroc, options.baseline)));
        log.add(tex);
    }
    log.finish();
}

}  // namespace blood
