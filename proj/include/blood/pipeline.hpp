#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "blood/experiment.hpp"

namespace blood {

/// File-based stages behind the command line tool. Every stage reads the
/// artifacts of earlier stages from `out` and writes only below it; a missing
/// input raises MissingArtifactError naming the command that produces it.
///
/// Layout (s = seed):
///   data/{train,val,test}-seed<s>.csv, data/{ood,val-ood}-<set>-seed<s>.csv
///   models/{init,model}-seed<s>.bmdl, models/ensemble<k>-seed<s>.bmdl,
///   models/dynamics-seed<s>.jsonl
///   scores/<detector>-seed<s>.jsonl
///   eval/report.json, eval/table.md (eval/table.tex with latex)
///   analysis/*-seed<s>.json[l], report.md, manifest.json
struct PipelineOptions {
    std::filesystem::path out = "runs";
    std::size_t jobs = 1;
    bool latex = false;
    std::string baseline = "msp";
};

/// Detector names written by the score stage: the BLOOD variants followed by
/// the configured comparison detectors.
std::vector<std::string> scored_detectors(const ExperimentConfig& config);

void run_generate(const ExperimentConfig& config, const PipelineOptions& options);
void run_train(const ExperimentConfig& config, const PipelineOptions& options);
void run_score(const ExperimentConfig& config, const PipelineOptions& options);
void run_eval(const ExperimentConfig& config, const PipelineOptions& options);
void run_analyze(const ExperimentConfig& config, const PipelineOptions& options);
void run_report(const ExperimentConfig& config, const PipelineOptions& options);

}  // namespace blood
