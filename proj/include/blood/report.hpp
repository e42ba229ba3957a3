#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "blood/analysis.hpp"
#include "blood/metrics.hpp"

namespace blood {

/// Set name of the ID test split in score files.
inline constexpr std::string_view kIdSet = "test-id";

/// One line of a score file.
struct ScoreRecord {
    std::uint64_t instance_id = 0;
    std::string detector;
    /// Per-layer phi estimates for BLOOD detectors, empty otherwise.
    std::vector<double> per_layer;
    double score = 0.0;
    std::uint64_t seed = 0;
    /// kIdSet or the OOD set name.
    std::string set;

    friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

std::string to_jsonl_line(const ScoreRecord& record);
ScoreRecord parse_score_record(std::string_view line);

/// Complete records of a score file. A trailing line without a newline (an
/// interrupted append) is not counted; `valid_bytes` marks where it starts.
struct ScoreFile {
    std::vector<ScoreRecord> records;
    std::uintmax_t valid_bytes = 0;
    bool partial_tail = false;
};

/// A missing file reads as empty.
ScoreFile read_score_file(const std::filesystem::path& path);

/// Makes `path` hold records 0..total-1 in order, computing only the ones
/// missing from an earlier, interrupted run. make(i) builds record i; records
/// are computed in parallel chunks and appended chunk by chunk.
std::vector<ScoreRecord> resume_score_file(const std::filesystem::path& path, std::size_t total,
                                           const std::function<ScoreRecord(std::size_t)>& make, std::size_t jobs,
                                           std::size_t chunk = 256);

/// One detector on one OOD set for one seed.
struct DetectorEval {
    std::string detector;
    std::string set;
    std::uint64_t seed = 0;
    EvalReport report;
};

/// Pairs each OOD set's scores with the kIdSet scores of the same detector
/// and seed.
std::vector<DetectorEval> evaluate_records(std::span<const ScoreRecord> records);

std::string eval_reports_json(std::span<const DetectorEval> evals);
std::vector<DetectorEval> parse_eval_reports_json(std::string_view text);

enum class TableMetric { Auroc, AuprIn, Fpr95 };
std::string_view to_string(TableMetric metric);
TableMetric parse_table_metric(std::string_view name);

/// Rows are OOD sets, columns detectors, cells the mean over seeds.
struct ResultTable {
    TableMetric metric = TableMetric::Auroc;
    std::string baseline;
    std::vector<std::string> rows;
    std::vector<std::string> columns;
    std::vector<std::vector<std::optional<double>>> mean;
    /// One-sided Mann-Whitney p of the cell's per-seed values beating the
    /// baseline column's (lower FPR counts as better).
    std::vector<std::vector<std::optional<double>>> p_vs_baseline;
    std::vector<std::vector<std::size_t>> seeds;

    bool significant(std::size_t r, std::size_t c) const;
    /// Column index of the best mean in a row.
    std::optional<std::size_t> best(std::size_t r) const;
};

ResultTable make_table(std::span<const DetectorEval> evals, TableMetric metric = TableMetric::Auroc,
                       std::string_view baseline = "msp");

/// Best cell per row in bold, "*" where p_vs_baseline < 0.05.
std::string render_markdown(const ResultTable& table, int precision = 3);
std::string render_latex(const ResultTable& table, int precision = 3);

std::string rep_change_json(const RepChangeReport& report);
std::string cartography_jsonl(std::span<const CartographyRecord> records);
std::string shift_sweep_json(const ShiftSweep& sweep, std::span<const std::string> levels);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace blood
