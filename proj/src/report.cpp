#include "blood/report.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "blood/errors.hpp"
#include "blood/parallel.hpp"
#include "json.hpp"

namespace blood {

using nlohmann::json;

namespace {

double finite_or_throw(double v, std::string_view what)
{
    if (!std::isfinite(v)) throw NumericalError(fmt::format("non-finite {} cannot be written", what));
    return v;
}

std::string latex_escape(std::string_view s)
{
    std::string out;
    for (char c : s) {
        if (c == '_' || c == '%' || c == '&' || c == '#') out += '\\';
        out += c;
    }
    return out;
}

}  // namespace

std::string to_jsonl_line(const ScoreRecord& r)
{
    json j;
    j["instance_id"] = r.instance_id;
    j["detector"] = r.detector;
    j["per_layer"] = json::array();
    for (double v : r.per_layer) j["per_layer"].push_back(finite_or_throw(v, "layer score"));
    j["score"] = finite_or_throw(r.score, "score");
    j["seed"] = r.seed;
    j["set"] = r.set;
    return j.dump() + '\n';
}

ScoreRecord parse_score_record(std::string_view line)
{
    ScoreRecord r;
    try {
        const json j = json::parse(line);
        r.instance_id = j.at("instance_id").get<std::uint64_t>();
        r.detector = j.at("detector").get<std::string>();
        r.per_layer = j.at("per_layer").get<std::vector<double>>();
        r.score = j.at("score").get<double>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.set = j.at("set").get<std::string>();
    } catch (const json::exception& e) {
        throw CorruptFileError(std::string("bad score record: ") + e.what());
    }
    return r;
}

ScoreFile read_score_file(const std::filesystem::path& path)
{
    ScoreFile f;
    if (!std::filesystem::exists(path)) return f;
    const std::string text = read_text_file(path);
    std::size_t start = 0, line_no = 1;
    while (start < text.size()) {
        const std::size_t nl = text.find('\n', start);
        if (nl == std::string::npos) {
            f.partial_tail = true;
            break;
        }
        try {
            f.records.push_back(parse_score_record(std::string_view(text).substr(start, nl - start)));
        } catch (const CorruptFileError& e) {
            throw CorruptFileError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
        }
        start = nl + 1;
        ++line_no;
    }
    f.valid_bytes = start;
    return f;
}

std::vector<ScoreRecord> resume_score_file(const std::filesystem::path& path, std::size_t total,
                                           const std::function<ScoreRecord(std::size_t)>& make, std::size_t jobs,
                                           std::size_t chunk)
{
    ScoreFile existing = read_score_file(path);
    if (existing.records.size() > total) {
        throw CorruptFileError(fmt::format("{} holds {} records but only {} instances exist; delete it to rescore",
                                           path.string(), existing.records.size(), total));
    }
    for (std::size_t i = 0; i < existing.records.size(); ++i) {
        if (existing.records[i].instance_id != i) {
            throw CorruptFileError(fmt::format("{}: record {} has instance_id {}", path.string(), i,
                                               existing.records[i].instance_id));
        }
    }
    if (existing.partial_tail) std::filesystem::resize_file(path, existing.valid_bytes);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());

    std::vector<ScoreRecord> out = std::move(existing.records);
    if (out.size() == total && std::filesystem::exists(path)) return out;
    std::ofstream file(path, std::ios::binary | std::ios::app);
    if (!file) throw IoError("cannot open " + path.string() + " for appending");
    chunk = std::max<std::size_t>(chunk, 1);
    while (out.size() < total) {
        const std::size_t begin = out.size();
        const std::size_t n = std::min(chunk, total - begin);
        std::vector<ScoreRecord> batch(n);
        parallel_for(n, jobs, [&](std::size_t k) { batch[k] = make(begin + k); });
        std::string text;
        for (const ScoreRecord& r : batch) text += to_jsonl_line(r);
        file << text;
        file.flush();
        if (!file) throw IoError("write to " + path.string() + " failed");
        out.insert(out.end(), std::make_move_iterator(batch.begin()), std::make_move_iterator(batch.end()));
    }
    return out;
}

std::vector<DetectorEval> evaluate_records(std::span<const ScoreRecord> records)
{
    struct Group {
        std::vector<double> id;
        std::vector<std::string> order;
        std::map<std::string, std::vector<double>> ood;
    };
    std::vector<std::pair<std::string, std::uint64_t>> keys;
    std::map<std::pair<std::string, std::uint64_t>, Group> groups;
    for (const ScoreRecord& r : records) {
        const auto key = std::make_pair(r.detector, r.seed);
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted) keys.push_back(key);
        Group& g = it->second;
        if (r.set == kIdSet) {
            g.id.push_back(r.score);
        } else {
            if (!g.ood.contains(r.set)) g.order.push_back(r.set);
            g.ood[r.set].push_back(r.score);
        }
    }
    std::vector<DetectorEval> out;
    for (const auto& key : keys) {
        const Group& g = groups.at(key);
        if (g.id.empty()) {
            throw InvalidArgument(fmt::format("no {} scores for detector {} seed {}", kIdSet, key.first, key.second));
        }
        for (const std::string& set : g.order) out.push_back({key.first, set, key.second, evaluate(g.id, g.ood.at(set))});
    }
    return out;
}

std::string eval_reports_json(std::span<const DetectorEval> evals)
{
    json arr = json::array();
    for (const DetectorEval& e : evals) {
        json j;
        j["detector"] = e.detector;
        j["set"] = e.set;
        j["seed"] = e.seed;
        j["auroc"] = e.report.auroc;
        j["aupr_in"] = e.report.aupr_in;
        j["fpr_at_95_tpr"] = e.report.fpr_at_95_tpr;
        j["p_value"] = e.report.p_value;
        if (e.report.p_value_vs_baseline) j["p_value_vs_baseline"] = *e.report.p_value_vs_baseline;
        arr.push_back(std::move(j));
    }
    return arr.dump(2) + '\n';
}

std::vector<DetectorEval> parse_eval_reports_json(std::string_view text)
{
    std::vector<DetectorEval> out;
    try {
        for (const json& j : json::parse(text)) {
            DetectorEval e;
            e.detector = j.at("detector").get<std::string>();
            e.set = j.at("set").get<std::string>();
            e.seed = j.at("seed").get<std::uint64_t>();
            e.report.auroc = j.at("auroc").get<double>();
            e.report.aupr_in = j.at("aupr_in").get<double>();
            e.report.fpr_at_95_tpr = j.at("fpr_at_95_tpr").get<double>();
            e.report.p_value = j.at("p_value").get<double>();
            if (j.contains("p_value_vs_baseline")) e.report.p_value_vs_baseline = j["p_value_vs_baseline"].get<double>();
            out.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw CorruptFileError(std::string("bad eval report: ") + e.what());
    }
    return out;
}

std::string_view to_string(TableMetric metric)
{
    switch (metric) {
    case TableMetric::Auroc: return "auroc";
    case TableMetric::AuprIn: return "aupr_in";
    case TableMetric::Fpr95: return "fpr95";
    }
    return "?";
}

TableMetric parse_table_metric(std::string_view name)
{
    if (name == "auroc") return TableMetric::Auroc;
    if (name == "aupr_in") return TableMetric::AuprIn;
    if (name == "fpr95") return TableMetric::Fpr95;
    throw InvalidArgument("unknown table metric '" + std::string(name) + "' (expected auroc, aupr_in or fpr95)");
}

bool ResultTable::significant(std::size_t r, std::size_t c) const
{
    return p_vs_baseline[r][c] && *p_vs_baseline[r][c] < 0.05;
}

std::optional<std::size_t> ResultTable::best(std::size_t r) const
{
    std::optional<std::size_t> idx;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (!mean[r][c]) continue;
        const bool better = !idx || (metric == TableMetric::Fpr95 ? *mean[r][c] < *mean[r][*idx]
                                                                  : *mean[r][c] > *mean[r][*idx]);
        if (better) idx = c;
    }
    return idx;
}

ResultTable make_table(std::span<const DetectorEval> evals, TableMetric metric, std::string_view baseline)
{
    ResultTable t;
    t.metric = metric;
    t.baseline = baseline;
    auto index_of = [](std::vector<std::string>& names, const std::string& s) {
        const auto it = std::find(names.begin(), names.end(), s);
        if (it != names.end()) return static_cast<std::size_t>(it - names.begin());
        names.push_back(s);
        return names.size() - 1;
    };
    std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> cells;
    for (const DetectorEval& e : evals) {
        const double v = metric == TableMetric::Auroc    ? e.report.auroc
                         : metric == TableMetric::AuprIn ? e.report.aupr_in
                                                         : e.report.fpr_at_95_tpr;
        cells[{index_of(t.rows, e.set), index_of(t.columns, e.detector)}].push_back(v);
    }
    const std::size_t nr = t.rows.size(), nc = t.columns.size();
    t.mean.assign(nr, std::vector<std::optional<double>>(nc));
    t.p_vs_baseline.assign(nr, std::vector<std::optional<double>>(nc));
    t.seeds.assign(nr, std::vector<std::size_t>(nc, 0));
    const auto base = std::find(t.columns.begin(), t.columns.end(), std::string(baseline));
    for (const auto& [rc, values] : cells) {
        const auto [r, c] = rc;
        t.mean[r][c] = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
        t.seeds[r][c] = values.size();
        if (base == t.columns.end()) continue;
        const std::size_t b = static_cast<std::size_t>(base - t.columns.begin());
        if (b == c || !cells.contains({r, b})) continue;
        const auto& ref = cells.at({r, b});
        t.p_vs_baseline[r][c] =
            metric == TableMetric::Fpr95 ? mann_whitney_one_sided(ref, values) : mann_whitney_one_sided(values, ref);
    }
    return t;
}

std::string render_markdown(const ResultTable& t, int precision)
{
    std::string out = "| OOD set |";
    std::string rule = "|---|";
    for (const std::string& c : t.columns) {
        out += fmt::format(" {} |", c);
        rule += "---:|";
    }
    out += '\n' + rule + '\n';
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        out += fmt::format("| {} |", t.rows[r]);
        const auto best = t.best(r);
        for (std::size_t c = 0; c < t.columns.size(); ++c) {
            if (!t.mean[r][c]) {
                out += " - |";
                continue;
            }
            std::string cell = fmt::format("{:.{}f}", *t.mean[r][c], precision);
            if (best && *best == c) cell = "**" + cell + "**";
            if (t.significant(r, c)) cell += "\\*";
            out += " " + cell + " |";
        }
        out += '\n';
    }
    std::size_t max_seeds = 0;
    for (const auto& row : t.seeds)
        for (std::size_t s : row) max_seeds = std::max(max_seeds, s);
    out += fmt::format("\nMean {} over {} seed(s). Bold: best in row. \\*: one-sided Mann-Whitney p < 0.05 against {}.\n",
                       to_string(t.metric), max_seeds, t.baseline);
    return out;
}

std::string render_latex(const ResultTable& t, int precision)
{
    std::string out = "\\begin{tabular}{l" + std::string(t.columns.size(), 'r') + "}\n\\toprule\nOOD set";
    for (const std::string& c : t.columns) out += " & " + latex_escape(c);
    out += " \\\\\n\\midrule\n";
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        out += latex_escape(t.rows[r]);
        const auto best = t.best(r);
        for (std::size_t c = 0; c < t.columns.size(); ++c) {
            if (!t.mean[r][c]) {
                out += " & --";
                continue;
            }
            std::string cell = fmt::format("{:.{}f}", *t.mean[r][c], precision);
            if (best && *best == c) cell = "\\textbf{" + cell + "}";
            if (t.significant(r, c)) cell += "$^{*}$";
            out += " & " + cell;
        }
        out += " \\\\\n";
    }
    out += "\\bottomrule\n\\end{tabular}\n";
    return out;
}

std::string rep_change_json(const RepChangeReport& report)
{
    json j;
    j["layers"] = json::array();
    for (std::size_t l = 0; l < report.layers.size(); ++l) {
        const RepChangeLayer& x = report.layers[l];
        j["layers"].push_back({{"layer", l + 1},
                               {"id_mean", x.id_mean},
                               {"id_std", x.id_std},
                               {"ood_mean", x.ood_mean},
                               {"ood_std", x.ood_std},
                               {"cles", x.cles}});
    }
    j["cles_mean"] = report.cles_mean;
    j["cles_last"] = report.cles_last;
    return j.dump(2) + '\n';
}

std::string cartography_jsonl(std::span<const CartographyRecord> records)
{
    std::string out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const json j = {{"instance", i},
                        {"confidence", records[i].confidence},
                        {"variability", records[i].variability},
                        {"correctness", records[i].correctness}};
        out += j.dump() + '\n';
    }
    return out;
}

std::string shift_sweep_json(const ShiftSweep& sweep, std::span<const std::string> levels)
{
    json j;
    j["levels"] = std::vector<std::string>(levels.begin(), levels.end());
    j["medians"] = sweep.medians;
    j["spearman"] = sweep.spearman;
    j["degenerate"] = sweep.degenerate;
    j["consecutive_cles"] = sweep.consecutive_cles;
    j["strictly_increasing"] = sweep.strictly_increasing;
    j["distributions"] = sweep.distributions;
    return j.dump(2) + '\n';
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write " + tmp.string());
        f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!f) throw IoError("write to " + tmp.string() + " failed");
    }
    std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace blood
