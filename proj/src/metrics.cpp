#include "blood/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "blood/errors.hpp"

namespace blood {

namespace {

void require_nonempty(std::span<const double> a, std::span<const double> b, const char* what)
{
    if (a.empty() || b.empty()) throw InvalidArgument(std::string(what) + " needs two nonempty samples");
}

struct Labeled {
    double score;
    bool ood;
};

std::vector<Labeled> sorted_pool(std::span<const double> id, std::span<const double> ood)
{
    std::vector<Labeled> pool;
    pool.reserve(id.size() + ood.size());
    for (double s : id) pool.push_back({s, false});
    for (double s : ood) pool.push_back({s, true});
    std::sort(pool.begin(), pool.end(), [](const Labeled& a, const Labeled& b) { return a.score < b.score; });
    return pool;
}

// Counts of ID and OOD at or below each distinct threshold, ascending.
struct Step {
    double id_le, ood_le;
};

std::vector<Step> cumulative_steps(std::span<const double> id, std::span<const double> ood)
{
    const auto pool = sorted_pool(id, ood);
    std::vector<Step> steps;
    double n_id = 0.0, n_ood = 0.0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        (pool[i].ood ? n_ood : n_id) += 1.0;
        if (i + 1 == pool.size() || pool[i + 1].score != pool[i].score) steps.push_back({n_id, n_ood});
    }
    return steps;
}

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

std::vector<double> midranks(std::span<const double> values)
{
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        // Positions i..j (0-based) share the rank (i + j) / 2 + 1.
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores)
{
    require_nonempty(id_scores, ood_scores, "auroc");
    return cles(ood_scores, id_scores);
}

double cles(std::span<const double> a, std::span<const double> b)
{
    require_nonempty(a, b, "cles");
    return mann_whitney(a, b, MannWhitneyMode::Normal).u /
           (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

double aupr_in(std::span<const double> id_scores, std::span<const double> ood_scores)
{
    require_nonempty(id_scores, ood_scores, "aupr_in");
    const double n_id = static_cast<double>(id_scores.size());
    double area = 0.0, prev_recall = 0.0;
    for (const Step& s : cumulative_steps(id_scores, ood_scores)) {
        const double recall = s.id_le / n_id;
        if (recall > prev_recall) area += (recall - prev_recall) * s.id_le / (s.id_le + s.ood_le);
        prev_recall = recall;
    }
    return area;
}

double fpr_at_95_tpr(std::span<const double> id_scores, std::span<const double> ood_scores)
{
    require_nonempty(id_scores, ood_scores, "fpr_at_95_tpr");
    const double n_id = static_cast<double>(id_scores.size());
    const double n_ood = static_cast<double>(ood_scores.size());
    for (const Step& s : cumulative_steps(id_scores, ood_scores)) {
        // Integer comparison avoids 0.95 rounding: id_le / n_id >= 95 / 100.
        if (100.0 * s.id_le >= 95.0 * n_id) return s.ood_le / n_ood;
    }
    return 1.0;
}

MannWhitneyResult mann_whitney(std::span<const double> a, std::span<const double> b, MannWhitneyMode mode)
{
    require_nonempty(a, b, "mann_whitney");
    const std::size_t na = a.size(), nb = b.size(), n = na + nb;
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::vector<double> ranks = midranks(pooled);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < na; ++i) rank_sum += ranks[i];

    MannWhitneyResult r;
    const double dna = static_cast<double>(na), dnb = static_cast<double>(nb);
    r.u = rank_sum - dna * (dna + 1.0) / 2.0;

    const bool exact = mode == MannWhitneyMode::Exact || (mode == MannWhitneyMode::Auto && n <= 16);
    r.exact = exact;
    if (exact) {
        // Doubled midranks are integers; count size-na subsets by doubled rank sum.
        std::vector<std::size_t> doubled(n);
        std::size_t max_sum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            doubled[i] = static_cast<std::size_t>(std::llround(2.0 * ranks[i]));
            max_sum += doubled[i];
        }
        std::vector<std::vector<double>> ways(na + 1, std::vector<double>(max_sum + 1, 0.0));
        ways[0][0] = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = std::min(i + 1, na); k >= 1; --k) {
                auto& dst = ways[k];
                const auto& src = ways[k - 1];
                for (std::size_t s = max_sum; s >= doubled[i]; --s) {
                    dst[s] += src[s - doubled[i]];
                    if (s == doubled[i]) break;
                }
            }
        }
        const auto observed = static_cast<std::size_t>(std::llround(2.0 * rank_sum));
        double total = 0.0, tail = 0.0;
        for (std::size_t s = 0; s <= max_sum; ++s) {
            total += ways[na][s];
            if (s >= observed) tail += ways[na][s];
        }
        r.p = tail / total;
        return r;
    }

    double tie_term = 0.0;
    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && sorted[j] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }
    const double dn = static_cast<double>(n);
    const double var = dna * dnb / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
    if (!(var > 0.0)) {
        r.p = 1.0;
        return r;
    }
    const double z = (r.u - dna * dnb / 2.0 - 0.5) / std::sqrt(var);
    r.p = normal_upper_tail(z);
    return r;
}

double mann_whitney_one_sided(std::span<const double> a, std::span<const double> b, MannWhitneyMode mode)
{
    return mann_whitney(a, b, mode).p;
}

double pearson(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("pearson needs two equal-length samples of size >= 2");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw NumericalError("pearson correlation undefined for a constant sample");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

RankCorrelation spearman(std::span<const double> x, std::span<const double> y)
{
    const auto rx = midranks(x), ry = midranks(y);
    RankCorrelation out;
    try {
        out.rho = pearson(rx, ry);
    } catch (const NumericalError&) {
        out.degenerate = true;
    }
    return out;
}

double median(std::vector<double> values)
{
    if (values.empty()) throw InvalidArgument("median of an empty sample");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

EvalReport evaluate(std::span<const double> id_scores, std::span<const double> ood_scores)
{
    EvalReport r;
    r.auroc = auroc(id_scores, ood_scores);
    r.aupr_in = aupr_in(id_scores, ood_scores);
    r.fpr_at_95_tpr = fpr_at_95_tpr(id_scores, ood_scores);
    r.p_value = mann_whitney_one_sided(ood_scores, id_scores);
    return r;
}

}  // namespace blood
