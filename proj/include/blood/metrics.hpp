#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace blood {

// Orientation used throughout: a higher score means "more likely OOD". For
// threshold metrics ID is the positive class and an instance is flagged ID
// when its score is at or below the threshold. Example: id = {1, 2},
// ood = {1.5, 3}; at threshold 1.5 the TPR is 1/2 and the FPR is 1/2.

/// P(ood > id) + P(ood == id) / 2, from midranks in O(n log n).
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

/// Area under the precision-recall curve with ID positive: step-wise sum of
/// precision times recall increment over every distinct threshold.
double aupr_in(std::span<const double> id_scores, std::span<const double> ood_scores);

/// Fraction of OOD at or below the smallest threshold that accepts at least
/// 95% of ID.
double fpr_at_95_tpr(std::span<const double> id_scores, std::span<const double> ood_scores);

/// Common language effect size P(a > b) + P(a == b) / 2.
double cles(std::span<const double> a, std::span<const double> b);

enum class MannWhitneyMode { Auto, Exact, Normal };

struct MannWhitneyResult {
    /// U statistic of `a`: pairs with a > b, ties counting one half.
    double u = 0.0;
    /// One-sided p-value for "a is stochastically greater than b".
    double p = 1.0;
    bool exact = false;
};

/// Auto uses the exact null distribution (conditional on ties) when
/// n_a + n_b <= 16 and the tie- and continuity-corrected normal
/// approximation otherwise.
MannWhitneyResult mann_whitney(std::span<const double> a, std::span<const double> b,
                               MannWhitneyMode mode = MannWhitneyMode::Auto);
double mann_whitney_one_sided(std::span<const double> a, std::span<const double> b,
                              MannWhitneyMode mode = MannWhitneyMode::Auto);

/// Midranks (1-based) of the values.
std::vector<double> midranks(std::span<const double> values);

/// Sample correlation; throws NumericalError when either input is constant.
double pearson(std::span<const double> x, std::span<const double> y);

struct RankCorrelation {
    double rho = 0.0;
    /// Set when a constant input leaves the correlation undefined (rho is 0).
    bool degenerate = false;
};
RankCorrelation spearman(std::span<const double> x, std::span<const double> y);

double median(std::vector<double> values);

struct EvalReport {
    double auroc = 0.0;
    double aupr_in = 0.0;
    double fpr_at_95_tpr = 0.0;
    /// One-sided Mann-Whitney p-value of OOD scores exceeding ID scores.
    double p_value = 1.0;
    /// Optional comparison against a baseline detector's AUROC samples.
    std::optional<double> p_value_vs_baseline;
};

EvalReport evaluate(std::span<const double> id_scores, std::span<const double> ood_scores);

}  // namespace blood
