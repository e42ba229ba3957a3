#include <algorithm>
#include <cmath>
#include <set>

#include "blood/analysis.hpp"
#include "blood/errors.hpp"
#include "blood/metrics.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace blood;
using blood::testing::pairwise_auroc;
using blood::testing::random_tensor;

namespace {

using Scores = std::vector<double>;

// Scores drawn on a coarse grid so ties are common.
Scores random_scores(CounterRng& rng, std::size_t n, double shift)
{
    Scores s(n);
    for (double& v : s) v = std::round(4.0 * (rng.normal() + shift)) / 4.0;
    return s;
}

std::vector<double> thresholds(const Scores& id, const Scores& ood)
{
    std::set<double> t(id.begin(), id.end());
    t.insert(ood.begin(), ood.end());
    return {t.begin(), t.end()};
}

double count_le(const Scores& s, double t)
{
    return static_cast<double>(std::count_if(s.begin(), s.end(), [t](double v) { return v <= t; }));
}

double brute_aupr_in(const Scores& id, const Scores& ood)
{
    double area = 0.0, prev = 0.0;
    for (double t : thresholds(id, ood)) {
        const double tp = count_le(id, t), fp = count_le(ood, t);
        const double recall = tp / static_cast<double>(id.size());
        if (tp > 0) area += (recall - prev) * tp / (tp + fp);
        prev = recall;
    }
    return area;
}

double brute_fpr95(const Scores& id, const Scores& ood)
{
    for (double t : thresholds(id, ood))
        if (count_le(id, t) * 20 >= 19 * static_cast<double>(id.size())) return count_le(ood, t) / ood.size();
    return 1.0;
}

// Exact one-sided p by enumerating every assignment of pooled values to `a`.
double brute_mann_whitney(const Scores& a, const Scores& b)
{
    Scores pool = a;
    pool.insert(pool.end(), b.begin(), b.end());
    auto u_of = [&](const std::vector<bool>& in_a) {
        double u = 0.0;
        for (std::size_t i = 0; i < pool.size(); ++i)
            for (std::size_t j = 0; j < pool.size(); ++j)
                if (in_a[i] && !in_a[j]) u += pool[i] > pool[j] ? 1.0 : (pool[i] == pool[j] ? 0.5 : 0.0);
        return u;
    };
    std::vector<bool> observed(pool.size(), false);
    std::fill(observed.begin(), observed.begin() + static_cast<std::ptrdiff_t>(a.size()), true);
    const double u_obs = u_of(observed);
    std::vector<bool> mask(pool.size(), false);
    std::fill(mask.end() - static_cast<std::ptrdiff_t>(a.size()), mask.end(), true);
    double total = 0.0, tail = 0.0;
    do {
        total += 1.0;
        tail += u_of(mask) >= u_obs - 1e-9 ? 1.0 : 0.0;
    } while (std::next_permutation(mask.begin(), mask.end()));
    return tail / total;
}

}  // namespace

TEST_CASE("auroc hand cases")
{
    CHECK(auroc(Scores{1, 2}, Scores{3, 4}) == 1.0);
    CHECK(auroc(Scores{5, 5, 5}, Scores{5, 5}) == 0.5);
    // Of the 9 pairs, OOD wins 1 (for 2) + 2 (for 4) + 3 (for 6); there are no ties.
    CHECK(auroc(Scores{1, 3, 5}, Scores{2, 4, 6}) == doctest::Approx(6.0 / 9.0).epsilon(1e-15));
    CHECK(auroc(Scores{1, 3, 5}, Scores{2, 4, 6}) == pairwise_auroc({1, 3, 5}, {2, 4, 6}));
    CHECK_THROWS_AS(auroc(Scores{}, Scores{1.0}), InvalidArgument);
}

TEST_CASE("rank metrics match brute-force enumeration on random lists")
{
    CounterRng rng(1, RngPurpose::Evaluation);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n_id = 1 + rng.below(100), n_ood = 1 + rng.below(100);
        const Scores id = random_scores(rng, n_id, 0.0);
        const Scores ood = random_scores(rng, n_ood, rng.uniform());
        CAPTURE(trial);
        CHECK(auroc(id, ood) == pairwise_auroc(id, ood));
        CHECK(aupr_in(id, ood) == doctest::Approx(brute_aupr_in(id, ood)).epsilon(1e-12));
        CHECK(fpr_at_95_tpr(id, ood) == brute_fpr95(id, ood));
        CHECK(std::abs(cles(ood, id) - auroc(id, ood)) <= 1e-12);
        CHECK(cles(ood, id) + cles(id, ood) == 1.0);
    }
}

TEST_CASE("auroc is invariant under a strictly increasing transform")
{
    CounterRng rng(2, RngPurpose::Evaluation);
    const Scores id = random_scores(rng, 60, 0.0), ood = random_scores(rng, 50, 0.7);
    Scores tid, tood;
    for (double v : id) tid.push_back(std::exp(3.0 * v) + 1.0);
    for (double v : ood) tood.push_back(std::exp(3.0 * v) + 1.0);
    CHECK(auroc(tid, tood) == auroc(id, ood));
}

TEST_CASE("aupr_in and fpr at 95 tpr")
{
    CHECK(aupr_in(Scores{1, 2}, Scores{1.5, 3}) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
    CHECK(aupr_in(Scores{1, 2, 3}, Scores{10, 11}) == 1.0);
    CHECK(fpr_at_95_tpr(Scores{1, 2, 3}, Scores{10, 11}) == 0.0);

    // 20 ID points 1..20: 19 of them (TPR exactly 0.95) sit at or below 19.
    Scores id;
    for (int i = 1; i <= 20; ++i) id.push_back(i);
    const Scores ood{0.5, 19.5, 20.0};
    CHECK(fpr_at_95_tpr(id, ood) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(fpr_at_95_tpr(id, ood) == brute_fpr95(id, ood));

    // Ten ID and ten OOD points: all ten ID are needed, so the threshold is 10.
    Scores id10, ood10{2.5, 5.5, 9.5, 10, 11, 12, 13, 14, 15, 16};
    for (int i = 1; i <= 10; ++i) id10.push_back(i);
    CHECK(fpr_at_95_tpr(id10, ood10) == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("metrics on class-independent scores sit at their null values")
{
    double aupr = 0.0, fpr = 0.0;
    const int seeds = 10;
    for (int s = 0; s < seeds; ++s) {
        CounterRng rng(10 + s, RngPurpose::Evaluation);
        Scores id(1000), ood(1000);
        for (double& v : id) v = rng.normal();
        for (double& v : ood) v = rng.normal();
        aupr += aupr_in(id, ood);
        fpr += fpr_at_95_tpr(id, ood);
    }
    CHECK(std::abs(aupr / seeds - 0.5) <= 0.02);
    CHECK(std::abs(fpr / seeds - 0.95) <= 0.02);
}

TEST_CASE("cles")
{
    CHECK(cles(Scores{5, 6}, Scores{1, 2, 3}) == 1.0);
    CHECK(cles(Scores{2, 2}, Scores{2, 2}) == 0.5);
    CHECK(cles(Scores{1, 2}, Scores{5, 6}) == 0.0);
}

TEST_CASE("Mann-Whitney exact mode")
{
    const Scores a{10, 11, 12}, b{1, 2, 3};
    const MannWhitneyResult r = mann_whitney(a, b);
    CHECK(r.exact);
    CHECK(r.u == 9.0);
    CHECK(r.p == doctest::Approx(0.05).epsilon(1e-14));
    CHECK(mann_whitney_one_sided(b, a) >= 0.95);

    CounterRng rng(20, RngPurpose::Evaluation);
    for (int trial = 0; trial < 30; ++trial) {
        const Scores x = random_scores(rng, 2 + rng.below(5), 0.3);
        const Scores y = random_scores(rng, 2 + rng.below(5), 0.0);
        CAPTURE(trial);
        CHECK(mann_whitney_one_sided(x, y, MannWhitneyMode::Exact) ==
              doctest::Approx(brute_mann_whitney(x, y)).epsilon(1e-12));
    }
}

TEST_CASE("Mann-Whitney exact and normal modes agree at n = 12")
{
    CounterRng rng(30, RngPurpose::Evaluation);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        Scores a(12), b(12);
        const double shift = 1.5 * rng.uniform();
        for (double& v : a) v = rng.normal() + shift;
        for (double& v : b) v = rng.normal();
        const double exact = mann_whitney_one_sided(a, b, MannWhitneyMode::Exact);
        const double approx = mann_whitney_one_sided(a, b, MannWhitneyMode::Normal);
        worst = std::max(worst, std::abs(exact - approx));
    }
    CHECK(worst <= 0.02);
}

TEST_CASE("Mann-Whitney p-values are calibrated under the null")
{
    CounterRng rng(40, RngPurpose::Evaluation);
    double total = 0.0;
    const int reps = 1000;
    for (int r = 0; r < reps; ++r) {
        Scores a(30), b(30);
        for (double& v : a) v = rng.normal();
        for (double& v : b) v = rng.normal();
        total += mann_whitney_one_sided(a, b);
    }
    CHECK(total / reps >= 0.45);
    CHECK(total / reps <= 0.55);
}

TEST_CASE("pearson and spearman")
{
    const Scores x{1, 2, 3, 4, 5};
    Scores y, z;
    for (double v : x) {
        y.push_back(2 * v + 1);
        z.push_back(-v);
    }
    CHECK(pearson(x, y) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(pearson(x, z) == doctest::Approx(-1.0).epsilon(1e-15));
    // Hand computation: means 3 and 4; deviations (-2,-1,0,1,2) and (-2,-2,1,1,2);
    // sxy = 4 + 2 + 0 + 1 + 4 = 11, sxx = 10, syy = 4 + 4 + 1 + 1 + 4 = 14.
    CHECK(pearson(x, Scores{2, 2, 5, 5, 6}) == doctest::Approx(11.0 / std::sqrt(140.0)).epsilon(1e-14));
    CHECK_THROWS_AS(pearson(x, Scores{1, 1, 1, 1, 1}), NumericalError);
    CHECK(spearman(x, Scores{1, 4, 9, 16, 25}).rho == doctest::Approx(1.0));
    const RankCorrelation flat = spearman(x, Scores{3, 3, 3, 3, 3});
    CHECK(flat.degenerate);
    CHECK(flat.rho == 0.0);
    CHECK(midranks(Scores{3, 1, 3, 2}) == std::vector<double>{3.5, 1, 3.5, 2});
    CHECK(median({3, 1, 2}) == 2.0);
    CHECK(median({4, 1, 3, 2}) == 2.5);
}

TEST_CASE("representation change")
{
    MlpSpec spec;
    spec.input_dim = 2;
    spec.hidden = {2};
    spec.head_hidden = 0;
    const Model init = make_mlp(spec, 50);

    SUBCASE("unchanged model")
    {
        CounterRng rng(51, RngPurpose::Evaluation);
        std::vector<Tensor> xs;
        for (int i = 0; i < 5; ++i) xs.push_back(random_tensor({2}, rng));
        for (const auto& layer : representation_distances(init, init, xs))
            for (double d : layer) CHECK(d == 0.0);
    }
    SUBCASE("three-instance hand case")
    {
        Model a = init, b = init;
        a.layers[0].mutable_parameters()[0].value = Tensor::matrix(2, 2, {1, 0, 0, 1});
        a.layers[0].mutable_parameters()[1].value = Tensor::vector({0, 0});
        b.layers[0].mutable_parameters()[0].value = Tensor::matrix(2, 2, {2, 0, 1, 1});
        b.layers[0].mutable_parameters()[1].value = Tensor::vector({0, -1});
        const std::vector<Tensor> xs{Tensor::vector({1, 1}), Tensor::vector({-1, 2}), Tensor::vector({3, -4})};
        // relu(I x) vs relu([[2,0],[1,1]] x + (0,-1)):
        // (1,1) -> (1,1) vs (2,1): distance 1
        // (-1,2) -> (0,2) vs (0,0): distance 2
        // (3,-4) -> (3,0) vs (6,0): distance 3
        const auto d = representation_distances(a, b, xs);
        REQUIRE(d.size() == 1);
        CHECK(d[0] == std::vector<double>{1.0, 2.0, 3.0});

        const std::vector<Tensor> ood{Tensor::vector({-5, -5})};
        const RepChangeReport r = rep_change(a, b, xs, ood);
        CHECK(r.layers[0].ood_mean == 0.0);
        CHECK(r.layers[0].id_mean == doctest::Approx(2.0));
        CHECK(r.layers[0].id_std == doctest::Approx(std::sqrt(2.0 / 3.0)));
        CHECK(r.layers[0].cles == 1.0);
        CHECK(r.cles_last == 1.0);
        CHECK(r.cles_mean == 1.0);
    }
}

TEST_CASE("cartography")
{
    TrainingDynamics d;
    d.instances = 2;
    d.epochs = 4;
    // Instance 0 always right with p = 1; instance 1 alternates 0 / 1.
    for (std::size_t e = 0; e < 4; ++e) {
        d.true_class_probability.push_back(1.0);
        d.correct.push_back(1);
        d.true_class_probability.push_back(e % 2 == 0 ? 0.0 : 1.0);
        d.correct.push_back(e % 2 == 0 ? 0 : 1);
    }
    const auto recs = cartography(d);
    CHECK(recs[0].confidence == 1.0);
    CHECK(recs[0].variability == 0.0);
    CHECK(recs[0].correctness == 1.0);
    CHECK(recs[1].confidence == 0.5);
    CHECK(recs[1].variability == 0.5);
    CHECK(recs[1].correctness == 0.5);

    SUBCASE("records from a short training run match a direct recomputation")
    {
        CounterRng rng(60, RngPurpose::Evaluation);
        std::vector<Tensor> xs;
        std::vector<int> ys;
        for (int i = 0; i < 30; ++i) {
            xs.push_back(random_tensor({3}, rng));
            ys.push_back(xs.back()[0] + 0.5 * rng.normal() > 0 ? 1 : 0);
        }
        MlpSpec spec;
        spec.input_dim = 3;
        spec.hidden = {8};
        TrainConfig cfg;
        cfg.epochs = 10;
        cfg.batch_size = 8;
        const TrainResult r = train(make_mlp(spec, 61), xs, ys, cfg);
        const auto c = cartography(r.dynamics);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            std::vector<double> p;
            double right = 0.0;
            for (std::size_t e = 0; e < 10; ++e) {
                p.push_back(r.dynamics.true_class_probability[e * xs.size() + i]);
                right += r.dynamics.correct[e * xs.size() + i];
            }
            double m = 0.0;
            for (double v : p) m += v / 10.0;
            double var = 0.0;
            for (double v : p) var += (v - m) * (v - m) / 10.0;
            CHECK(c[i].confidence == doctest::Approx(m).epsilon(1e-12));
            CHECK(c[i].variability == doctest::Approx(std::sqrt(var)).epsilon(1e-9));
            CHECK(c[i].correctness == doctest::Approx(right / 10.0));
            CHECK(c[i].confidence >= 0.0);
            CHECK(c[i].confidence <= 1.0);
        }
    }
}

TEST_CASE("prequential MDL")
{
    // A linear softmax model starting from the uniform predictor: low capacity
    // keeps it from memorizing label noise.
    const ModelFactory linear = [](std::uint64_t seed) {
        MlpSpec spec;
        spec.input_dim = 4;
        spec.hidden = {};
        spec.head_hidden = 0;
        Model m = make_mlp(spec, seed);
        for (auto& p : m.layers.back().mutable_parameters()) p.value = Tensor::zeros_like(p.value);
        return m;
    };
    CounterRng rng(70, RngPurpose::Evaluation);
    std::vector<Tensor> xs;
    for (int i = 0; i < 2000; ++i) xs.push_back(random_tensor({4}, rng));

    SUBCASE("constant labels cost little beyond the first block")
    {
        const std::vector<int> ys(512, 0);
        TrainConfig cfg;
        cfg.step_size = 0.1;
        cfg.epochs = 100;
        const auto blocks = uniform_blocks(16, 32);
        const double first = 32 * std::log(2.0);
        const double code = mdl_prequential(std::span(xs).first(512), ys, 2, linear, cfg, blocks);
        CHECK(code >= first);
        CHECK(code < 1.1 * first);
    }
    SUBCASE("random labels are incompressible")
    {
        std::vector<int> ys;
        for (int i = 0; i < 2000; ++i) ys.push_back(static_cast<int>(rng.below(2)));
        TrainConfig cfg;
        cfg.step_size = 1e-3;
        cfg.epochs = 2;
        cfg.dropout = 0.0;
        const double per_instance = mdl_prequential(xs, ys, 2, linear, cfg, uniform_blocks(16, 125)) / 2000.0;
        CHECK(std::abs(per_instance - std::log(2.0)) <= 0.05 * std::log(2.0));
    }
    SUBCASE("more data from the same generator costs more, reproducibly")
    {
        std::vector<int> ys;
        for (const auto& x : xs) ys.push_back(x[0] + x[1] > 0 ? 1 : 0);
        TrainConfig cfg;
        cfg.epochs = 5;
        cfg.step_size = 1e-2;
        const double small = mdl_prequential(xs, ys, 2, linear, cfg, uniform_blocks(8, 32));
        const double large = mdl_prequential(xs, ys, 2, linear, cfg, uniform_blocks(16, 32));
        CHECK(large > small);
        CHECK(mdl_prequential(xs, ys, 2, linear, cfg, uniform_blocks(8, 32)) == small);
    }
    SUBCASE("invalid schedules")
    {
        const std::vector<int> ys(2000, 0);
        CHECK_THROWS_AS(mdl_prequential(xs, ys, 2, linear, {}, uniform_blocks(1, 32)), InvalidArgument);
        CHECK_THROWS_AS(mdl_prequential(xs, ys, 2, linear, {}, uniform_blocks(3, 1000)), InvalidArgument);
    }
}

TEST_CASE("shift sweep")
{
    SUBCASE("identical levels are flagged degenerate")
    {
        const ShiftSweep s = shift_sweep({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
        CHECK(s.degenerate);
        CHECK(s.spearman == 0.0);
        CHECK_FALSE(s.strictly_increasing);
    }
    SUBCASE("increasing medians")
    {
        const ShiftSweep s = shift_sweep({{1, 2, 3}, {2, 3, 4}, {5, 6, 7}, {8, 9, 10}});
        CHECK(s.spearman == doctest::Approx(1.0));
        CHECK(s.strictly_increasing);
        CHECK(s.medians == std::vector<double>{2, 3, 6, 9});
    }
    SUBCASE("two levels reduce to cles")
    {
        const Scores lo{0.1, 0.5, 0.3, 0.9}, hi{0.4, 0.8, 1.2};
        const ShiftSweep s = shift_sweep({lo, hi});
        CHECK(s.consecutive_cles[0] == cles(hi, lo));
    }
}
