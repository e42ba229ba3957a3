// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance [--only 5,6] [--jobs N]

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <thread>

#include "blood/analysis.hpp"
#include "blood/blood.hpp"
#include "blood/dataset.hpp"
#include "blood/detectors.hpp"
#include "blood/experiment.hpp"
#include "blood/metrics.hpp"
#include "blood/parallel.hpp"
#include "blood/train.hpp"
#include "support.hpp"

using namespace blood;
using blood::testing::layer_suite;
using blood::testing::layer_zoo;
using blood::testing::random_tensor;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double sample_variance(const std::vector<double>& v)
{
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

double fourth_central_moment(const std::vector<double>& v)
{
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += std::pow(x - m, 4);
    return s / static_cast<double>(v.size());
}

/// Squared Frobenius norm of the assembled Jacobian.
double frobenius_squared(const Layer& layer, const Tensor& h)
{
    const Tensor jac = exact_jacobian(layer, h);
    double s = 0.0;
    for (double v : jac.flat()) s += v * v;
    return s;
}

std::string join(const std::vector<double>& values, int precision = 3)
{
    std::string out;
    for (double v : values) out += fmt::format("{}{:.{}f}", out.empty() ? "" : " ", v, precision);
    return out;
}

// 1 --------------------------------------------------------------------------

Outcome estimator_unbiasedness()
{
    const std::size_t n = 100000;
    CounterRng data(101, RngPurpose::Evaluation);
    const auto suite = layer_suite(102, 20);
    std::size_t ok = 0, total = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < suite.size(); ++i) {
        const Layer& l = suite[i];
        if (l.input_size() > 12 || l.output_size() > 12) return {false, l.describe() + " exceeds the size bound"};
        const Tensor h = random_tensor(l.input_shape(), data);
        const double exact = frobenius_squared(l, h);
        for (auto dist : {VectorDistribution::Gaussian, VectorDistribution::Rademacher}) {
            ProbeSpec probe;
            probe.distribution = dist;
            const auto samples = phi_samples(l, h, probe, n, 103, static_cast<std::uint32_t>(i));
            const double se = std::sqrt(sample_variance(samples) / static_cast<double>(n));
            const double z = se > 0.0 ? std::abs(mean_of(samples) - exact) / se : std::abs(mean_of(samples) - exact) * 1e12;
            worst = std::max(worst, z);
            ++total;
            if (z <= 3.0) ++ok;
        }
    }
    return {ok == total, fmt::format("{}/{} layer x distribution cases within 3 SE, worst |z| = {:.2f}", ok, total, worst)};
}

// 2 --------------------------------------------------------------------------

Outcome variance_ordering()
{
    const std::size_t n = 100000;
    const double z_crit = 2.326;  // one-sided alpha = 0.01
    CounterRng data(201, RngPurpose::Evaluation);
    std::size_t rejected = 0;
    double worst = -1e300;
    for (const Layer& l : layer_suite(202, 20)) {
        const Tensor h = random_tensor(l.input_shape(), data);
        ProbeSpec push;
        push.form = EstimatorForm::Pushforward;
        const auto a = phi_samples(l, h, push, n, 203);
        const auto b = phi_samples(l, h, {}, n, 204);
        const double va = sample_variance(a), vb = sample_variance(b);
        const double se = std::sqrt((std::max(fourth_central_moment(a) - va * va, 0.0) +
                                     std::max(fourth_central_moment(b) - vb * vb, 0.0)) /
                                    static_cast<double>(n));
        const double z = se > 0.0 ? (va - vb) / se : (va > vb ? 1e300 : 0.0);
        worst = std::max(worst, z);
        if (z > z_crit) ++rejected;
    }
    return {rejected == 0,
            fmt::format("pushforward variance exceeded bilinear variance significantly on {}/20 layers, max z = {:.2f}",
                        rejected, worst)};
}

// 3 --------------------------------------------------------------------------

Outcome ad_correctness()
{
    CounterRng rng(301, RngPurpose::Evaluation);
    double worst_adjoint = 0.0, worst_jac = 0.0;
    for (const Layer& l : layer_zoo(302)) {
        for (int trial = 0; trial < 5; ++trial) {
            const Tensor x = random_tensor(l.input_shape(), rng);
            const Tensor v = random_tensor(l.input_shape(), rng);
            const Tensor u = random_tensor(l.output_shape(), rng);
            const double lhs = dot(u.flat(), jvp(l, x, v).tangent.flat());
            const double rhs = dot(vjp(l, x, u).tangent.flat(), v.flat());
            worst_adjoint = std::max(worst_adjoint, std::abs(lhs - rhs) / (1.0 + std::abs(lhs)));
        }
        const Tensor x = random_tensor(l.input_shape(), rng);
        const Tensor exact = exact_jacobian(l, x);
        const Tensor fd = finite_difference_jacobian(l, x);
        double scale = 0.0;
        for (double v : exact.flat()) scale = std::max(scale, std::abs(v));
        worst_jac = std::max(worst_jac, max_abs_difference(exact, fd) / std::max(scale, 1e-12));
    }

    // Trainer gradients against central differences of the loss.
    Model model = make_mlp({.input_dim = 3, .hidden = {6, 5}, .num_classes = 3, .head_hidden = 0,
                            .activation = Activation::Tanh},
                           303);
    const std::size_t params = model.parameter_count();
    const Tensor x = random_tensor({3}, rng);
    const int label = 1;
    const LossGradients g = loss_and_gradients(model, x, label);
    double worst_grad = 0.0;
    const double eps = 1e-5;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& ps = model.layers[l].mutable_parameters();
        for (std::size_t p = 0; p < ps.size(); ++p) {
            for (std::size_t k = 0; k < ps[p].value.size(); ++k) {
                double& w = ps[p].value[k];
                const double saved = w;
                w = saved + eps;
                const double up = cross_entropy(model, x, label);
                w = saved - eps;
                const double down = cross_entropy(model, x, label);
                w = saved;
                const double fd = (up - down) / (2 * eps);
                worst_grad = std::max(worst_grad, std::abs(g.layers[l][p][k] - fd) / std::max(std::abs(fd), 1e-8));
            }
        }
    }
    const bool pass = worst_adjoint <= 1e-10 && worst_jac <= 1e-6 && worst_grad <= 1e-5 && params <= 100;
    return {pass, fmt::format("adjoint {:.1e} (<= 1e-10), jacobian vs FD {:.1e} (<= 1e-6) over {} layer kinds, "
                              "trainer gradients {:.1e} (<= 1e-5) on {} parameters",
                              worst_adjoint, worst_jac, layer_zoo(302).size(), worst_grad, params)};
}

// 4 --------------------------------------------------------------------------

using Scores = std::vector<double>;

double brute_auroc(const Scores& id, const Scores& ood)
{
    double wins = 0.0;
    for (double o : ood)
        for (double i : id) wins += o > i ? 1.0 : (o == i ? 0.5 : 0.0);
    return wins / (static_cast<double>(id.size()) * static_cast<double>(ood.size()));
}

double count_le(const Scores& s, double t)
{
    return static_cast<double>(std::count_if(s.begin(), s.end(), [t](double v) { return v <= t; }));
}

// ID is the positive class and is accepted when its score is at or below the threshold.
double brute_aupr_in(const Scores& id, const Scores& ood)
{
    std::set<double> ts(id.begin(), id.end());
    ts.insert(ood.begin(), ood.end());
    double area = 0.0, prev = 0.0;
    for (double t : ts) {
        const double tp = count_le(id, t), fp = count_le(ood, t);
        const double recall = tp / static_cast<double>(id.size());
        if (tp > 0) area += (recall - prev) * tp / (tp + fp);
        prev = recall;
    }
    return area;
}

double brute_fpr95(const Scores& id, const Scores& ood)
{
    std::set<double> ts(id.begin(), id.end());
    ts.insert(ood.begin(), ood.end());
    for (double t : ts)
        if (count_le(id, t) * 20 >= 19 * static_cast<double>(id.size())) return count_le(ood, t) / static_cast<double>(ood.size());
    return 1.0;
}

Outcome metric_oracles()
{
    CounterRng rng(401, RngPurpose::Evaluation);
    auto draw = [&](std::size_t n, double shift) {
        Scores s(n);
        for (double& v : s) v = std::round(4.0 * (rng.normal() + shift)) / 4.0;
        return s;
    };
    std::size_t auroc_bad = 0, aupr_bad = 0, fpr_bad = 0, cles_bad = 0;
    double aupr_worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const Scores id = draw(1 + rng.below(100), 0.0);
        const Scores ood = draw(1 + rng.below(100), rng.uniform());
        if (auroc(id, ood) != brute_auroc(id, ood)) ++auroc_bad;
        const double da = std::abs(aupr_in(id, ood) - brute_aupr_in(id, ood));
        aupr_worst = std::max(aupr_worst, da);
        if (da > 1e-12) ++aupr_bad;
        if (fpr_at_95_tpr(id, ood) != brute_fpr95(id, ood)) ++fpr_bad;
        if (std::abs(cles(ood, id) - auroc(id, ood)) > 1e-12) ++cles_bad;
    }
    double worst_mw = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        Scores a(12), b(12);
        const double shift = 1.5 * rng.uniform();
        for (double& v : a) v = rng.normal() + shift;
        for (double& v : b) v = rng.normal();
        worst_mw = std::max(worst_mw, std::abs(mann_whitney_one_sided(a, b, MannWhitneyMode::Exact) -
                                               mann_whitney_one_sided(a, b, MannWhitneyMode::Normal)));
    }
    const bool pass = auroc_bad + aupr_bad + fpr_bad + cles_bad == 0 && worst_mw <= 0.02;
    return {pass, fmt::format("mismatches over 200 lists: auroc {}, aupr_in {} (max diff {:.1e}), fpr95 {}, cles {}; "
                              "Mann-Whitney exact vs normal at n = 12: max |dp| = {:.4f}",
                              auroc_bad, aupr_bad, aupr_worst, fpr_bad, cles_bad, worst_mw)};
}

// 5 - 8: the far-OOD benchmark ------------------------------------------------

constexpr std::uint32_t kValidationBase = 1U << 24;

ExperimentConfig benchmark_config()
{
    ExperimentConfig c;
    c.name = "acceptance";
    c.data = DataSpec{};  // 4 classes, 16 dims, separation 4
    c.ood = {{ShiftKind::Far, 4.0}, {ShiftKind::Far, 8.0}};
    c.model.architecture = Architecture::Mlp;
    c.model.mlp.hidden = {64, 64, 64};
    c.model.mlp.head_hidden = 64;
    c.model.mlp.activation = Activation::Tanh;
    c.seeds = {1, 2, 3, 4, 5};
    return c;
}

struct SeedRun {
    std::uint64_t seed = 0;
    double test_accuracy = 0.0;
    double auroc_l = 0.0;
    double p_l = 1.0;
    double rep_cles = 0.0;
    std::vector<double> sweep_medians;
    double sweep_spearman = 0.0;
    bool sweep_increasing = false;
    double val_auroc_m = 0.0, val_auroc_l = 0.0, val_auroc_open = 0.0;
};

std::vector<double> last_layer(const std::vector<LayerScores>& s)
{
    std::vector<double> out;
    for (const LayerScores& x : s) out.push_back(blood_l(x));
    return out;
}

std::vector<double> mean_layer(const std::vector<LayerScores>& s)
{
    std::vector<double> out;
    for (const LayerScores& x : s) out.push_back(blood_m(x));
    return out;
}

SeedRun run_seed(const ExperimentConfig& config, std::uint64_t seed, std::size_t jobs)
{
    SeedRun r;
    r.seed = seed;
    const Benchmark b = make_benchmark(config, seed);
    const TrainedModels m = train_models(config, b.train, b.num_classes, seed, false);
    r.test_accuracy = accuracy(m.trained, b.test.x, b.test.y);
    const BloodConfig bc = blood_config_for(config, seed);

    auto scores = [&](const std::vector<Tensor>& xs, std::uint32_t base) {
        std::vector<LayerScores> out(xs.size());
        parallel_for(xs.size(), jobs, [&](std::size_t i) {
            out[i] = layer_scores(m.trained, xs[i], bc, base + static_cast<std::uint32_t>(i));
        });
        return out;
    };
    const Dataset& far4 = b.ood.at("far-4");
    const Dataset& far8 = b.ood.at("far-8");
    const auto s_test = scores(b.test.x, 0);
    const auto s_far8 = scores(far8.x, static_cast<std::uint32_t>(b.test.size()));
    const auto s_far4 = scores(far4.x, static_cast<std::uint32_t>(b.test.size() + far8.size()));
    const auto s_train = scores(b.train.x, 1U << 20);

    const auto l_test = last_layer(s_test), l_far8 = last_layer(s_far8);
    r.auroc_l = auroc(l_test, l_far8);
    r.p_l = mann_whitney_one_sided(l_far8, l_test);

    r.rep_cles = rep_change(m.init, m.trained, b.test.x, far8.x).cles_mean;

    const std::vector<std::vector<double>> levels{last_layer(s_train), l_test, last_layer(s_far4), l_far8};
    for (const auto& lv : levels) r.sweep_medians.push_back(median(lv));
    std::vector<double> index{0, 1, 2, 3};
    r.sweep_spearman = spearman(index, r.sweep_medians).rho;
    r.sweep_increasing = std::is_sorted(r.sweep_medians.begin(), r.sweep_medians.end(), std::less_equal<>()) &&
                         std::adjacent_find(r.sweep_medians.begin(), r.sweep_medians.end()) == r.sweep_medians.end();

    const Dataset& val_ood = b.val_ood.at("far-8");
    const auto v_id = scores(b.val.x, kValidationBase);
    const auto v_ood = scores(val_ood.x, kValidationBase + static_cast<std::uint32_t>(b.val.size()));
    std::vector<LayerScores> v_all = v_id;
    v_all.insert(v_all.end(), v_ood.begin(), v_ood.end());
    std::vector<bool> is_ood(v_id.size(), false);
    is_ood.resize(v_all.size(), true);
    const OpenBoxWeights w = openbox_fit(v_all, is_ood);
    std::vector<double> o_id, o_ood;
    for (const LayerScores& s : v_id) o_id.push_back(openbox_logit(w, s));
    for (const LayerScores& s : v_ood) o_ood.push_back(openbox_logit(w, s));
    r.val_auroc_open = auroc(o_id, o_ood);
    r.val_auroc_m = auroc(mean_layer(v_id), mean_layer(v_ood));
    r.val_auroc_l = auroc(last_layer(v_id), last_layer(v_ood));
    return r;
}

std::vector<SeedRun> run_benchmark(std::size_t jobs)
{
    const ExperimentConfig config = benchmark_config();
    std::vector<SeedRun> runs;
    for (std::uint64_t seed : config.seeds) runs.push_back(run_seed(config, seed, jobs));
    return runs;
}

Outcome far_ood_auroc(const std::vector<SeedRun>& runs)
{
    std::vector<double> au, ps, acc;
    for (const SeedRun& r : runs) {
        au.push_back(r.auroc_l);
        ps.push_back(r.p_l);
        acc.push_back(r.test_accuracy);
    }
    const double mean = mean_of(au);
    const bool all_sig = std::all_of(ps.begin(), ps.end(), [](double p) { return p < 0.05; });
    std::string p_text;
    for (double p : ps) p_text += fmt::format("{}{:.1e}", p_text.empty() ? "" : " ", p);
    return {mean >= 0.75 && all_sig,
            fmt::format("BLOOD_L AUROC per seed [{}], mean {:.3f} (needs >= 0.75); one-sided p [{}]; "
                        "test accuracy [{}]",
                        join(au), mean, p_text, join(acc))};
}

Outcome representation_change(const std::vector<SeedRun>& runs)
{
    std::vector<double> c;
    for (const SeedRun& r : runs) c.push_back(r.rep_cles);
    const double mean = mean_of(c);
    return {mean > 0.5, fmt::format("layer-averaged CLES per seed [{}], mean {:.3f} (needs > 0.5)", join(c), mean)};
}

Outcome shift_sweep_levels(const std::vector<SeedRun>& runs)
{
    std::size_t ok = 0;
    std::string detail;
    for (const SeedRun& r : runs) {
        const bool good = r.sweep_increasing && r.sweep_spearman == 1.0;
        if (good) ++ok;
        detail += fmt::format("{}seed {}: [{}] rho {:.1f}", detail.empty() ? "" : "; ", r.seed,
                              join(r.sweep_medians, 3), r.sweep_spearman);
    }
    return {ok >= 4, fmt::format("{}/5 seeds strictly increasing over train, test-ID, far-4, far-8 (needs >= 4); {}",
                                 ok, detail)};
}

Outcome open_box(const std::vector<SeedRun>& runs)
{
    std::size_t ok = 0;
    std::string detail;
    for (const SeedRun& r : runs) {
        if (r.val_auroc_open >= std::max(r.val_auroc_m, r.val_auroc_l)) ++ok;
        detail += fmt::format("{}seed {}: open {:.3f} vs M {:.3f}, L {:.3f}", detail.empty() ? "" : "; ", r.seed,
                              r.val_auroc_open, r.val_auroc_m, r.val_auroc_l);
    }
    return {ok == runs.size(), fmt::format("{}/{} seeds with open-box >= max(BLOOD_M, BLOOD_L); {}", ok, runs.size(), detail)};
}

// 9 --------------------------------------------------------------------------

Outcome detector_sanity()
{
    // ID: two classes near the origin. OOD: the same points moved 10 sigma along
    // a direction orthogonal to the class axis.
    const std::size_t dim = 8;
    CounterRng rng(901, RngPurpose::Evaluation);
    auto id_set = [&](std::size_t n_per_class) {
        Dataset d;
        d.dim = dim;
        d.num_classes = 2;
        for (int c = 0; c < 2; ++c) {
            for (std::size_t i = 0; i < n_per_class; ++i) {
                Tensor x = random_tensor({dim}, rng);
                x[0] += c == 0 ? -2.0 : 2.0;
                d.x.push_back(x);
                d.y.push_back(c);
                d.split.push_back(Split::Train);
            }
        }
        return d;
    };
    const Dataset train_set = id_set(200), val = id_set(60), test = id_set(100);
    Tensor direction({dim});
    for (std::size_t j = 1; j < dim; ++j) direction[j] = rng.normal();
    direction = (1.0 / norm(direction.flat())) * direction;
    std::vector<Tensor> ood;
    for (const Tensor& x : test.x) ood.push_back(x + 10.0 * direction);

    const MlpSpec spec{.input_dim = dim, .hidden = {32, 32}, .num_classes = 2, .head_hidden = 32};
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.seed = 902;
    const Model model = train(make_mlp(spec, 903), train_set.x, train_set.y, cfg).model;
    const std::vector<DetectorId> ids = all_detectors();
    DetectorOptions options;
    options.mc_seed = 904;
    FitContext ctx = build_fit_context(model, ids, train_set.x, train_set.y, val.x, val.y, options);
    for (std::uint64_t k = 1; k <= 4; ++k) {
        TrainConfig member = cfg;
        member.seed = 910 + k;
        ctx.ensemble.push_back(train(clone_with_reinit_head(model, 920 + k), train_set.x, train_set.y, member).model);
    }
    std::size_t above = 0;
    std::string detail;
    for (DetectorId d : ids) {
        std::vector<double> s_id, s_ood;
        for (std::size_t i = 0; i < test.size(); ++i) {
            s_id.push_back(detector_score(d, model, test.x[i], ctx, options, static_cast<std::uint32_t>(i)));
            s_ood.push_back(detector_score(d, model, ood[i], ctx, options, static_cast<std::uint32_t>(test.size() + i)));
        }
        const double a = auroc(s_id, s_ood);
        if (a > 0.5) ++above;
        detail += fmt::format("{}{} {:.3f}", detail.empty() ? "" : " ", to_string(d), a);
    }

    // Temperature scaling never moves the argmax.
    std::size_t argmax_moved = 0;
    std::vector<Tensor> val_logits;
    for (const Tensor& x : val.x) val_logits.push_back(predict_logits(model, x));
    const double t_fit = temp_fit(val_logits, val.y).temperature;
    for (int trial = 0; trial < 2000; ++trial) {
        const Tensor z = random_tensor({5}, rng, 5.0);
        for (double t : {t_fit, 0.05, 0.7, 3.0, 40.0}) {
            Tensor scaled = z;
            for (double& v : scaled.flat()) v /= t;
            if (argmax(softmax(scaled).flat()) != argmax(z.flat())) ++argmax_moved;
        }
    }

    // Energy: egy(z + c) = egy(z) - c.
    double worst_shift = 0.0;
    for (int trial = 0; trial < 2000; ++trial) {
        const Tensor z = random_tensor({6}, rng, 4.0);
        const double c = 20.0 * rng.normal();
        Tensor shifted = z;
        for (double& v : shifted.flat()) v += c;
        worst_shift = std::max(worst_shift, std::abs(egy(shifted) - (egy(z) - c)) / std::max(1.0, std::abs(c)));
    }

    // grad_norm against central differences of the loss at the predicted label.
    double worst_grad = 0.0;
    for (std::uint64_t s = 1; s <= 6; ++s) {
        const Model m = make_mlp({.input_dim = 4, .hidden = {5, 4}, .num_classes = 3, .head_hidden = s % 2 ? 4u : 0u}, 930 + s);
        const Tensor x = random_tensor({4}, rng);
        const int label = static_cast<int>(argmax(predict_proba(m, x).flat()));
        for (GradTarget target : {GradTarget::ProjectionWeights, GradTarget::HeadParameters}) {
            double sq = 0.0;
            Model probe = m;
            auto& params = probe.layers.back().mutable_parameters();
            for (std::size_t p = 0; p < params.size(); ++p) {
                if (target == GradTarget::ProjectionWeights && params[p].name != "out.weight") continue;
                for (std::size_t k = 0; k < params[p].value.size(); ++k) {
                    double& w = params[p].value[k];
                    const double saved = w;
                    const double h = 1e-6 * std::max(1.0, std::abs(saved));
                    w = saved + h;
                    const double up = cross_entropy(probe, x, label);
                    w = saved - h;
                    const double down = cross_entropy(probe, x, label);
                    w = saved;
                    const double g = (up - down) / (2 * h);
                    sq += g * g;
                }
            }
            const double fd = std::sqrt(sq);
            worst_grad = std::max(worst_grad, std::abs(grad_norm(m, x, target) - fd) / std::max(fd, 1e-8));
        }
    }

    const bool pass = above == ids.size() && argmax_moved == 0 && worst_shift <= 1e-12 && worst_grad <= 1e-5;
    return {pass, fmt::format("AUROC > 0.5 for {}/{} detectors [{}]; temperature argmax changes {}; "
                              "energy shift error {:.1e}; grad_norm vs FD {:.1e}",
                              above, ids.size(), detail, argmax_moved, worst_shift, worst_grad)};
}

// 10 -------------------------------------------------------------------------

Outcome performance()
{
    const Model model = make_mlp({.input_dim = 16, .hidden = {64, 64, 64}, .num_classes = 4, .head_hidden = 64}, 1001);
    CounterRng rng(1002, RngPurpose::Evaluation);
    std::vector<Tensor> xs;
    for (int i = 0; i < 1000; ++i) xs.push_back(random_tensor({16}, rng));
    BloodConfig bc;
    bc.m_samples = 50;
    bc.seed = 1003;

    const auto t0 = Clock::now();
    const auto serial = score_all(model, xs, bc, 1);
    const double elapsed = seconds_since(t0);
    const auto parallel = score_all(model, xs, bc, 8);
    bool identical = serial.size() == parallel.size();
    for (std::size_t i = 0; identical && i < serial.size(); ++i) {
        identical = serial[i].values.size() == parallel[i].values.size() &&
                    std::memcmp(serial[i].values.data(), parallel[i].values.data(),
                                serial[i].values.size() * sizeof(double)) == 0;
    }
    return {elapsed < 10.0 && identical,
            fmt::format("1000 instances x {} layers x M=50 in {:.2f} s single-threaded (needs < 10 s); "
                        "8 jobs bit-identical: {}",
                        serial.front().values.size(), elapsed, identical ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Acceptance checks"};
    std::vector<int> only;
    std::size_t jobs = std::max(1U, std::thread::hardware_concurrency());
    app.add_option("--only", only, "run only these criteria")->delimiter(',')->check(CLI::Range(1, 10));
    app.add_option("--jobs", jobs, "threads for the benchmark criteria (5-8)")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);
    auto wanted = [&](int k) { return only.empty() || std::find(only.begin(), only.end(), k) != only.end(); };

    std::vector<SeedRun> bench;
    auto benchmark = [&]() -> const std::vector<SeedRun>& {
        if (bench.empty()) bench = run_benchmark(jobs);
        return bench;
    };
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"estimator unbiasedness", estimator_unbiasedness},
        {"variance ordering", variance_ordering},
        {"autodiff correctness", ad_correctness},
        {"metric oracles", metric_oracles},
        {"far-OOD BLOOD_L AUROC", [&] { return far_ood_auroc(benchmark()); }},
        {"representation change CLES", [&] { return representation_change(benchmark()); }},
        {"BLOOD_L grows with shift", [&] { return shift_sweep_levels(benchmark()); }},
        {"open-box BLOOD on validation", [&] { return open_box(benchmark()); }},
        {"detector sanity", detector_sanity},
        {"performance", performance},
    };

    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int number = static_cast<int>(k) + 1;
        if (!wanted(number)) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        fmt::print("{} criterion {:>2} ({}): {} [{:.1f} s]\n", o.pass ? "PASS" : "FAIL", number, criteria[k].first,
                   o.detail, seconds_since(t0));
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
