#include "blood/experiment.hpp"

#include <charconv>
#include <cmath>
#include <fmt/format.h>

#include "blood/errors.hpp"
#include "blood/rng.hpp"

namespace blood {

namespace {

// Sub-stream tags for derive_seed.
enum : std::uint64_t {
    kTestSplit = 1,
    kValSplit = 2,
    kFarOod = 3,
    kBackgroundMap = 4,
    kBackgroundDraw = 5,
    kOodSubsample = 6,
    kModelInit = 7,
    kEnsemble = 8,
};

// Splits an OOD pool into (validation, test) parts of the requested sizes.
std::pair<Dataset, Dataset> carve(const Dataset& pool, std::size_t n_val, std::size_t n_test, std::uint64_t seed)
{
    const Dataset sample = subsample_ood_to_test_size(pool, n_val + n_test, seed);
    std::vector<std::size_t> val_idx, test_idx;
    for (std::size_t i = 0; i < sample.size(); ++i) (i < n_val ? val_idx : test_idx).push_back(i);
    Dataset val = sample.subset(val_idx), test = sample.subset(test_idx);
    for (auto* d : {&val, &test})
        for (auto& s : d->split) s = Split::Ood;
    return {std::move(val), std::move(test)};
}

}  // namespace

std::string_view to_string(ShiftKind kind)
{
    switch (kind) {
    case ShiftKind::Far: return "far";
    case ShiftKind::Background: return "background";
    case ShiftKind::Semantic: return "semantic";
    }
    return "?";
}

ShiftKind parse_shift_kind(std::string_view name)
{
    if (name == "far") return ShiftKind::Far;
    if (name == "background") return ShiftKind::Background;
    if (name == "semantic") return ShiftKind::Semantic;
    throw ConfigError("unknown shift kind '" + std::string(name) + "' (expected far, background or semantic)");
}

std::string OodSpec::name() const
{
    if (kind == ShiftKind::Semantic) return "semantic";
    return fmt::format("{}-{}", to_string(kind), degree);
}

OodSpec parse_ood_spec(std::string_view name)
{
    if (name == "semantic") return {ShiftKind::Semantic, 0.0};
    const auto dash = name.find('-');
    if (dash == std::string_view::npos) throw ConfigError("OOD set '" + std::string(name) + "' needs a degree, as in far-8");
    OodSpec spec;
    spec.kind = parse_shift_kind(name.substr(0, dash));
    const std::string_view deg = name.substr(dash + 1);
    const auto [ptr, ec] = std::from_chars(deg.data(), deg.data() + deg.size(), spec.degree);
    if (ec != std::errc{} || ptr != deg.data() + deg.size() || !(spec.degree >= 0.0)) {
        throw ConfigError("OOD set '" + std::string(name) + "' has an invalid degree");
    }
    if (spec.kind == ShiftKind::Semantic) throw ConfigError("semantic shift takes no degree");
    return spec;
}

void ExperimentConfig::validate() const
{
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (ood.empty()) throw ConfigError("at least one OOD set is required");
    if (data.classes < 2 || data.dim < 1 || data.n_per_class < 2) throw ConfigError("dataset needs >= 2 classes, dim >= 1, >= 2 instances per class");
    if (!(data.test_fraction > 0.0 && data.test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
    if (!(data.val_fraction > 0.0 && data.val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
    if (!data.two_classes.empty() && data.two_classes.size() != 2) throw ConfigError("two_classes takes exactly two labels");
    if (ensemble_size < 1) throw ConfigError("ensemble_size must be >= 1");
    if (mdl_blocks < 2 || mdl_block_size < 1) throw ConfigError("MDL needs >= 2 blocks of >= 1 instance");
    for (const OodSpec& o : ood)
        if (o.kind == ShiftKind::Semantic && data.classes < 4) throw ConfigError("semantic shift needs >= 4 classes");
    for (const std::string& s : sweep) {
        const bool known = std::any_of(ood.begin(), ood.end(), [&](const OodSpec& o) { return o.name() == s; });
        if (!known) throw ConfigError("sweep level '" + s + "' is not one of the configured OOD sets");
    }
    try {
        train.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("train: ") + e.what());
    }
    if (train.epochs < 1) throw ConfigError("train epochs must be >= 1");
    if (blood.m_samples < 1) throw ConfigError("blood m_samples must be >= 1");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) { return splitmix64(splitmix64(seed) ^ (tag * 0x9e3779b97f4a7c15ULL)); }

Benchmark make_benchmark(const ExperimentConfig& config, std::uint64_t seed)
{
    config.validate();
    const DataSpec& ds = config.data;
    const bool semantic =
        std::any_of(config.ood.begin(), config.ood.end(), [](const OodSpec& o) { return o.kind == ShiftKind::Semantic; });

    // The ID task: optionally the even classes, optionally two of them.
    auto to_id_task = [&](const Dataset& d) {
        Dataset out = semantic ? make_semantic_split(d).first : d;
        if (!ds.two_classes.empty()) out = simplify_to_two_classes(out, ds.two_classes[0], ds.two_classes[1]);
        return out;
    };

    const Dataset full = make_gaussian_classes(ds.classes, ds.dim, ds.n_per_class, ds.separation, seed);
    const Dataset tt = split_train_test(to_id_task(full), ds.test_fraction, derive_seed(seed, kTestSplit));
    const Dataset tv = split_train_test(tt.only(Split::Train), ds.val_fraction, derive_seed(seed, kValSplit));

    Benchmark b;
    b.train = tv.only(Split::Train);
    b.val = tv.only(Split::TestId);
    b.test = tt.only(Split::TestId);
    b.num_classes = b.train.num_classes;
    b.dim = ds.dim;
    const std::size_t n_val = b.val.size(), n_test = b.test.size();

    for (const OodSpec& spec : config.ood) {
        Dataset pool;
        switch (spec.kind) {
        case ShiftKind::Far:
            // One direction per seed, so degrees of a sweep share it.
            pool = make_far_ood(full, spec.degree, derive_seed(seed, kFarOod), n_val + n_test);
            break;
        case ShiftKind::Background: {
            // A fresh ID draw, shifted, then reduced to the ID task so labels stay meaningful.
            const std::size_t per_class = (n_val + n_test) * (semantic ? 2 : 1) + ds.n_per_class;
            const Dataset fresh =
                make_gaussian_classes(ds.classes, ds.dim, per_class, ds.separation, derive_seed(seed, kBackgroundDraw));
            pool = to_id_task(make_background_shift(fresh, spec.degree, derive_seed(seed, kBackgroundMap)));
            break;
        }
        case ShiftKind::Semantic: pool = make_semantic_split(full).second; break;
        }
        if (pool.size() < n_val + n_test) {
            throw ConfigError(fmt::format("OOD set {} has {} instances, {} needed", spec.name(), pool.size(),
                                          n_val + n_test));
        }
        auto [val, test] = carve(pool, n_val, n_test, derive_seed(seed, kOodSubsample));
        b.val_ood[spec.name()] = std::move(val);
        b.ood[spec.name()] = std::move(test);
    }
    return b;
}

Model build_model(const ModelConfig& config, std::size_t input_dim, std::size_t num_classes, std::uint64_t seed)
{
    if (config.architecture == Architecture::Mlp) {
        MlpSpec spec = config.mlp;
        spec.input_dim = input_dim;
        spec.num_classes = num_classes;
        return make_mlp(spec, seed);
    }
    TransformerSpec spec = config.transformer;
    spec.input_dim = input_dim;
    spec.num_classes = num_classes;
    return make_mini_transformer(spec, seed);
}

TrainedModels train_models(const ExperimentConfig& config, const Dataset& train_set, std::size_t num_classes,
                           std::uint64_t seed, bool with_ensemble)
{
    TrainedModels out;
    out.init = build_model(config.model, train_set.dim, num_classes, derive_seed(seed, kModelInit));
    TrainConfig cfg = config.train;
    cfg.seed = seed;
    TrainResult r = train(out.init, train_set.x, train_set.y, cfg);
    out.trained = std::move(r.model);
    out.dynamics = std::move(r.dynamics);
    if (!with_ensemble) return out;
    out.ensemble.push_back(out.trained);
    for (std::size_t k = 1; k < config.ensemble_size; ++k) {
        const std::uint64_t member_seed = derive_seed(derive_seed(seed, kEnsemble), k);
        TrainConfig member = cfg;
        member.seed = member_seed;
        out.ensemble.push_back(train(clone_with_reinit_head(out.init, member_seed), train_set.x, train_set.y, member).model);
    }
    return out;
}

BloodConfig blood_config_for(const ExperimentConfig& config, std::uint64_t seed)
{
    BloodConfig b = config.blood;
    b.seed = seed;
    return b;
}

}  // namespace blood
