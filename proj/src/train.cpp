#include "blood/train.hpp"

#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include "blood/errors.hpp"
#include "json.hpp"

namespace blood {

void TrainConfig::validate() const
{
    if (!(step_size > 0.0)) throw InvalidArgument("step size must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("dropout rate must lie in [0, 1)");
    if (batch_size == 0) throw InvalidArgument("batch size must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
        throw InvalidArgument("invalid Adam hyperparameters");
    }
}

namespace {

void check_data(const Model& model, std::span<const Tensor> inputs, std::span<const int> labels)
{
    if (inputs.empty()) throw InvalidArgument("training set is empty");
    if (inputs.size() != labels.size()) throw InvalidArgument("inputs and labels differ in length");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= model.num_classes) {
            throw InvalidArgument("label " + std::to_string(labels[i]) + " of instance " + std::to_string(i) +
                                  " is outside [0, " + std::to_string(model.num_classes) + ")");
        }
    }
}

// Forward with dropout masks kept for the backward pass, then accumulate
// gradients of the cross-entropy into `grads`.
double accumulate_gradients(const Model& model, const Tensor& x, int label, double rate, CounterRng* rng,
                            std::vector<std::vector<Tensor>>& grads)
{
    const std::size_t depth = model.depth();
    const double keep_scale = rate > 0.0 ? 1.0 / (1.0 - rate) : 1.0;
    std::vector<Tensor> inputs;
    std::vector<Tensor> masks;
    inputs.reserve(depth);
    inputs.push_back(x);
    for (std::size_t l = 1; l < depth; ++l) {
        Tensor h = eval(model.layer(l), inputs.back());
        if (rate > 0.0) {
            Tensor mask = Tensor::zeros_like(h);
            for (double& m : mask.flat()) m = rng->uniform() < rate ? 0.0 : keep_scale;
            h.hadamard(mask);
            masks.push_back(std::move(mask));
        }
        inputs.push_back(std::move(h));
    }
    const Tensor logits = eval(model.head(), inputs.back());
    Tensor u = softmax(logits);
    const double loss = -std::log(std::max(u[static_cast<std::size_t>(label)], 1e-300));
    u[static_cast<std::size_t>(label)] -= 1.0;
    for (std::size_t l = depth; l >= 1; --l) {
        u = backward(model.layer(l), inputs[l - 1], u, &grads[l - 1]);
        if (l >= 2 && rate > 0.0) u.hadamard(masks[l - 2]);
    }
    return loss;
}

std::vector<std::vector<Tensor>> zero_model_gradients(const Model& model)
{
    std::vector<std::vector<Tensor>> g;
    for (const Layer& l : model.layers) g.push_back(zero_gradients(l));
    return g;
}

}  // namespace

double cross_entropy(const Model& model, const Tensor& x, int label)
{
    const Tensor p = predict_proba(model, x);
    return -std::log(std::max(p[static_cast<std::size_t>(label)], 1e-300));
}

double mean_cross_entropy(const Model& model, std::span<const Tensor> inputs, std::span<const int> labels)
{
    double s = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) s += cross_entropy(model, inputs[i], labels[i]);
    return s / static_cast<double>(inputs.size());
}

double accuracy(const Model& model, std::span<const Tensor> inputs, std::span<const int> labels)
{
    if (inputs.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Tensor logits = predict_logits(model, inputs[i]);
        hits += argmax(logits.flat()) == static_cast<std::size_t>(labels[i]);
    }
    return static_cast<double>(hits) / static_cast<double>(inputs.size());
}

LossGradients loss_and_gradients(const Model& model, const Tensor& x, int label)
{
    LossGradients out;
    out.layers = zero_model_gradients(model);
    out.loss = accumulate_gradients(model, x, label, 0.0, nullptr, out.layers);
    return out;
}

TrainResult train(Model model, std::span<const Tensor> inputs, std::span<const int> labels,
                  const TrainConfig& config)
{
    config.validate();
    model.validate();
    check_data(model, inputs, labels);

    const std::size_t n = inputs.size();
    auto first_moment = zero_model_gradients(model);
    auto second_moment = zero_model_gradients(model);
    std::uint64_t step = 0;

    TrainResult result;
    result.dynamics.instances = n;
    result.dynamics.epochs = config.epochs;
    result.dynamics.true_class_probability.reserve(n * config.epochs);
    result.dynamics.correct.reserve(n * config.epochs);

    std::vector<std::size_t> order(n);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        CounterRng shuffle_rng(config.seed, RngPurpose::Training, static_cast<std::uint32_t>(epoch));
        shuffle(order, shuffle_rng);

        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t stop = std::min(n, start + config.batch_size);
            auto grads = zero_model_gradients(model);
            for (std::size_t pos = start; pos < stop; ++pos) {
                CounterRng dropout_rng(config.seed, RngPurpose::Dropout, static_cast<std::uint32_t>(epoch),
                                       static_cast<std::uint32_t>(pos));
                accumulate_gradients(model, inputs[order[pos]], labels[order[pos]], config.dropout, &dropout_rng,
                                     grads);
            }
            ++step;
            const double inv_batch = 1.0 / static_cast<double>(stop - start);
            const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                auto& params = model.layers[l].mutable_parameters();
                for (std::size_t p = 0; p < params.size(); ++p) {
                    Tensor& w = params[p].value;
                    Tensor& m = first_moment[l][p];
                    Tensor& v = second_moment[l][p];
                    const Tensor& g = grads[l][p];
                    for (std::size_t k = 0; k < w.size(); ++k) {
                        const double gk = g[k] * inv_batch;
                        m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * gk;
                        v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * gk * gk;
                        w[k] -= config.step_size * (m[k] / bias1) / (std::sqrt(v[k] / bias2) + config.epsilon);
                    }
                }
            }
        }

        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const Tensor p = predict_proba(model, inputs[i]);
            const auto y = static_cast<std::size_t>(labels[i]);
            result.dynamics.true_class_probability.push_back(p[y]);
            result.dynamics.correct.push_back(argmax(p.flat()) == y ? 1 : 0);
            loss -= std::log(std::max(p[y], 1e-300));
        }
        result.epoch_loss.push_back(loss / static_cast<double>(n));
        if (!std::isfinite(result.epoch_loss.back())) {
            throw NumericalError("training diverged at epoch " + std::to_string(epoch));
        }
    }
    result.model = std::move(model);
    return result;
}

void write_dynamics_jsonl(const TrainingDynamics& dynamics, std::ostream& out)
{
    for (std::size_t e = 0; e < dynamics.epochs; ++e) {
        for (std::size_t i = 0; i < dynamics.instances; ++i) {
            nlohmann::json rec = {{"instance", i},
                                  {"epoch", e},
                                  {"p_true", dynamics.probability(i, e)},
                                  {"correct", dynamics.is_correct(i, e)}};
            out << rec.dump() << '\n';
        }
    }
}

TrainingDynamics read_dynamics_jsonl(std::istream& in)
{
    struct Row {
        std::size_t instance, epoch;
        double p;
        bool correct;
    };
    std::vector<Row> rows;
    std::size_t max_instance = 0, max_epoch = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            Row r{j.at("instance").get<std::size_t>(), j.at("epoch").get<std::size_t>(), j.at("p_true").get<double>(),
                  j.at("correct").get<bool>()};
            max_instance = std::max(max_instance, r.instance);
            max_epoch = std::max(max_epoch, r.epoch);
            rows.push_back(r);
        } catch (const nlohmann::json::exception& e) {
            throw CorruptFileError("dynamics line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    TrainingDynamics d;
    if (rows.empty()) return d;
    d.instances = max_instance + 1;
    d.epochs = max_epoch + 1;
    if (rows.size() != d.instances * d.epochs) throw CorruptFileError("dynamics log is incomplete");
    d.true_class_probability.assign(rows.size(), 0.0);
    d.correct.assign(rows.size(), 0);
    for (const Row& r : rows) {
        d.true_class_probability[r.epoch * d.instances + r.instance] = r.p;
        d.correct[r.epoch * d.instances + r.instance] = r.correct ? 1 : 0;
    }
    return d;
}

}  // namespace blood
