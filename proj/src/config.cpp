#include "blood/config.hpp"

#include <boost/algorithm/string/split.hpp>
#include <boost/algorithm/string/trim.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "blood/errors.hpp"

namespace blood {

namespace pt = boost::property_tree;

namespace {

std::vector<std::string> split_list(const std::string& text)
{
    std::vector<std::string> parts, out;
    boost::algorithm::split(parts, text, [](char c) { return c == ','; });
    for (std::string& p : parts) {
        boost::algorithm::trim(p);
        if (!p.empty()) out.push_back(p);
    }
    return out;
}

std::string join(const std::vector<std::string>& items)
{
    std::string out;
    for (const std::string& s : items) out += (out.empty() ? "" : ", ") + s;
    return out;
}

template <class T>
std::string join_numbers(const std::vector<T>& items)
{
    std::vector<std::string> s;
    for (const T& v : items) s.push_back(fmt::format("{}", v));
    return join(s);
}

/// Reads typed values out of one section and remembers which keys it used.
class Section {
public:
    Section(const pt::ptree& root, std::string name) : name_(std::move(name))
    {
        if (auto child = root.get_child_optional(name_)) tree_ = *child;
    }

    template <class T>
    void get(const std::string& key, T& target)
    {
        used_.insert(key);
        const auto raw = tree_.get_optional<std::string>(key);
        if (!raw) return;
        std::string value = *raw;
        boost::algorithm::trim(value);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (value == "true" || value == "1") target = true;
                else if (value == "false" || value == "0") target = false;
                else throw std::invalid_argument("not a boolean");
            } else if constexpr (std::is_same_v<T, std::string>) {
                target = value;
            } else if constexpr (std::is_floating_point_v<T>) {
                std::size_t pos = 0;
                target = std::stod(value, &pos);
                if (pos != value.size()) throw std::invalid_argument("trailing characters");
            } else {
                if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
                std::size_t pos = 0;
                target = static_cast<T>(std::stoull(value, &pos));
                if (pos != value.size()) throw std::invalid_argument("trailing characters");
            }
        } catch (const std::exception&) {
            throw ConfigError(fmt::format("[{}] {} = '{}' is not a valid value", name_, key, value));
        }
    }

    std::optional<std::string> raw(const std::string& key)
    {
        used_.insert(key);
        const auto v = tree_.get_optional<std::string>(key);
        if (!v) return std::nullopt;
        return boost::algorithm::trim_copy(*v);
    }

    template <class T>
    void get_list(const std::string& key, std::vector<T>& target)
    {
        const auto text = raw(key);
        if (!text) return;
        target.clear();
        for (const std::string& item : split_list(*text)) {
            try {
                std::size_t pos = 0;
                if constexpr (std::is_floating_point_v<T>) target.push_back(static_cast<T>(std::stod(item, &pos)));
                else if constexpr (std::is_signed_v<T>) target.push_back(static_cast<T>(std::stoll(item, &pos)));
                else {
                    if (item[0] == '-') throw std::invalid_argument("negative");
                    target.push_back(static_cast<T>(std::stoull(item, &pos)));
                }
                if (pos != item.size()) throw std::invalid_argument("trailing characters");
            } catch (const std::exception&) {
                throw ConfigError(fmt::format("[{}] {}: '{}' is not a valid list entry", name_, key, item));
            }
        }
    }

    /// Parses a named value with `parse`, mapping library errors to ConfigError.
    template <class T, class Parse>
    void get_enum(const std::string& key, T& target, Parse parse)
    {
        const auto text = raw(key);
        if (!text) return;
        try {
            target = parse(*text);
        } catch (const Error& e) {
            throw ConfigError(fmt::format("[{}] {}: {}", name_, key, e.what()));
        }
    }

    void reject_unknown() const
    {
        for (const auto& [key, value] : tree_)
            if (!used_.contains(key)) throw ConfigError(fmt::format("unknown key '{}' in section [{}]", key, name_));
    }

private:
    std::string name_;
    pt::ptree tree_;
    std::set<std::string> used_;
};

}  // namespace

ExperimentConfig parse_config(std::istream& in)
{
    pt::ptree root;
    try {
        pt::read_ini(in, root);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
    }
    const std::set<std::string> known{"experiment", "data", "ood", "model", "train", "blood", "detectors", "analysis"};
    for (const auto& [name, child] : root) {
        if (!known.contains(name)) throw ConfigError("unknown config section [" + name + "]");
    }

    ExperimentConfig c;
    Section exp(root, "experiment");
    exp.get("name", c.name);
    exp.get_list("seeds", c.seeds);
    exp.reject_unknown();

    Section data(root, "data");
    data.get("classes", c.data.classes);
    data.get("dim", c.data.dim);
    data.get("n_per_class", c.data.n_per_class);
    data.get("separation", c.data.separation);
    data.get("test_fraction", c.data.test_fraction);
    data.get("val_fraction", c.data.val_fraction);
    data.get_list("two_classes", c.data.two_classes);
    data.reject_unknown();

    Section ood(root, "ood");
    if (const auto sets = ood.raw("sets")) {
        c.ood.clear();
        for (const std::string& s : split_list(*sets)) c.ood.push_back(parse_ood_spec(s));
    }
    if (const auto sweep = ood.raw("sweep")) c.sweep = split_list(*sweep);
    ood.reject_unknown();

    Section model(root, "model");
    model.get_enum("architecture", c.model.architecture, parse_architecture);
    model.get_list("hidden", c.model.mlp.hidden);
    model.get("head_hidden", c.model.mlp.head_hidden);
    model.get_enum("activation", c.model.mlp.activation, parse_activation);
    model.get("token_dim", c.model.transformer.token_dim);
    model.get("width", c.model.transformer.width);
    model.get("encoder_layers", c.model.transformer.encoder_layers);
    model.get("ffn_hidden", c.model.transformer.ffn_hidden);
    model.get("transformer_head_hidden", c.model.transformer.head_hidden);
    model.reject_unknown();

    Section train(root, "train");
    train.get("step_size", c.train.step_size);
    train.get("beta1", c.train.beta1);
    train.get("beta2", c.train.beta2);
    train.get("epsilon", c.train.epsilon);
    train.get("epochs", c.train.epochs);
    train.get("batch_size", c.train.batch_size);
    train.get("dropout", c.train.dropout);
    train.reject_unknown();

    Section blood(root, "blood");
    blood.get("m_samples", c.blood.m_samples);
    blood.get_enum("distribution", c.blood.distribution, parse_vector_distribution);
    blood.get_enum("form", c.blood.form, parse_estimator_form);
    blood.get_enum("scope", c.blood.scope, parse_jacobian_scope);
    blood.get("first_layer", c.blood.first_layer);
    blood.get("last_layer", c.blood.last_layer);
    blood.reject_unknown();

    Section det(root, "detectors");
    if (const auto list = det.raw("list")) {
        c.detectors.clear();
        for (const std::string& s : split_list(*list)) {
            try {
                c.detectors.push_back(parse_detector(s));
            } catch (const Error& e) {
                throw ConfigError(std::string("[detectors] list: ") + e.what());
            }
        }
    }
    det.get("mc_passes", c.detector_options.mc_passes);
    det.get("mc_rate", c.detector_options.mc_rate);
    det.get("ash_fraction", c.detector_options.ash_fraction);
    det.get("react_percentile", c.detector_options.react_percentile);
    det.get("react_per_unit", c.detector_options.react_per_unit);
    det.get("shaped_energy", c.detector_options.shaped_energy);
    det.get_enum("grad_target", c.detector_options.grad_target, parse_grad_target);
    det.get("ensemble_size", c.ensemble_size);
    det.reject_unknown();

    Section analysis(root, "analysis");
    analysis.get("mdl_blocks", c.mdl_blocks);
    analysis.get("mdl_block_size", c.mdl_block_size);
    analysis.reject_unknown();

    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    return parse_config(in);
}

std::string to_ini(const ExperimentConfig& c)
{
    std::vector<std::string> ood, detectors;
    for (const OodSpec& o : c.ood) ood.push_back(o.name());
    for (DetectorId d : c.detectors) detectors.emplace_back(to_string(d));
    const auto b = [](bool v) { return v ? "true" : "false"; };
    std::string s;
    s += fmt::format("[experiment]\nname = {}\nseeds = {}\n\n", c.name, join_numbers(c.seeds));
    s += fmt::format(
        "[data]\nclasses = {}\ndim = {}\nn_per_class = {}\nseparation = {}\ntest_fraction = {}\nval_fraction = {}\n"
        "two_classes = {}\n\n",
        c.data.classes, c.data.dim, c.data.n_per_class, c.data.separation, c.data.test_fraction, c.data.val_fraction,
        join_numbers(c.data.two_classes));
    s += fmt::format("[ood]\nsets = {}\nsweep = {}\n\n", join(ood), join(c.sweep));
    s += fmt::format(
        "[model]\narchitecture = {}\nhidden = {}\nhead_hidden = {}\nactivation = {}\ntoken_dim = {}\nwidth = {}\n"
        "encoder_layers = {}\nffn_hidden = {}\ntransformer_head_hidden = {}\n\n",
        to_string(c.model.architecture), join_numbers(c.model.mlp.hidden), c.model.mlp.head_hidden,
        to_string(c.model.mlp.activation), c.model.transformer.token_dim, c.model.transformer.width,
        c.model.transformer.encoder_layers, c.model.transformer.ffn_hidden, c.model.transformer.head_hidden);
    s += fmt::format(
        "[train]\nstep_size = {}\nbeta1 = {}\nbeta2 = {}\nepsilon = {}\nepochs = {}\nbatch_size = {}\ndropout = {}\n\n",
        c.train.step_size, c.train.beta1, c.train.beta2, c.train.epsilon, c.train.epochs, c.train.batch_size,
        c.train.dropout);
    s += fmt::format(
        "[blood]\nm_samples = {}\ndistribution = {}\nform = {}\nscope = {}\nfirst_layer = {}\nlast_layer = {}\n\n",
        c.blood.m_samples, to_string(c.blood.distribution), to_string(c.blood.form), to_string(c.blood.scope),
        c.blood.first_layer, c.blood.last_layer);
    const DetectorOptions& d = c.detector_options;
    s += fmt::format(
        "[detectors]\nlist = {}\nmc_passes = {}\nmc_rate = {}\nash_fraction = {}\nreact_percentile = {}\n"
        "react_per_unit = {}\nshaped_energy = {}\ngrad_target = {}\nensemble_size = {}\n\n",
        join(detectors), d.mc_passes, d.mc_rate, d.ash_fraction, d.react_percentile, b(d.react_per_unit),
        b(d.shaped_energy), to_string(d.grad_target), c.ensemble_size);
    s += fmt::format("[analysis]\nmdl_blocks = {}\nmdl_block_size = {}\n", c.mdl_blocks, c.mdl_block_size);
    return s;
}

}  // namespace blood
