#include "blood/dataset.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "blood/errors.hpp"
#include "blood/rng.hpp"

namespace blood {

std::string_view to_string(Split s)
{
    switch (s) {
    case Split::Train: return "train";
    case Split::TestId: return "test-id";
    case Split::Ood: return "ood";
    }
    return "?";
}

Split parse_split(std::string_view name)
{
    if (name == "train") return Split::Train;
    if (name == "test-id") return Split::TestId;
    if (name == "ood") return Split::Ood;
    throw InvalidArgument("unknown split '" + std::string(name) + "'");
}

void Dataset::push(Tensor xi, int yi, Split s)
{
    x.push_back(std::move(xi));
    y.push_back(yi);
    split.push_back(s);
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const
{
    Dataset out;
    out.num_classes = num_classes;
    out.dim = dim;
    out.metadata = metadata;
    for (std::size_t i : indices) out.push(x.at(i), y.at(i), split.at(i));
    return out;
}

Dataset Dataset::only(Split s) const
{
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < size(); ++i)
        if (split[i] == s) idx.push_back(i);
    return subset(idx);
}

std::size_t Dataset::count(Split s) const { return static_cast<std::size_t>(std::count(split.begin(), split.end(), s)); }

void Dataset::validate() const
{
    if (y.size() != x.size() || split.size() != x.size()) throw DimensionError("dataset columns differ in length");
    for (std::size_t i = 0; i < size(); ++i) {
        if (x[i].shape() != Shape{dim}) {
            throw DimensionError("instance " + std::to_string(i) + " has shape " + shape_string(x[i].shape()) +
                                 ", expected (" + std::to_string(dim) + ")");
        }
        const bool unlabeled_ood = split[i] == Split::Ood && y[i] == kNoLabel;
        if (!unlabeled_ood && (y[i] < 0 || static_cast<std::size_t>(y[i]) >= num_classes)) {
            throw InvalidArgument("instance " + std::to_string(i) + " has label " + std::to_string(y[i]) +
                                  " outside [0, " + std::to_string(num_classes) + ")");
        }
    }
}

std::vector<Tensor> simplex_means(std::size_t classes, std::size_t dim, double separation)
{
    if (classes < 2) throw InvalidArgument("need at least two classes");
    if (dim + 1 < classes) {
        throw InvalidArgument("a " + std::to_string(classes) + "-class simplex needs dimension >= " +
                              std::to_string(classes - 1));
    }
    // Vertex c of the centered simplex is e_c - 1/C; its coordinates in the
    // Helmert basis of the sum-zero subspace are placed in dims 0..C-2.
    // Vertices e_c are sqrt(2) apart, hence the separation / sqrt(2) scale.
    const double scale = separation / std::sqrt(2.0);
    std::vector<Tensor> means;
    for (std::size_t c = 0; c < classes; ++c) {
        Tensor m({dim});
        for (std::size_t k = 1; k < classes; ++k) {
            // Helmert row k: (1, ..., 1, -k, 0, ...) / sqrt(k (k + 1)) with k ones.
            const double norm = std::sqrt(static_cast<double>(k * (k + 1)));
            double coord = 0.0;
            if (c < k) coord = 1.0 / norm;
            else if (c == k) coord = -static_cast<double>(k) / norm;
            m[k - 1] = scale * coord;
        }
        means.push_back(std::move(m));
    }
    return means;
}

namespace {

std::string format_double(double v) { return fmt::format("{}", v); }

double metadata_double(const Dataset& d, const std::string& key)
{
    auto it = d.metadata.find(key);
    if (it == d.metadata.end()) throw InvalidArgument("dataset metadata lacks '" + key + "'");
    return std::stod(it->second);
}

/// Uniform unit vector supported on coordinates first..dim-1.
Tensor unit_direction(std::size_t dim, CounterRng& rng, std::size_t first = 0)
{
    Tensor u({dim});
    double n = 0.0;
    while (n < 1e-12) {
        for (std::size_t j = first; j < dim; ++j) u[j] = rng.normal();
        n = norm(u.flat());
    }
    u *= 1.0 / n;
    return u;
}

}  // namespace

Dataset make_gaussian_classes(std::size_t classes, std::size_t dim, std::size_t n_per_class, double separation,
                              std::uint64_t seed)
{
    if (!(separation >= 0.0)) throw InvalidArgument("separation must be nonnegative");
    const auto means = simplex_means(classes, dim, separation);
    Dataset d;
    d.num_classes = classes;
    d.dim = dim;
    d.metadata = {{"kind", "gaussian-classes"},
                  {"classes", std::to_string(classes)},
                  {"separation", format_double(separation)},
                  {"n_per_class", std::to_string(n_per_class)},
                  {"seed", std::to_string(seed)}};
    CounterRng rng(seed, RngPurpose::Dataset);
    for (std::size_t i = 0; i < n_per_class; ++i) {
        for (std::size_t c = 0; c < classes; ++c) {
            Tensor xi = means[c];
            for (double& v : xi.flat()) v += rng.normal();
            d.push(std::move(xi), static_cast<int>(c), Split::Train);
        }
    }
    return d;
}

Dataset split_train_test(const Dataset& data, double test_fraction, std::uint64_t seed)
{
    if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) throw InvalidArgument("test fraction must lie in [0, 1]");
    Dataset out = data;
    CounterRng rng(seed, RngPurpose::Subsample, 1);
    for (std::size_t c = 0; c < data.num_classes; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < data.size(); ++i)
            if (data.y[i] == static_cast<int>(c) && data.split[i] == Split::Train) members.push_back(i);
        shuffle(members, rng);
        const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
        for (std::size_t k = 0; k < n_test; ++k) out.split[members[k]] = Split::TestId;
    }
    return out;
}

Dataset make_far_ood(const Dataset& id, double degree, std::uint64_t seed, std::size_t n)
{
    if (!(degree >= 0.0)) throw InvalidArgument("shift degree must be nonnegative");
    if (n == 0) n = id.count(Split::TestId) > 0 ? id.count(Split::TestId) : id.size();
    const auto means = simplex_means(id.num_classes, id.dim, metadata_double(id, "separation"));
    Dataset d;
    d.num_classes = id.num_classes;
    d.dim = id.dim;
    d.metadata = id.metadata;
    d.metadata["kind"] = "far-ood";
    d.metadata["degree"] = format_double(degree);
    d.metadata["ood_seed"] = std::to_string(seed);
    CounterRng dir_rng(seed, RngPurpose::Dataset, 1);
    // The class means live in the first C-1 coordinates. Shifting inside them
    // would move every OOD point toward one class.
    const std::size_t first = id.num_classes - 1 < id.dim ? id.num_classes - 1 : 0;
    const Tensor u = unit_direction(id.dim, dir_rng, first);
    const double sd = std::sqrt(1.0 + std::min(degree, 1.0));
    CounterRng rng(seed, RngPurpose::Dataset, 2);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor xi = means[rng.below(id.num_classes)];
        xi.axpy(degree, u);
        for (double& v : xi.flat()) v += sd * rng.normal();
        d.push(std::move(xi), kNoLabel, Split::Ood);
    }
    return d;
}

std::pair<Dataset, Dataset> make_semantic_split(const Dataset& data)
{
    if (data.num_classes < 4) throw InvalidArgument("semantic split needs at least 4 classes");
    Dataset id, ood;
    id.num_classes = (data.num_classes + 1) / 2;
    ood.num_classes = id.num_classes;
    id.dim = ood.dim = data.dim;
    id.metadata = ood.metadata = data.metadata;
    id.metadata["kind"] = "semantic-id";
    ood.metadata["kind"] = "semantic-ood";
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.y[i] < 0) continue;
        if (data.y[i] % 2 == 0) id.push(data.x[i], data.y[i] / 2, data.split[i]);
        else ood.push(data.x[i], kNoLabel, Split::Ood);
    }
    return {std::move(id), std::move(ood)};
}

Dataset make_background_shift(const Dataset& id, double degree, std::uint64_t seed)
{
    if (!(degree >= 0.0)) throw InvalidArgument("shift degree must be nonnegative");
    const std::size_t first = id.num_classes - 1;
    const std::size_t k = id.dim > first ? id.dim - first : 0;
    CounterRng rng(seed, RngPurpose::Dataset, 3);
    std::vector<double> r(k * k);
    for (double& v : r) v = rng.normal() / std::sqrt(static_cast<double>(std::max<std::size_t>(k, 1)));
    std::vector<double> t(k);
    for (double& v : t) v = rng.normal();

    Dataset d = id;
    d.metadata["kind"] = "background-shift";
    d.metadata["degree"] = format_double(degree);
    d.metadata["ood_seed"] = std::to_string(seed);
    for (std::size_t i = 0; i < d.size(); ++i) {
        d.split[i] = Split::Ood;
        if (degree == 0.0) continue;
        const Tensor& src = id.x[i];
        for (std::size_t a = 0; a < k; ++a) {
            double acc = src[first + a] + degree * t[a];
            for (std::size_t b = 0; b < k; ++b) acc += degree * r[a * k + b] * src[first + b];
            d.x[i][first + a] = acc;
        }
    }
    return d;
}

Dataset simplify_to_two_classes(const Dataset& data, int class_a, int class_b)
{
    if (class_a == class_b) throw InvalidArgument("the two retained classes must differ");
    for (int c : {class_a, class_b}) {
        if (c < 0 || static_cast<std::size_t>(c) >= data.num_classes) {
            throw InvalidArgument("class " + std::to_string(c) + " is not in the dataset");
        }
    }
    Dataset out;
    out.num_classes = 2;
    out.dim = data.dim;
    out.metadata = data.metadata;
    out.metadata["two_class"] = std::to_string(class_a) + "," + std::to_string(class_b);
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.y[i] == class_a) out.push(data.x[i], 0, data.split[i]);
        else if (data.y[i] == class_b) out.push(data.x[i], 1, data.split[i]);
    }
    return out;
}

Dataset subsample_ood_to_test_size(const Dataset& ood, std::size_t target, std::uint64_t seed)
{
    if (ood.size() < target) {
        throw InvalidArgument("cannot subsample " + std::to_string(target) + " instances from " +
                              std::to_string(ood.size()));
    }
    std::vector<std::size_t> idx(ood.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    CounterRng rng(seed, RngPurpose::Subsample);
    shuffle(idx, rng);
    idx.resize(target);
    Dataset out = ood.subset(idx);
    if (target == 0) out.metadata["warning"] = "empty subsample";
    return out;
}

void write_csv(const Dataset& data, std::ostream& out)
{
    data.validate();
    out << "# blood-dataset v1\n";
    out << "# num_classes=" << data.num_classes << '\n';
    out << "# dim=" << data.dim << '\n';
    for (const auto& [k, v] : data.metadata) {
        if (k == "num_classes" || k == "dim") continue;
        out << "# " << k << '=' << v << '\n';
    }
    out << "split,label";
    for (std::size_t j = 0; j < data.dim; ++j) out << ",f" << j;
    out << '\n';
    std::string line;
    for (std::size_t i = 0; i < data.size(); ++i) {
        line = fmt::format("{},{}", to_string(data.split[i]), data.y[i]);
        for (double v : data.x[i].flat()) fmt::format_to(std::back_inserter(line), ",{}", v);
        out << line << '\n';
    }
}

namespace {

[[noreturn]] void parse_error(std::size_t lineno, const std::string& what)
{
    throw CorruptFileError("line " + std::to_string(lineno) + ": " + what);
}

std::size_t meta_size(const std::map<std::string, std::string>& meta, const std::string& key)
{
    auto it = meta.find(key);
    if (it == meta.end()) throw CorruptFileError("dataset header lacks '" + key + "'");
    std::size_t v = 0;
    const auto& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw CorruptFileError("bad header value " + key + "=" + s);
    return v;
}

}  // namespace

Dataset read_csv(std::istream& in)
{
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw CorruptFileError("empty dataset file");
    ++lineno;
    if (line != "# blood-dataset v1") parse_error(lineno, "missing '# blood-dataset v1' header");

    std::map<std::string, std::string> meta;
    bool have_columns = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.rfind("# ", 0) == 0) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) parse_error(lineno, "metadata line without '='");
            meta[line.substr(2, eq - 2)] = line.substr(eq + 1);
            continue;
        }
        if (line.rfind("split,label", 0) != 0) parse_error(lineno, "expected the column header");
        have_columns = true;
        break;
    }
    if (!have_columns) throw CorruptFileError("empty dataset file");

    Dataset d;
    d.num_classes = meta_size(meta, "num_classes");
    d.dim = meta_size(meta, "dim");
    meta.erase("num_classes");
    meta.erase("dim");
    d.metadata = std::move(meta);

    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string_view> fields;
        std::string_view rest(line);
        for (;;) {
            const auto comma = rest.find(',');
            fields.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (fields.size() != d.dim + 2) {
            parse_error(lineno, "expected " + std::to_string(d.dim + 2) + " fields, found " +
                                    std::to_string(fields.size()));
        }
        Split s;
        try {
            s = parse_split(fields[0]);
        } catch (const InvalidArgument& e) {
            parse_error(lineno, e.what());
        }
        int label = 0;
        auto [lp, lec] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), label);
        if (lec != std::errc() || lp != fields[1].data() + fields[1].size()) parse_error(lineno, "bad label");
        Tensor xi({d.dim});
        for (std::size_t j = 0; j < d.dim; ++j) {
            const auto f = fields[j + 2];
            auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), xi[j]);
            if (ec != std::errc() || p != f.data() + f.size()) {
                parse_error(lineno, "bad value '" + std::string(f) + "' in column f" + std::to_string(j));
            }
        }
        d.push(std::move(xi), label, s);
    }
    try {
        d.validate();
    } catch (const Error& e) {
        throw CorruptFileError(e.what());
    }
    return d;
}

void save_csv(const Dataset& data, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_csv(data, out);
    if (!out) throw IoError("failed writing " + path.string());
}

Dataset load_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return read_csv(in);
}

}  // namespace blood
