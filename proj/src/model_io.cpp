#include "blood/model_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string_view>

#include "blood/errors.hpp"

namespace blood {

namespace {

constexpr std::string_view kMagicStem = "BLOODMDL";
constexpr char kFormatVersion = '1';

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    void need(std::size_t n, const char* what) const
    {
        if (bytes_.size() - pos_ < n) {
            throw CorruptFileError(std::string("model file truncated while reading ") + what);
        }
    }
    std::uint64_t u64(const char* what)
    {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::uint32_t u32(const char* what)
    {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::string text(std::size_t n, const char* what)
    {
        need(n, what);
        std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                      bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

std::string join_shape(const Shape& s)
{
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(s[i]);
    }
    return out;
}

std::size_t parse_size(const std::string& value, const std::string& key)
{
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw CorruptFileError("metadata key '" + key + "' has non-integer value '" + value + "'");
    }
}

Shape parse_shape(const std::string& value, const std::string& key)
{
    Shape s;
    std::stringstream ss(value);
    std::string part;
    while (std::getline(ss, part, ',')) s.push_back(parse_size(part, key));
    if (s.empty()) throw CorruptFileError("metadata key '" + key + "' holds an empty shape");
    return s;
}

class Metadata {
public:
    explicit Metadata(const std::string& text)
    {
        std::stringstream ss(text);
        std::string line;
        while (std::getline(ss, line)) {
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw CorruptFileError("metadata line without '=': " + line);
            entries_[line.substr(0, eq)] = line.substr(eq + 1);
        }
    }
    const std::string& at(const std::string& key) const
    {
        auto it = entries_.find(key);
        if (it == entries_.end()) throw CorruptFileError("metadata key '" + key + "' is missing");
        return it->second;
    }
    std::size_t size(const std::string& key) const { return parse_size(at(key), key); }

private:
    std::map<std::string, std::string> entries_;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const Model& model)
{
    model.validate();
    std::string meta;
    auto line = [&meta](const std::string& key, const std::string& value) { meta += key + '=' + value + '\n'; };
    line("architecture", std::string(to_string(model.architecture)));
    line("num_classes", std::to_string(model.num_classes));
    line("pooled_slot", std::to_string(model.pooled_slot));
    line("layers", std::to_string(model.depth()));
    for (std::size_t i = 0; i < model.depth(); ++i) {
        const Layer& l = model.layers[i];
        const std::string p = "layer." + std::to_string(i) + '.';
        line(p + "kind", std::string(to_string(l.kind())));
        line(p + "activation", std::string(to_string(l.activation())));
        line(p + "input", join_shape(l.input_shape()));
        line(p + "output", join_shape(l.output_shape()));
        line(p + "hidden", std::to_string(l.hidden()));
        line(p + "pooled_slot", std::to_string(l.pooled_slot()));
    }

    std::vector<std::uint8_t> out(kMagicStem.begin(), kMagicStem.end());
    out.push_back(static_cast<std::uint8_t>(kFormatVersion));
    put_u64(out, meta.size());
    out.insert(out.end(), meta.begin(), meta.end());
    for (const Layer& l : model.layers) {
        for (const Parameter& param : l.parameters()) {
            const Shape& s = param.value.shape();
            put_u32(out, static_cast<std::uint32_t>(s.size()));
            for (std::size_t d : s) put_u64(out, d);
            for (double v : param.value.flat()) put_u64(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    return out;
}

Model deserialize_model(const std::vector<std::uint8_t>& bytes)
{
    Reader in(bytes);
    const std::string magic = in.text(kMagicStem.size() + 1, "magic");
    if (std::string_view(magic).substr(0, kMagicStem.size()) != kMagicStem) {
        throw CorruptFileError("not a model file (bad magic)");
    }
    if (magic.back() != kFormatVersion) {
        throw FormatVersionError(std::string("model format version ") + magic.back() + " is not supported (expected " +
                                 kFormatVersion + ")");
    }
    const std::uint64_t meta_len = in.u64("metadata length");
    const Metadata meta(in.text(meta_len, "metadata"));

    Model model;
    try {
        model.architecture = parse_architecture(meta.at("architecture"));
    } catch (const InvalidArgument& e) {
        throw CorruptFileError(e.what());
    }
    model.num_classes = meta.size("num_classes");
    model.pooled_slot = meta.size("pooled_slot");
    const std::size_t depth = meta.size("layers");
    for (std::size_t i = 0; i < depth; ++i) {
        const std::string p = "layer." + std::to_string(i) + '.';
        LayerKind kind;
        Activation act;
        try {
            kind = parse_layer_kind(meta.at(p + "kind"));
            act = parse_activation(meta.at(p + "activation"));
        } catch (const InvalidArgument& e) {
            throw CorruptFileError(e.what());
        }
        model.layers.push_back(make_layer_from_metadata(kind, act, parse_shape(meta.at(p + "input"), p + "input"),
                                                        parse_shape(meta.at(p + "output"), p + "output"),
                                                        meta.size(p + "hidden"), meta.size(p + "pooled_slot")));
    }
    for (Layer& l : model.layers) {
        for (Parameter& param : l.mutable_parameters()) {
            const std::uint32_t rank = in.u32("tensor rank");
            Shape s(rank);
            for (auto& d : s) d = static_cast<std::size_t>(in.u64("tensor shape"));
            if (s != param.value.shape()) {
                throw CorruptFileError("parameter " + param.name + " of " + l.describe() + " has shape " +
                                       shape_string(s) + ", expected " + shape_string(param.value.shape()));
            }
            for (double& v : param.value.flat()) v = std::bit_cast<double>(in.u64("tensor values"));
        }
    }
    if (!in.done()) throw CorruptFileError("trailing bytes after the last parameter tensor");
    try {
        model.validate();
    } catch (const DimensionError& e) {
        throw CorruptFileError(e.what());
    }
    return model;
}

void save_model(const Model& model, const std::filesystem::path& path)
{
    const auto bytes = serialize_model(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

Model load_model(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

}  // namespace blood
