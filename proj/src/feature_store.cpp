#include "trait_probe/feature_store.hpp"

#include "trait_probe/errors.hpp"
#include "trait_probe/util.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

namespace trait_probe {

static_assert(std::endian::native == std::endian::little, "fmx payload I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'F', 'M', 'X', '1'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, std::size_t offset, T value)
{
    std::memcpy(out.data() + offset, &value, sizeof value);
}

template <typename T>
T get(std::span<const std::uint8_t> in, std::size_t offset)
{
    T value;
    std::memcpy(&value, in.data() + offset, sizeof value);
    return value;
}

} // namespace

const ModelSpec& model_spec(ModelId id)
{
    for (const auto& spec : kModelSpecs)
        if (spec.id == id) return spec;
    throw InvariantViolation("no model spec for id " + std::to_string(static_cast<int>(id)));
}

std::string to_string(ModelId id)
{
    if (id == ModelId::none) return "none";
    return model_spec(id).name;
}

ModelId parse_model_id(const std::string& name)
{
    for (const auto& spec : kModelSpecs)
        if (name == spec.name) return spec.id;
    if (name == "none") return ModelId::none;
    throw ParseError("unknown model id '" + name + "'");
}

FeatureMatrix make_mfcc_features(std::string utterance_id, MatrixXf data)
{
    return {std::move(utterance_id), FeatureSource::mfcc, ModelId::none, -1, std::move(data)};
}

FeatureMatrix make_ssl_features(std::string utterance_id, ModelId model, int layer, MatrixXf data)
{
    return {std::move(utterance_id), FeatureSource::ssl, model, layer, std::move(data)};
}

void check_invariants(const FeatureMatrix& m)
{
    if (m.utterance_id.empty()) throw InvariantViolation("utterance id must be nonempty");
    if (m.utterance_id.size() > 0xffff) throw InvariantViolation("utterance id longer than 65535 bytes");
    if (m.frames() < 1) throw InvariantViolation("frames must be ≥ 1");
    if (m.source == FeatureSource::mfcc) {
        if (m.model != ModelId::none) throw InvariantViolation("mfcc features must have model 'none'");
        if (m.layer != -1) throw InvariantViolation("mfcc features must have layer -1");
        if (m.dims() != kMfccDims) throw InvariantViolation("mfcc features must have 26 dims, got " + std::to_string(m.dims()));
    } else {
        if (m.model == ModelId::none) throw InvariantViolation("ssl features need a model id");
        const auto& spec = model_spec(m.model);
        if (m.layer < 0 || m.layer >= spec.n_layers)
            throw InvariantViolation("layer " + std::to_string(m.layer) + " outside [0," +
                                     std::to_string(spec.n_layers - 1) + "] for " + spec.name);
        if (m.dims() != spec.dim)
            throw InvariantViolation(std::string(spec.name) + " features must have " + std::to_string(spec.dim) +
                                     " dims, got " + std::to_string(m.dims()));
    }
    if (!m.data.allFinite()) throw NonFiniteValue("feature matrix for '" + m.utterance_id + "' has non-finite values");
}

std::string feature_filename(const std::string& utterance_id, FeatureSource source, ModelId model, int layer)
{
    const std::string tag = source == FeatureSource::mfcc ? "mfcc" : to_string(model);
    return utterance_id + "." + tag + ".L" + std::to_string(layer) + ".fmx";
}

std::vector<std::uint8_t> encode_features(const FeatureMatrix& m)
{
    check_invariants(m);
    const std::size_t id_len = m.utterance_id.size();
    const std::size_t payload = static_cast<std::size_t>(m.data.size()) * sizeof(float);
    std::vector<std::uint8_t> out(kFmxHeaderBytes + id_len + payload, 0);
    std::memcpy(out.data(), kMagic, 4);
    put<std::uint16_t>(out, 4, kVersion);
    put<std::uint8_t>(out, 6, static_cast<std::uint8_t>(m.source));
    put<std::uint8_t>(out, 7, static_cast<std::uint8_t>(m.model));
    put<std::int16_t>(out, 8, static_cast<std::int16_t>(m.layer));
    put<std::uint16_t>(out, 10, static_cast<std::uint16_t>(id_len));
    put<std::uint32_t>(out, 12, static_cast<std::uint32_t>(m.frames()));
    put<std::uint32_t>(out, 16, static_cast<std::uint32_t>(m.dims()));
    std::memcpy(out.data() + kFmxHeaderBytes, m.utterance_id.data(), id_len);
    std::memcpy(out.data() + kFmxHeaderBytes + id_len, m.data.data(), payload);
    return out;
}

FeatureMatrix decode_features(std::span<const std::uint8_t> in)
{
    if (in.size() < 4 || std::memcmp(in.data(), kMagic, 4) != 0) throw BadMagic("missing FMX1 magic");
    if (in.size() < kFmxHeaderBytes)
        throw TruncatedPayload("header needs " + std::to_string(kFmxHeaderBytes) + " bytes, file has " +
                               std::to_string(in.size()));
    const auto version = get<std::uint16_t>(in, 4);
    if (version != kVersion) throw VersionMismatch("fmx version " + std::to_string(version) + ", expected 1");

    FeatureMatrix m;
    const auto source = get<std::uint8_t>(in, 6);
    if (source > 1) throw InvariantViolation("unknown feature source " + std::to_string(source));
    m.source = static_cast<FeatureSource>(source);
    m.model = static_cast<ModelId>(get<std::uint8_t>(in, 7));
    m.layer = get<std::int16_t>(in, 8);
    const std::size_t id_len = get<std::uint16_t>(in, 10);
    const std::size_t frames = get<std::uint32_t>(in, 12);
    const std::size_t dims = get<std::uint32_t>(in, 16);

    const std::size_t expected = kFmxHeaderBytes + id_len + frames * dims * sizeof(float);
    if (in.size() < expected)
        throw TruncatedPayload("expected " + std::to_string(expected) + " bytes, got " + std::to_string(in.size()));
    if (in.size() > expected)
        throw InvariantViolation("trailing bytes: expected " + std::to_string(expected) + ", got " +
                                 std::to_string(in.size()));

    m.utterance_id.assign(reinterpret_cast<const char*>(in.data() + kFmxHeaderBytes), id_len);
    m.data.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(dims));
    std::memcpy(m.data.data(), in.data() + kFmxHeaderBytes + id_len, frames * dims * sizeof(float));
    check_invariants(m);
    return m;
}

std::filesystem::path write_features(const FeatureMatrix& m, const std::filesystem::path& dir)
{
    const auto bytes = encode_features(m);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    auto path = dir / feature_filename(m.utterance_id, m.source, m.model, m.layer);
    write_binary_file(path, bytes);
    return path;
}

FeatureMatrix read_features(const std::filesystem::path& path)
{
    const auto bytes = read_binary_file(path);
    try {
        return decode_features(bytes);
    } catch (const Error& e) {
        // Keep the error type, add the file name.
        const std::string where = path.string() + ": ";
        if (dynamic_cast<const BadMagic*>(&e)) throw BadMagic(where + e.what());
        if (dynamic_cast<const VersionMismatch*>(&e)) throw VersionMismatch(where + e.what());
        if (dynamic_cast<const TruncatedPayload*>(&e)) throw TruncatedPayload(where + e.what());
        if (dynamic_cast<const NonFiniteValue*>(&e)) throw NonFiniteValue(where + e.what());
        throw InvariantViolation(where + e.what());
    }
}

std::vector<FeatureHandle> scan_store(const std::filesystem::path& dir, const DatasetManifest& manifest,
                                      const StoreFilter& filter)
{
    if (!std::filesystem::is_directory(dir)) throw IoError("feature directory " + dir.string() + " does not exist");

    std::vector<const UtteranceEntry*> wanted;
    for (const auto& e : manifest.entries)
        if (!filter.split || e.split == *filter.split) wanted.push_back(&e);
    std::sort(wanted.begin(), wanted.end(),
              [](const UtteranceEntry* a, const UtteranceEntry* b) { return a->utterance_id < b->utterance_id; });

    std::vector<FeatureHandle> handles;
    std::vector<std::string> missing;
    for (const auto* e : wanted) {
        auto path = dir / feature_filename(e->utterance_id, filter.source, filter.model, filter.layer);
        if (std::filesystem::is_regular_file(path)) handles.push_back({e->utterance_id, std::move(path), e});
        else missing.push_back(e->utterance_id);
    }
    if (!missing.empty()) {
        std::string msg = std::to_string(missing.size()) + " utterance(s) have no " +
                          feature_filename("*", filter.source, filter.model, filter.layer) + " file in " +
                          dir.string() + ":";
        for (const auto& id : missing) msg += " " + id;
        throw MissingFeature(msg);
    }
    return handles;
}

} // namespace trait_probe
