#pragma once

#include "trait_probe/manifest.hpp"
#include "trait_probe/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace trait_probe {

enum class FeatureSource : std::uint8_t { mfcc = 0, ssl = 1 };

enum class ModelId : std::uint8_t {
    base_100h = 0,
    base_960h = 1,
    large_960h_lv60 = 2,
    large_960h_lv60_self = 3,
    none = 255,
};

struct ModelSpec {
    ModelId id;
    const char* name;
    int n_layers;
    int dim;
    int params_m;
    const char* pretrain_hours;
    const char* finetune_hours;
};

// The four pretrained encoders probed by the sweeps.
inline constexpr std::array<ModelSpec, 4> kModelSpecs{{
    {ModelId::base_100h, "base-100h", 13, 768, 95, "960 h", "100 h"},
    {ModelId::base_960h, "base-960h", 13, 768, 95, "960 h", "960 h"},
    {ModelId::large_960h_lv60, "large-960h-lv60", 25, 1024, 317, "60K h", "960 h"},
    {ModelId::large_960h_lv60_self, "large-960h-lv60-self", 25, 1024, 317, "60K h", "960 h"},
}};

inline constexpr int kMfccDims = 26;

const ModelSpec& model_spec(ModelId id);
std::string to_string(ModelId id);  // "mfcc"-free name; "none" for ModelId::none
ModelId parse_model_id(const std::string& name);

struct FeatureMatrix {
    std::string utterance_id;
    FeatureSource source = FeatureSource::mfcc;
    ModelId model = ModelId::none;
    int layer = -1;
    MatrixXf data;  // frames x dims

    int frames() const { return static_cast<int>(data.rows()); }
    int dims() const { return static_cast<int>(data.cols()); }
};

FeatureMatrix make_mfcc_features(std::string utterance_id, MatrixXf data);
FeatureMatrix make_ssl_features(std::string utterance_id, ModelId model, int layer, MatrixXf data);

// Throws InvariantViolation / NonFiniteValue.
void check_invariants(const FeatureMatrix& m);

inline constexpr std::size_t kFmxHeaderBytes = 64;

// `<utt_id>.<model_id|mfcc>.L<layer>.fmx`
std::string feature_filename(const std::string& utterance_id, FeatureSource source, ModelId model, int layer);

std::vector<std::uint8_t> encode_features(const FeatureMatrix& m);
FeatureMatrix decode_features(std::span<const std::uint8_t> bytes);

std::filesystem::path write_features(const FeatureMatrix& m, const std::filesystem::path& dir);
FeatureMatrix read_features(const std::filesystem::path& path);

struct StoreFilter {
    FeatureSource source = FeatureSource::ssl;
    ModelId model = ModelId::none;
    int layer = -1;
    std::optional<Split> split;  // all manifest entries when empty

    static StoreFilter mfcc(std::optional<Split> split = std::nullopt)
    {
        return {FeatureSource::mfcc, ModelId::none, -1, split};
    }
    static StoreFilter ssl(ModelId model, int layer, std::optional<Split> split = std::nullopt)
    {
        return {FeatureSource::ssl, model, layer, split};
    }
};

struct FeatureHandle {
    std::string utterance_id;
    std::filesystem::path path;
    const UtteranceEntry* entry = nullptr;

    FeatureMatrix load() const { return read_features(path); }
};

// Handles for the manifest's utterances matching the filter, sorted byte-wise
// by utterance id. Throws MissingFeature listing every absent id.
std::vector<FeatureHandle> scan_store(const std::filesystem::path& dir, const DatasetManifest& manifest,
                                      const StoreFilter& filter);

} // namespace trait_probe
