#pragma once

#include "trait_probe/cnn.hpp"
#include "trait_probe/feature_store.hpp"
#include "trait_probe/manifest.hpp"
#include "trait_probe/stats.hpp"
#include "trait_probe/train.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace trait_probe {

// One feature system to probe: the MFCC baseline or a range of SSL layers.
struct SystemSpec {
    FeatureSource source = FeatureSource::ssl;
    ModelId model = ModelId::none;
    std::vector<int> layers;  // {-1} for mfcc

    static SystemSpec mfcc() { return {FeatureSource::mfcc, ModelId::none, {-1}}; }
    static SystemSpec all_layers(ModelId model);
    std::string name() const;  // "mfcc" or the model id
};

struct PcaPlan {
    std::vector<std::pair<ModelId, int>> best_layers;
    std::vector<int> dims;  // empty: pca_sweep_dims(D)
    long long max_fit_frames = 200000;
};

struct SweepPlan {
    DatasetManifest manifest;
    std::filesystem::path features_dir;
    Task task = Task::age;
    std::vector<SystemSpec> systems;  // layer sweep cells; an mfcc entry is the baseline
    std::optional<PcaPlan> pca;
    ClassifierConfig classifier;      // in_dim / n_classes are filled per cell
    TrainConfig train;
    BootstrapSpec bootstrap;
    std::uint64_t seed = 0;
    int jobs = 1;

    // Throws ValidationError.
    void validate() const;
    bool has_baseline() const;
    // Canonical text of everything that affects results.
    std::string describe() const;
    std::string config_hash() const;
};

enum class SweepKind { layers, pca };

struct SweepRow {
    std::string dataset;
    std::string task;
    std::string model;           // "mfcc" for the baseline
    int layer = -1;
    std::optional<int> k;        // PCA dimension; empty = no PCA
    bool failed = false;
    std::string error;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool is_best = false;
    std::optional<double> paper_ref_accuracy;  // fraction in [0,1]
    std::uint64_t seed = 0;
    std::string config_hash;
};

struct BaselineTest {
    std::string model;
    int layer = -1;
    std::optional<int> k;
    std::optional<WilcoxonResult> result;
    std::string note;  // "no difference", error text, ...
};

struct SweepReport {
    SweepKind kind = SweepKind::layers;
    std::string dataset;
    std::string task;
    std::vector<SweepRow> rows;
    std::vector<BaselineTest> baseline_tests;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string config_text;
    std::vector<std::string> warnings;

    const SweepRow* best_row(const std::string& model) const;
    const SweepRow* baseline_row() const;
};

// Utterance-level data for one split, sorted by utterance id.
struct SplitData {
    LabeledSet set;
    std::vector<std::string> utterance_ids;
};
SplitData load_split(const std::filesystem::path& features_dir, const DatasetManifest& manifest,
                     const StoreFilter& filter, const TaskSpec& task);

struct CellOutcome {
    EvalReport metrics;
    std::vector<std::uint8_t> correct;  // per test utterance, sorted by id
};

// Trains one probe on `train` and scores it on `test`.
CellOutcome run_cell(const LabeledSet& train, const LabeledSet& test, const SweepPlan& plan, int n_classes);

SweepReport run_layer_sweep(const SweepPlan& plan);
SweepReport run_pca_sweep(const SweepPlan& plan);

// Marks is_best per model: argmax accuracy, ties to the lower layer / k.
void mark_best_rows(SweepReport& report);

// CSV columns:
// dataset,task,model,layer,k,accuracy,precision,recall,f1,is_best,paper_ref_accuracy,seed,config_hash
std::string format_report_csv(const SweepReport& report);
SweepReport parse_report_csv(const std::string& text);
std::string format_baseline_tests_csv(const SweepReport& report);

// Accuracy (0-100) vs layer or k, one polyline per model, 1200x675.
std::string render_svg(const SweepReport& report);

struct RenderedFiles {
    std::filesystem::path csv;
    std::filesystem::path tests_csv;
    std::vector<std::filesystem::path> svgs;
};
RenderedFiles render_report(const SweepReport& report, const std::filesystem::path& out_dir,
                            const std::string& stem = "sweep");

} // namespace trait_probe
