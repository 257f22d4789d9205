#pragma once

#include "trait_probe/cnn.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace trait_probe {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 32;
    int max_epochs = 50;
    int patience = 7;
    double validation_fraction = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
    // Canonical key=value text, used for config hashing and provenance.
    std::string describe() const;
};

// Utterance-level training data: one T_i x D matrix and one label per item.
struct LabeledSet {
    std::vector<MatrixXf> features;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

struct TrainTrace {
    std::vector<double> epoch_loss;           // mean training loss per epoch
    std::vector<double> validation_accuracy;  // per epoch
    int best_epoch = -1;                      // 0-based
};

struct TrainResult {
    Classifier model;
    TrainTrace trace;
};

// Deterministic for a fixed seed: the validation carve-out, the shuffle
// order and the initialization all derive from TrainConfig::seed. Returns
// the model of the epoch with the best validation accuracy (lower
// validation loss breaks ties). Throws DegenerateData, DivergedLoss,
// ShapeMismatch.
TrainResult train(const LabeledSet& data, const ClassifierConfig& config, const TrainConfig& train_config);

double accuracy(const Classifier& model, const LabeledSet& data);

void save_classifier(const Classifier& model, const std::filesystem::path& path);
Classifier load_classifier(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_classifier(const Classifier& model);
Classifier decode_classifier(std::span<const std::uint8_t> bytes);

} // namespace trait_probe
