#pragma once

#include "trait_probe/manifest.hpp"

#include <optional>
#include <span>
#include <string>

namespace trait_probe {

// Best rows published for the two children's-speech corpora, used only to
// annotate reports.
struct ReferenceResult {
    const char* dataset;  // "PFSTAR" or "CMU Kids"
    Task task;
    bool reduced;         // PCA-reduced feature table
    const char* model;    // "mfcc" for the baseline
    int layer_or_k;       // best layer, reduced dimension, or 26 for mfcc
    double accuracy_pct;
    double precision;
    double recall;
    double f1;
};

std::span<const ReferenceResult> reference_results();

// Case/punctuation-insensitive corpus match ("pfstar", "PF-STAR", "cmu_kids", ...).
std::optional<std::string> canonical_reference_dataset(const std::string& name);

std::optional<ReferenceResult> find_reference(const std::string& dataset, Task task, bool reduced,
                                              const std::string& model);

} // namespace trait_probe
