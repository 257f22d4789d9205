#include "trait_probe/reference_results.hpp"

#include <array>
#include <cctype>

namespace trait_probe {

namespace {

constexpr std::array<ReferenceResult, 36> kResults{{
    // PFSTAR, best layers
    {"PFSTAR", Task::age, false, "mfcc", 26, 80.92, 0.82, 0.81, 0.80},
    {"PFSTAR", Task::age, false, "base-100h", 6, 84.25, 0.86, 0.84, 0.83},
    {"PFSTAR", Task::age, false, "base-960h", 5, 81.89, 0.84, 0.82, 0.81},
    {"PFSTAR", Task::age, false, "large-960h-lv60", 7, 83.59, 0.84, 0.83, 0.83},
    {"PFSTAR", Task::age, false, "large-960h-lv60-self", 7, 83.46, 0.85, 0.84, 0.83},
    {"PFSTAR", Task::gender, false, "mfcc", 26, 87.63, 0.90, 0.88, 0.88},
    {"PFSTAR", Task::gender, false, "base-100h", 4, 93.02, 0.93, 0.93, 0.92},
    {"PFSTAR", Task::gender, false, "base-960h", 2, 94.57, 0.96, 0.95, 0.95},
    {"PFSTAR", Task::gender, false, "large-960h-lv60", 1, 91.45, 0.93, 0.92, 0.90},
    {"PFSTAR", Task::gender, false, "large-960h-lv60-self", 2, 94.57, 0.95, 0.94, 0.94},
    // CMU Kids, best layers
    {"CMU Kids", Task::age, false, "mfcc", 26, 89.97, 0.90, 0.89, 0.89},
    {"CMU Kids", Task::age, false, "base-100h", 1, 92.13, 0.92, 0.92, 0.92},
    {"CMU Kids", Task::age, false, "base-960h", 0, 91.63, 0.90, 0.90, 0.90},
    {"CMU Kids", Task::age, false, "large-960h-lv60", 1, 96.84, 0.97, 0.97, 0.97},
    {"CMU Kids", Task::age, false, "large-960h-lv60-self", 1, 92.37, 0.92, 0.92, 0.92},
    {"CMU Kids", Task::gender, false, "mfcc", 26, 88.41, 0.89, 0.88, 0.88},
    {"CMU Kids", Task::gender, false, "base-100h", 2, 93.78, 0.94, 0.94, 0.94},
    {"CMU Kids", Task::gender, false, "base-960h", 1, 94.96, 0.95, 0.95, 0.95},
    {"CMU Kids", Task::gender, false, "large-960h-lv60", 2, 96.68, 0.97, 0.97, 0.97},
    {"CMU Kids", Task::gender, false, "large-960h-lv60-self", 2, 96.53, 0.97, 0.97, 0.97},
    // PFSTAR, PCA-reduced best layers
    {"PFSTAR", Task::age, true, "base-100h", 320, 86.05, 0.87, 0.86, 0.86},
    {"PFSTAR", Task::age, true, "base-960h", 384, 83.72, 0.85, 0.84, 0.82},
    {"PFSTAR", Task::age, true, "large-960h-lv60", 256, 84.8, 0.85, 0.84, 0.83},
    {"PFSTAR", Task::age, true, "large-960h-lv60-self", 384, 85.27, 0.87, 0.85, 0.84},
    {"PFSTAR", Task::gender, true, "base-100h", 64, 93.80, 0.94, 0.93, 0.94},
    {"PFSTAR", Task::gender, true, "base-960h", 384, 93.80, 0.95, 0.94, 0.94},
    {"PFSTAR", Task::gender, true, "large-960h-lv60", 320, 92.75, 0.94, 0.92, 0.91},
    {"PFSTAR", Task::gender, true, "large-960h-lv60-self", 384, 95.00, 0.95, 0.95, 0.95},
    // CMU Kids, PCA-reduced best layers
    {"CMU Kids", Task::age, true, "base-100h", 192, 93.18, 0.93, 0.93, 0.93},
    {"CMU Kids", Task::age, true, "base-960h", 192, 93.43, 0.93, 0.93, 0.93},
    {"CMU Kids", Task::age, true, "large-960h-lv60", 256, 97.14, 0.97, 0.97, 0.97},
    {"CMU Kids", Task::age, true, "large-960h-lv60-self", 128, 96.84, 0.97, 0.97, 0.97},
    {"CMU Kids", Task::gender, true, "base-100h", 64, 96.22, 0.96, 0.96, 0.96},
    {"CMU Kids", Task::gender, true, "base-960h", 256, 96.71, 0.97, 0.97, 0.97},
    {"CMU Kids", Task::gender, true, "large-960h-lv60", 64, 98.20, 0.98, 0.98, 0.98},
    {"CMU Kids", Task::gender, true, "large-960h-lv60-self", 384, 97.95, 0.98, 0.98, 0.98},
}};

std::string squash(const std::string& s)
{
    std::string out;
    for (unsigned char c : s)
        if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
    return out;
}

} // namespace

std::span<const ReferenceResult> reference_results() { return kResults; }

std::optional<std::string> canonical_reference_dataset(const std::string& name)
{
    const auto key = squash(name);
    if (key == "pfstar") return "PFSTAR";
    if (key == "cmukids" || key == "cmu") return "CMU Kids";
    return std::nullopt;
}

std::optional<ReferenceResult> find_reference(const std::string& dataset, Task task, bool reduced,
                                              const std::string& model)
{
    const auto canon = canonical_reference_dataset(dataset);
    if (!canon) return std::nullopt;
    for (const auto& r : reference_results())
        if (*canon == r.dataset && r.task == task && r.model == model && (r.reduced == reduced || model == "mfcc"))
            return r;
    return std::nullopt;
}

} // namespace trait_probe
