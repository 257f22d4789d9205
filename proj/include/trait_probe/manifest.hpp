#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace trait_probe {

enum class Gender { male, female };
enum class Split { train, test };

const char* to_string(Gender g);
const char* to_string(Split s);

struct AgeRange {
    int min_years = 0;
    int max_years = 0;

    bool contains(int age) const { return age >= min_years && age <= max_years; }
};

struct UtteranceEntry {
    std::string utterance_id;
    std::string speaker_id;
    std::string audio_path;  // relative to the manifest's directory
    int age_class = 0;       // years
    Gender gender = Gender::male;
    Split split = Split::train;
    double duration_s = 0.0;
};

struct DatasetManifest {
    std::string dataset_name;
    AgeRange age_range;
    bool speaker_disjoint = false;
    std::vector<UtteranceEntry> entries;
    // Directory audio paths are resolved against; empty for in-memory manifests.
    std::filesystem::path base_dir;

    std::vector<const UtteranceEntry*> split_entries(Split s) const;
    std::filesystem::path resolve_audio(const UtteranceEntry& e) const;
};

enum class Task { age, gender };

const char* to_string(Task t);
Task parse_task(const std::string& s);

struct TaskSpec {
    Task task = Task::age;
    int n_classes = 0;
    std::vector<std::string> class_labels;

    // Maps an entry to its class index in [0, n_classes).
    int label_of(const UtteranceEntry& e, const AgeRange& range) const;
};

TaskSpec make_task_spec(Task task, const AgeRange& range);

// Throws ValidationError naming the offending record.
void validate(const DatasetManifest& manifest);

DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(const std::string& text);
std::string format_manifest(const DatasetManifest& manifest);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct SplitSummary {
    int utterances = 0;
    int male_speakers = 0;
    int female_speakers = 0;
    double total_duration_s = 0.0;

    bool operator==(const SplitSummary&) const = default;
};

struct SummaryTable {
    SplitSummary train;
    SplitSummary test;

    bool operator==(const SummaryTable&) const = default;
};

SummaryTable summarize(const DatasetManifest& manifest);

} // namespace trait_probe
