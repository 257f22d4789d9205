#pragma once

#include "trait_probe/audio.hpp"
#include "trait_probe/feature_store.hpp"
#include "trait_probe/manifest.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace trait_probe {

// Stand-in for extractor output: per-layer frames carrying a class signal
// that shrinks geometrically with depth, over noise shared by all layers.
struct PseudoSslSpec {
    std::vector<ModelId> models{ModelId::base_100h};
    double signal_decay = 0.7;   // per layer, in [0, 1]
    double age_strength = 2.0;   // norm of the age-class mean at layer 0
    double gender_strength = 1.0;
};

struct SynthSpec {
    std::string dataset_name = "synth";
    int n_speakers = 24;
    int utterances_per_speaker = 4;
    std::vector<int> ages{6, 7, 8, 9, 10, 11};  // consecutive years
    double female_fraction = 0.5;
    double test_fraction = 0.2;  // of each age group's speakers

    // f0 = f0_base - f0_slope * (age - f0_ref_age) -/+ gender_offset (male/female, age >= gender_onset_age)
    double f0_base = 300.0;
    double f0_slope = 10.0;
    int f0_ref_age = 4;
    double gender_offset = 15.0;
    int gender_onset_age = 10;
    double jitter = 0.01;  // relative per-period std

    // Formants are adult vowel formants times 1 + formant_slope * (14 - age).
    double formant_slope = 0.025;
    double noise_level = 0.01;

    double min_duration_s = 0.6;
    double max_duration_s = 1.2;
    std::uint64_t seed = 1;

    std::optional<PseudoSslSpec> ssl_sim;

    // Throws ValidationError.
    void validate() const;
    double f0_hz(int age, Gender gender) const;
    double formant_scale(int age) const;
    int n_utterances() const { return n_speakers * utterances_per_speaker; }
};

struct SpeakerPlan {
    std::string speaker_id;
    int age = 0;
    Gender gender = Gender::male;
    Split split = Split::train;
};

// Deterministic speaker table implied by the spec.
std::vector<SpeakerPlan> plan_speakers(const SynthSpec& spec);

// Renders one utterance; identical output for identical arguments.
Waveform synthesize_utterance(const SynthSpec& spec, const SpeakerPlan& speaker, double duration_s,
                              std::uint64_t seed);

// Writes audio/<utt>.wav files and manifest.tsv under `out_dir`.
DatasetManifest generate_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir, int jobs = 1);

// Frame count of a wav2vec2-style encoder (25 ms receptive field, 20 ms stride).
int ssl_frame_count(double duration_s);

// Writes one .fmx per (utterance, model, layer); returns the file count.
std::size_t generate_pseudo_ssl(const SynthSpec& spec, const DatasetManifest& manifest,
                                const std::filesystem::path& out_dir, int jobs = 1);

// Unit-norm class directions used by generate_pseudo_ssl.
struct PseudoSslDirections {
    MatrixXf age;     // n_age_classes x dim
    MatrixXf gender;  // 2 x dim
};
PseudoSslDirections pseudo_ssl_directions(const SynthSpec& spec, ModelId model);

} // namespace trait_probe
