#include "trait_probe/synth.hpp"

#include "trait_probe/errors.hpp"
#include "trait_probe/util.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace trait_probe {

namespace {

// Adult vowel formants (Hz) for /a/, /i/, /u/.
constexpr std::array<std::array<double, 3>, 3> kVowelFormants{{
    {730.0, 1090.0, 2440.0},
    {270.0, 2290.0, 3010.0},
    {300.0, 870.0, 2240.0},
}};
constexpr std::array<double, 3> kBandwidths{80.0, 100.0, 120.0};

bool takes_slot(int index, double fraction)
{
    return std::floor((index + 1) * fraction) > std::floor(index * fraction);
}

std::string padded(int value, int width)
{
    std::string s = std::to_string(value);
    return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

} // namespace

void SynthSpec::validate() const
{
    if (n_speakers <= 0 || utterances_per_speaker <= 0) throw ValidationError("synthetic corpus has zero utterances");
    if (ages.size() < 2) throw ValidationError("need at least two age classes");
    for (std::size_t i = 1; i < ages.size(); ++i)
        if (ages[i] != ages[i - 1] + 1) throw ValidationError("age classes must be consecutive years");
    if (!(female_fraction >= 0 && female_fraction <= 1)) throw ValidationError("female_fraction must be in [0,1]");
    if (!(test_fraction >= 0 && test_fraction < 1)) throw ValidationError("test_fraction must be in [0,1)");
    for (int age : ages)
        for (Gender g : {Gender::male, Gender::female})
            if (!(f0_hz(age, g) > 0)) throw ValidationError("f0 law gives non-positive pitch at age " + std::to_string(age));
    if (!(min_duration_s > 0.03) || max_duration_s < min_duration_s)
        throw ValidationError("duration range must satisfy 0.03 < min <= max");
    if (!(jitter >= 0 && jitter < 0.2)) throw ValidationError("jitter must be in [0, 0.2)");
    if (ssl_sim) {
        if (!(ssl_sim->signal_decay >= 0 && ssl_sim->signal_decay <= 1)) throw ValidationError("signal_decay must be in [0,1]");
        if (ssl_sim->models.empty()) throw ValidationError("ssl_sim needs at least one model");
        for (auto m : ssl_sim->models)
            if (m == ModelId::none) throw ValidationError("ssl_sim model cannot be 'none'");
    }
}

double SynthSpec::f0_hz(int age, Gender gender) const
{
    double f0 = f0_base - f0_slope * (age - f0_ref_age);
    if (age >= gender_onset_age) f0 += gender == Gender::male ? -gender_offset : gender_offset;
    return f0;
}

double SynthSpec::formant_scale(int age) const { return 1.0 + formant_slope * (14 - age); }

std::vector<SpeakerPlan> plan_speakers(const SynthSpec& spec)
{
    std::vector<SpeakerPlan> out;
    const int n_ages = static_cast<int>(spec.ages.size());
    for (int s = 0; s < spec.n_speakers; ++s) {
        const int within = s / n_ages;  // index of this speaker inside its age group
        SpeakerPlan p;
        p.speaker_id = "spk" + padded(s, 4);
        p.age = spec.ages[static_cast<std::size_t>(s % n_ages)];
        p.gender = takes_slot(within, spec.female_fraction) ? Gender::female : Gender::male;
        // Genders alternate within an age group, so its first speakers give a
        // mixed test side.
        const int group = (spec.n_speakers - s % n_ages + n_ages - 1) / n_ages;
        const auto n_test = static_cast<int>(std::lround(spec.test_fraction * group));
        p.split = within < n_test ? Split::test : Split::train;
        out.push_back(std::move(p));
    }
    return out;
}

Waveform synthesize_utterance(const SynthSpec& spec, const SpeakerPlan& speaker, double duration_s, std::uint64_t seed)
{
    constexpr double sr = kTargetSampleRate;
    Rng rng(seed);
    const auto n = static_cast<std::size_t>(std::llround(duration_s * sr));
    std::vector<double> source(n, 0.0);

    const double f0 = spec.f0_hz(speaker.age, speaker.gender);
    const double period = sr / f0;
    for (double t = rng.uniform(0.0, period); t < static_cast<double>(n);) {
        source[static_cast<std::size_t>(t)] += 1.0;
        t += period * (1.0 + spec.jitter * std::clamp(rng.normal(), -3.0, 3.0));
    }

    const auto& vowel = kVowelFormants[rng.below(kVowelFormants.size())];
    const double scale = spec.formant_scale(speaker.age);
    std::vector<double> signal = source;
    for (std::size_t f = 0; f < 3; ++f) {
        const double freq = std::min(vowel[f] * scale, 0.45 * sr);
        const double r = std::exp(-std::numbers::pi * kBandwidths[f] * scale / sr);
        const double a1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq / sr);
        const double a2 = -r * r;
        double y1 = 0.0, y2 = 0.0;
        for (auto& x : signal) {
            const double y = (1.0 - r) * x + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            x = y;
        }
    }

    double peak = 0.0;
    for (double v : signal) peak = std::max(peak, std::abs(v));
    const double gain = peak > 0 ? 0.5 / peak : 0.0;
    const std::size_t fade = std::min<std::size_t>(n / 2, static_cast<std::size_t>(0.01 * sr));

    Waveform w;
    w.sample_rate_hz = kTargetSampleRate;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double v = signal[i] * gain + spec.noise_level * rng.normal();
        if (i < fade) v *= static_cast<double>(i) / static_cast<double>(fade);
        if (n - 1 - i < fade) v *= static_cast<double>(n - 1 - i) / static_cast<double>(fade);
        w.samples[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
    }
    return w;
}

DatasetManifest generate_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir, int jobs)
{
    spec.validate();
    const auto speakers = plan_speakers(spec);

    DatasetManifest m;
    m.dataset_name = spec.dataset_name;
    m.age_range = {spec.ages.front(), spec.ages.back()};
    m.speaker_disjoint = true;
    m.base_dir = out_dir;

    Rng duration_rng(derive_seed(spec.seed, 0));
    for (const auto& sp : speakers) {
        for (int u = 0; u < spec.utterances_per_speaker; ++u) {
            UtteranceEntry e;
            e.utterance_id = sp.speaker_id + "_u" + padded(u, 3);
            e.speaker_id = sp.speaker_id;
            e.audio_path = "audio/" + e.utterance_id + ".wav";
            e.age_class = sp.age;
            e.gender = sp.gender;
            e.split = sp.split;
            // Whole samples, so the manifest duration equals the audio length.
            const double d = duration_rng.uniform(spec.min_duration_s, spec.max_duration_s);
            e.duration_s = static_cast<double>(std::llround(d * kTargetSampleRate)) / kTargetSampleRate;
            m.entries.push_back(std::move(e));
        }
    }
    validate(m);

    std::error_code ec;
    std::filesystem::create_directories(out_dir / "audio", ec);
    if (ec) throw IoError("cannot create " + (out_dir / "audio").string() + ": " + ec.message());

    parallel_for(m.entries.size(), jobs, [&](std::size_t i) {
        const auto& e = m.entries[i];
        const auto& sp = speakers[i / static_cast<std::size_t>(spec.utterances_per_speaker)];
        const auto w = synthesize_utterance(spec, sp, e.duration_s, derive_seed(spec.seed, 1000 + i));
        write_wav_pcm16(w, out_dir / e.audio_path);
    });
    save_manifest(m, out_dir / "manifest.tsv");
    return m;
}

int ssl_frame_count(double duration_s)
{
    const auto samples = static_cast<long long>(std::llround(duration_s * kTargetSampleRate));
    if (samples < 400) return 1;
    return static_cast<int>((samples - 400) / 320 + 1);
}

PseudoSslDirections pseudo_ssl_directions(const SynthSpec& spec, ModelId model)
{
    const int dim = model_spec(model).dim;
    Rng rng(derive_seed(spec.seed, 500 + static_cast<std::uint64_t>(model)));
    auto unit_rows = [&](int rows) {
        MatrixXd m(rows, dim);
        for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.normal();
        m.rowwise().normalize();
        return MatrixXf(m.cast<float>());
    };
    PseudoSslDirections d;
    d.age = unit_rows(static_cast<int>(spec.ages.size()));
    d.gender = unit_rows(2);
    return d;
}

std::size_t generate_pseudo_ssl(const SynthSpec& spec, const DatasetManifest& manifest,
                                const std::filesystem::path& out_dir, int jobs)
{
    spec.validate();
    if (!spec.ssl_sim) throw ValidationError("spec has no ssl_sim section");
    const auto& sim = *spec.ssl_sim;
    std::size_t written = 0;

    for (ModelId model : sim.models) {
        const auto& ms = model_spec(model);
        const auto dirs = pseudo_ssl_directions(spec, model);
        parallel_for(manifest.entries.size(), jobs, [&](std::size_t i) {
            const auto& e = manifest.entries[i];
            const int age_idx = e.age_class - spec.ages.front();
            if (age_idx < 0 || age_idx >= static_cast<int>(spec.ages.size()))
                throw ValidationError("utterance '" + e.utterance_id + "' age outside the synth spec");
            const int frames = ssl_frame_count(e.duration_s);

            Rng rng(derive_seed(derive_seed(spec.seed, 2000 + static_cast<std::uint64_t>(model)), i));
            MatrixXf noise(frames, ms.dim);
            for (Eigen::Index k = 0; k < noise.size(); ++k) noise.data()[k] = static_cast<float>(rng.normal());

            const RowVector<float> signal = static_cast<float>(sim.age_strength) * dirs.age.row(age_idx) +
                                            static_cast<float>(sim.gender_strength) *
                                                dirs.gender.row(e.gender == Gender::male ? 0 : 1);
            for (int layer = 0; layer < ms.n_layers; ++layer) {
                const auto scale = static_cast<float>(std::pow(sim.signal_decay, layer));
                MatrixXf x = noise.rowwise() + scale * signal;
                write_features(make_ssl_features(e.utterance_id, model, layer, std::move(x)), out_dir);
            }
        });
        written += manifest.entries.size() * static_cast<std::size_t>(ms.n_layers);
    }
    return written;
}

} // namespace trait_probe
