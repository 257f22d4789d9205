#pragma once

#include "trait_probe/types.hpp"

#include <complex>
#include <filesystem>
#include <span>
#include <vector>

namespace trait_probe {

inline constexpr int kTargetSampleRate = 16000;

struct Waveform {
    std::vector<float> samples;  // in [-1, 1]
    int sample_rate_hz = kTargetSampleRate;

    double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

// Raw decode: channels averaged to mono, native rate kept.
Waveform decode_wav(std::span<const std::uint8_t> bytes);
// Decode, downmix and resample to 16 kHz.
Waveform read_wav(const std::filesystem::path& path);

// 16-bit PCM mono. Samples are clipped to [-1, 1].
std::vector<std::uint8_t> encode_wav_pcm16(const Waveform& w);
void write_wav_pcm16(const Waveform& w, const std::filesystem::path& path);

// Polyphase windowed-sinc resampler (Kaiser window, beta 8.6, 64 taps per
// phase). Identity when rates match.
std::vector<float> resample(std::span<const float> input, int from_hz, int to_hz);

// Forward real FFT of a power-of-two length frame; returns n/2+1 bins.
std::vector<std::complex<double>> rfft(std::span<const double> frame);

struct MfccConfig {
    int n_coeffs = 26;
    double frame_len_ms = 25.0;
    double hop_ms = 10.0;
    int n_fft = 512;
    int n_mel_filters = 40;
    double pre_emphasis = 0.97;
    double log_floor = 1e-10;
    double low_hz = 0.0;
    double high_hz = 8000.0;

    int frame_length(int sample_rate) const;
    int hop_length(int sample_rate) const;
    void validate(int sample_rate) const;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// n_mel_filters x (n_fft/2 + 1) triangular HTK-mel filterbank.
MatrixXd mel_filterbank(const MfccConfig& cfg, int sample_rate);
// Orthonormal DCT-II basis, n_coeffs x n_mel_filters.
MatrixXd dct_matrix(int n_coeffs, int n_inputs);
std::vector<double> hamming_window(int length);

int mfcc_frame_count(std::size_t n_samples, const MfccConfig& cfg, int sample_rate = kTargetSampleRate);

// frames x n_coeffs. Throws TooShort below one frame of input.
MatrixXf mfcc(const Waveform& w, const MfccConfig& cfg = {});

} // namespace trait_probe
