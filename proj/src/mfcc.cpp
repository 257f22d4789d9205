#include "trait_probe/audio.hpp"
#include "trait_probe/errors.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <numbers>

namespace trait_probe {

int MfccConfig::frame_length(int sample_rate) const
{
    return static_cast<int>(std::lround(frame_len_ms * sample_rate / 1000.0));
}

int MfccConfig::hop_length(int sample_rate) const
{
    return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
}

void MfccConfig::validate(int sample_rate) const
{
    if (n_coeffs <= 0 || n_coeffs > n_mel_filters)
        throw InvariantViolation("n_coeffs must be in [1, n_mel_filters]");
    if (n_fft <= 0 || (n_fft & (n_fft - 1)) != 0) throw InvariantViolation("n_fft must be a power of two");
    if (n_fft < frame_length(sample_rate)) throw InvariantViolation("n_fft shorter than the frame");
    if (hop_length(sample_rate) <= 0) throw InvariantViolation("hop must be positive");
    if (!(high_hz > low_hz) || high_hz > sample_rate / 2.0)
        throw InvariantViolation("mel band edges must satisfy low < high <= Nyquist");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> hamming_window(int length)
{
    std::vector<double> w(static_cast<std::size_t>(length));
    for (int n = 0; n < length; ++n)
        w[static_cast<std::size_t>(n)] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (length - 1));
    return w;
}

MatrixXd mel_filterbank(const MfccConfig& cfg, int sample_rate)
{
    const int n_bins = cfg.n_fft / 2 + 1;
    const double mel_lo = hz_to_mel(cfg.low_hz);
    const double mel_hi = hz_to_mel(cfg.high_hz);
    std::vector<double> edges(static_cast<std::size_t>(cfg.n_mel_filters + 2));
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (cfg.n_mel_filters + 1));

    MatrixXd fb = MatrixXd::Zero(cfg.n_mel_filters, n_bins);
    for (int m = 0; m < cfg.n_mel_filters; ++m) {
        const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
        for (int k = 0; k < n_bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / cfg.n_fft;
            if (f > left && f <= center) fb(m, k) = (f - left) / (center - left);
            else if (f > center && f < right) fb(m, k) = (right - f) / (right - center);
        }
    }
    return fb;
}

MatrixXd dct_matrix(int n_coeffs, int n_inputs)
{
    MatrixXd d(n_coeffs, n_inputs);
    const double scale = std::sqrt(2.0 / n_inputs);
    for (int k = 0; k < n_coeffs; ++k) {
        const double s = k == 0 ? scale / std::sqrt(2.0) : scale;
        for (int n = 0; n < n_inputs; ++n)
            d(k, n) = s * std::cos(std::numbers::pi * k * (2.0 * n + 1.0) / (2.0 * n_inputs));
    }
    return d;
}

std::vector<std::complex<double>> rfft(std::span<const double> frame)
{
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<double> in(frame.begin(), frame.end());
    std::vector<std::complex<double>> out;
    fft.fwd(out, in);
    out.resize(frame.size() / 2 + 1);
    return out;
}

int mfcc_frame_count(std::size_t n_samples, const MfccConfig& cfg, int sample_rate)
{
    const auto frame = static_cast<std::size_t>(cfg.frame_length(sample_rate));
    if (n_samples < frame) return 0;
    return static_cast<int>((n_samples - frame) / static_cast<std::size_t>(cfg.hop_length(sample_rate))) + 1;
}

MatrixXf mfcc(const Waveform& w, const MfccConfig& cfg)
{
    const int sr = w.sample_rate_hz;
    if (sr != kTargetSampleRate) throw InvariantViolation("mfcc expects 16 kHz audio");
    cfg.validate(sr);
    const int frame_len = cfg.frame_length(sr);
    const int hop = cfg.hop_length(sr);
    const int n_frames = mfcc_frame_count(w.samples.size(), cfg, sr);
    if (n_frames == 0)
        throw TooShort("need at least " + std::to_string(frame_len) + " samples, got " +
                       std::to_string(w.samples.size()));

    std::vector<double> emphasized(w.samples.size());
    emphasized[0] = w.samples[0];
    for (std::size_t i = 1; i < w.samples.size(); ++i)
        emphasized[i] = static_cast<double>(w.samples[i]) - cfg.pre_emphasis * static_cast<double>(w.samples[i - 1]);

    const auto window = hamming_window(frame_len);
    const int n_bins = cfg.n_fft / 2 + 1;
    MatrixXd power(n_frames, n_bins);

    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<double> buf(static_cast<std::size_t>(cfg.n_fft));
    std::vector<std::complex<double>> spec;
    for (int t = 0; t < n_frames; ++t) {
        std::fill(buf.begin(), buf.end(), 0.0);
        const std::size_t start = static_cast<std::size_t>(t) * static_cast<std::size_t>(hop);
        for (int n = 0; n < frame_len; ++n) buf[n] = emphasized[start + n] * window[n];
        fft.fwd(spec, buf);
        for (int k = 0; k < n_bins; ++k) power(t, k) = std::norm(spec[k]);
    }

    const MatrixXd fb = mel_filterbank(cfg, sr);
    MatrixXd log_mel = (power * fb.transpose()).array().max(cfg.log_floor).log().matrix();
    const MatrixXd dct = dct_matrix(cfg.n_coeffs, cfg.n_mel_filters);
    return (log_mel * dct.transpose()).cast<float>();
}

} // namespace trait_probe
