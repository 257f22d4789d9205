#include "trait_probe/audio.hpp"
#include "trait_probe/errors.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace trait_probe {

namespace {

constexpr int kTapsPerPhase = 64;
constexpr int kHalfTaps = kTapsPerPhase / 2;
constexpr double kKaiserBeta = 8.6;
constexpr double kRolloff = 0.95;

double sinc(double x)
{
    if (std::abs(x) < 1e-12) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

double kaiser(double x, double beta)
{
    // x in [-1, 1]
    const double r = 1.0 - x * x;
    if (r <= 0.0) return 0.0;
    return std::cyl_bessel_i(0.0, beta * std::sqrt(r)) / std::cyl_bessel_i(0.0, beta);
}

} // namespace

std::vector<float> resample(std::span<const float> input, int from_hz, int to_hz)
{
    if (from_hz <= 0 || to_hz <= 0) throw UnsupportedFormat("sample rates must be positive");
    if (from_hz == to_hz) return {input.begin(), input.end()};

    const long long g = std::gcd(from_hz, to_hz);
    const long long up = to_hz / g;      // L
    const long long down = from_hz / g;  // M
    const double cutoff = kRolloff * std::min(1.0, static_cast<double>(up) / static_cast<double>(down));

    // One row of taps per fractional phase; tap j weighs input[base + j - kHalfTaps + 1].
    std::vector<double> table(static_cast<std::size_t>(up * kTapsPerPhase));
    for (long long phase = 0; phase < up; ++phase) {
        const double frac = static_cast<double>(phase) / static_cast<double>(up);
        double* taps = table.data() + phase * kTapsPerPhase;
        double sum = 0.0;
        for (int j = 0; j < kTapsPerPhase; ++j) {
            const double d = static_cast<double>(j - kHalfTaps + 1) - frac;
            taps[j] = cutoff * sinc(cutoff * d) * kaiser(d / kHalfTaps, kKaiserBeta);
            sum += taps[j];
        }
        for (int j = 0; j < kTapsPerPhase; ++j) taps[j] /= sum;
    }

    const auto n_in = static_cast<long long>(input.size());
    const long long n_out = n_in * up / down;
    std::vector<float> out(static_cast<std::size_t>(n_out));
    for (long long m = 0; m < n_out; ++m) {
        const long long pos = m * down;
        const long long base = pos / up;
        const double* taps = table.data() + (pos % up) * kTapsPerPhase;
        double acc = 0.0;
        for (int j = 0; j < kTapsPerPhase; ++j) {
            const long long idx = base + j - kHalfTaps + 1;
            if (idx >= 0 && idx < n_in) acc += taps[j] * input[static_cast<std::size_t>(idx)];
        }
        out[static_cast<std::size_t>(m)] = static_cast<float>(acc);
    }
    return out;
}

} // namespace trait_probe
