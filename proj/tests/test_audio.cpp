#include <doctest.h>

#include "fixtures.hpp"
#include "oracles/naive_mfcc.hpp"
#include "trait_probe/audio.hpp"
#include "trait_probe/errors.hpp"
#include "trait_probe/util.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

using namespace trait_probe;

namespace {

void put_u16(std::vector<std::uint8_t>& b, unsigned v)
{
    b.push_back(static_cast<std::uint8_t>(v & 0xff));
    b.push_back(static_cast<std::uint8_t>(v >> 8 & 0xff));
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i) & 0xff));
}

// Interleaved frames -> RIFF bytes, 16-bit PCM (format 1) or float32 (format 3).
std::vector<std::uint8_t> make_wav(const std::vector<std::vector<float>>& channels, int rate, bool as_float)
{
    const unsigned nch = static_cast<unsigned>(channels.size());
    const std::size_t n = channels[0].size();
    const unsigned width = as_float ? 4 : 2;
    const auto data_bytes = static_cast<std::uint32_t>(n * nch * width);
    std::vector<std::uint8_t> b;
    for (char c : std::string("RIFF")) b.push_back(static_cast<std::uint8_t>(c));
    put_u32(b, 36 + data_bytes);
    for (char c : std::string("WAVEfmt ")) b.push_back(static_cast<std::uint8_t>(c));
    put_u32(b, 16);
    put_u16(b, as_float ? 3 : 1);
    put_u16(b, nch);
    put_u32(b, static_cast<std::uint32_t>(rate));
    put_u32(b, static_cast<std::uint32_t>(rate) * nch * width);
    put_u16(b, nch * width);
    put_u16(b, width * 8);
    for (char c : std::string("data")) b.push_back(static_cast<std::uint8_t>(c));
    put_u32(b, data_bytes);
    for (std::size_t i = 0; i < n; ++i)
        for (const auto& ch : channels) {
            if (as_float) {
                std::uint32_t bits;
                std::memcpy(&bits, &ch[i], 4);
                put_u32(b, bits);
            } else {
                const auto s = static_cast<std::int16_t>(std::lround(ch[i] * 32767.0f));
                put_u16(b, static_cast<std::uint16_t>(s));
            }
        }
    return b;
}

std::vector<float> sine(double hz, int rate, std::size_t n, double amp = 0.5)
{
    std::vector<float> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = static_cast<float>(amp * std::sin(2 * std::numbers::pi * hz * static_cast<double>(i) / rate));
    return x;
}

} // namespace

TEST_SUITE_BEGIN("audio");

TEST_CASE("16 kHz mono PCM passes through")
{
    const auto x = sine(300, 16000, 1234);
    const auto w = decode_wav(make_wav({x}, 16000, false));
    CHECK(w.sample_rate_hz == 16000);
    REQUIRE(w.samples.size() == 1234);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(w.samples[i] == doctest::Approx(x[i]).epsilon(1e-4));

    fixtures::TempDir dir("wav_passthrough");
    write_binary_file(dir / "a.wav", make_wav({x}, 16000, true));
    const auto r = read_wav(dir / "a.wav");
    REQUIRE(r.samples.size() == 1234);
    CHECK(r.samples[100] == x[100]);
}

TEST_CASE("opposite stereo channels cancel")
{
    auto x = sine(440, 16000, 800);
    std::vector<float> neg(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) neg[i] = -x[i];
    for (bool as_float : {false, true}) {
        const auto w = decode_wav(make_wav({x, neg}, 16000, as_float));
        REQUIRE(w.samples.size() == x.size());
        for (float v : w.samples) CHECK(v == 0.0f);
    }
}

TEST_CASE("8 kHz sine resamples to 16 kHz with the tone in place")
{
    fixtures::TempDir dir("wav_8k");
    write_binary_file(dir / "s.wav", make_wav({sine(440, 8000, 8000)}, 8000, false));
    const auto w = read_wav(dir / "s.wav");
    CHECK(w.sample_rate_hz == 16000);
    REQUIRE(w.samples.size() == 16000);
    std::vector<float> mid(w.samples.begin() + 4000, w.samples.begin() + 4000 + 1024);
    std::size_t peak = 0;
    oracle::naive_dft_power_peak(mid, 1024, peak);
    const double expected = 440.0 * 1024 / 16000;  // 28.16
    CHECK(std::abs(static_cast<double>(peak) - expected) <= 1.0);
}

TEST_CASE("resampler keeps length ratio and identity")
{
    const auto x = sine(1000, 44100, 44100);
    CHECK(resample(x, 44100, 16000).size() == 16000);
    CHECK(resample(x, 16000, 16000) == x);
    const auto up = resample(sine(100, 8000, 800), 8000, 48000);
    CHECK(up.size() == 4800);
}

TEST_CASE("malformed WAV files")
{
    std::vector<std::uint8_t> junk(64, 0);
    CHECK_THROWS_AS(decode_wav(junk), UnsupportedFormat);
    auto wav = make_wav({sine(300, 16000, 100)}, 16000, false);
    wav.resize(wav.size() - 50);
    CHECK_THROWS_AS(decode_wav(wav), CorruptFile);
    auto eight_bit = make_wav({sine(300, 16000, 100)}, 16000, false);
    eight_bit[34] = 8;  // bits per sample
    CHECK_THROWS_AS(decode_wav(eight_bit), UnsupportedFormat);
}

TEST_CASE("PCM16 encoder round trip")
{
    Waveform w;
    w.samples = sine(523, 16000, 2000, 0.9);
    w.samples[5] = 1.7f;  // clipped
    const auto back = decode_wav(encode_wav_pcm16(w));
    REQUIRE(back.samples.size() == w.samples.size());
    CHECK(back.samples[5] == doctest::Approx(1.0).epsilon(1e-4));
    for (std::size_t i = 10; i < 2000; i += 97) CHECK(back.samples[i] == doctest::Approx(w.samples[i]).epsilon(1e-4));
}

TEST_CASE("frame count formula")
{
    const MfccConfig cfg;
    CHECK(mfcc_frame_count(16000, cfg) == 98);
    CHECK(mfcc_frame_count(400, cfg) == 1);
    CHECK(mfcc_frame_count(399, cfg) == 0);
    CHECK(mfcc_frame_count(559, cfg) == 1);
    CHECK(mfcc_frame_count(560, cfg) == 2);
    Waveform w;
    w.samples.assign(16000, 0.0f);
    CHECK(mfcc(w).rows() == 98);
    CHECK(mfcc(w).cols() == 26);
    w.samples.assign(399, 0.1f);
    CHECK_THROWS_AS(mfcc(w), TooShort);
}

TEST_CASE("silence gives the DCT of a constant log floor")
{
    Waveform w;
    w.samples.assign(16000, 0.0f);
    const auto m = mfcc(w);
    const double c0 = std::log(1e-10) * std::sqrt(40.0);
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
        CHECK(m(t, 0) == doctest::Approx(c0).epsilon(1e-6));
        for (Eigen::Index k = 1; k < m.cols(); ++k) CHECK(std::abs(m(t, k)) < 1e-4);
    }
}

TEST_CASE("440 Hz tone agrees with the naive-DFT pipeline")
{
    Waveform w;
    w.samples = sine(440, 16000, 16000);
    const auto got = mfcc(w);
    const auto want = oracle::naive_mfcc(w.samples);
    REQUIRE(got.rows() == static_cast<Eigen::Index>(want.size()));
    double worst = 0;
    for (Eigen::Index t = 0; t < got.rows(); ++t)
        for (Eigen::Index k = 0; k < 26; ++k) worst = std::max(worst, std::abs(got(t, k) - want[t][k]));
    CHECK(worst < 1e-4);
}

TEST_CASE("FFT matches the naive DFT on random frames")
{
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> x(512);
        for (double& v : x) v = rng.uniform(-1, 1);
        const auto fast = rfft(x);
        REQUIRE(fast.size() == 257);
        for (std::size_t k = 0; k < fast.size(); ++k) {
            std::complex<double> s;
            for (std::size_t n = 0; n < 512; ++n)
                s += x[n] * std::polar(1.0, -2 * std::numbers::pi * static_cast<double>((k * n) % 512) / 512);
            CHECK(std::abs(fast[k] - s) <= 1e-6 * std::max(1.0, std::abs(s)));
        }
    }
}

TEST_CASE("prepending one hop of silence shifts frames by one")
{
    Rng rng(11);
    Waveform a;
    a.samples.resize(8000);
    for (float& v : a.samples) v = static_cast<float>(rng.uniform(-0.5, 0.5));
    Waveform b;
    b.samples.assign(160, 0.0f);
    b.samples.insert(b.samples.end(), a.samples.begin(), a.samples.end());
    const auto ma = mfcc(a), mb = mfcc(b);
    REQUIRE(mb.rows() == ma.rows() + 1);
    CHECK((mb.bottomRows(ma.rows()) - ma).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("mel filterbank shape")
{
    const MfccConfig cfg;
    const auto fb = mel_filterbank(cfg, 16000);
    CHECK(fb.rows() == 40);
    CHECK(fb.cols() == 257);
    CHECK(fb.minCoeff() >= 0.0);
    for (Eigen::Index m = 0; m < fb.rows(); ++m) CHECK(fb.row(m).sum() > 0.0);
    CHECK(hz_to_mel(mel_to_hz(1234.5)) == doctest::Approx(1234.5));
    const auto d = dct_matrix(26, 40);
    CHECK((d * d.transpose() - MatrixXd::Identity(26, 26)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_SUITE_END();
