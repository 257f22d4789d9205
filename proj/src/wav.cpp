#include "trait_probe/audio.hpp"
#include "trait_probe/errors.hpp"
#include "trait_probe/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace trait_probe {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t le32(const std::uint8_t* p)
{
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v)
{
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

} // namespace

Waveform decode_wav(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw UnsupportedFormat("not a RIFF/WAVE file");

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    const std::uint8_t* data = nullptr;
    std::size_t data_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint8_t* chunk = bytes.data() + pos;
        const std::uint32_t size = le32(chunk + 4);
        const std::size_t body = pos + 8;
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16 || body + size > bytes.size()) throw CorruptFile("truncated fmt chunk");
            format = le16(chunk + 8);
            channels = le16(chunk + 10);
            rate = le32(chunk + 12);
            bits = le16(chunk + 22);
            if (format == kFormatExtensible) {
                if (size < 40) throw CorruptFile("truncated WAVE_FORMAT_EXTENSIBLE header");
                format = le16(chunk + 8 + 24);  // first two bytes of the subformat GUID
            }
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            if (body + size > bytes.size()) throw CorruptFile("data chunk declares " + std::to_string(size) +
                                                              " bytes, file holds " +
                                                              std::to_string(bytes.size() - body));
            data = bytes.data() + body;
            data_size = size;
            break;
        }
        pos = body + size + (size & 1u);
    }
    if (!have_fmt) throw CorruptFile("missing fmt chunk");
    if (!data) throw CorruptFile("missing data chunk");
    if (channels == 0 || rate == 0) throw CorruptFile("zero channels or sample rate");

    const bool pcm16 = format == kFormatPcm && bits == 16;
    const bool f32 = format == kFormatFloat && bits == 32;
    if (!pcm16 && !f32)
        throw UnsupportedFormat("only 16-bit PCM and 32-bit float WAV are supported (format " +
                                std::to_string(format) + ", " + std::to_string(bits) + " bits)");

    const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
    const std::size_t n = data_size / frame_bytes;
    Waveform w;
    w.sample_rate_hz = static_cast<int>(rate);
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            const std::uint8_t* p = data + i * frame_bytes + c * (bits / 8);
            if (pcm16) {
                acc += static_cast<std::int16_t>(le16(p)) / 32768.0;
            } else {
                std::uint32_t raw = le32(p);
                float v;
                std::memcpy(&v, &raw, sizeof v);
                if (!std::isfinite(v)) throw CorruptFile("non-finite float sample");
                acc += std::clamp(static_cast<double>(v), -1.0, 1.0);
            }
        }
        w.samples[i] = static_cast<float>(acc / channels);
    }
    return w;
}

Waveform read_wav(const std::filesystem::path& path)
{
    const auto bytes = read_binary_file(path);
    Waveform w = decode_wav(bytes);
    if (w.sample_rate_hz != kTargetSampleRate) {
        w.samples = resample(w.samples, w.sample_rate_hz, kTargetSampleRate);
        w.sample_rate_hz = kTargetSampleRate;
    }
    return w;
}

std::vector<std::uint8_t> encode_wav_pcm16(const Waveform& w)
{
    const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
    std::vector<std::uint8_t> out;
    out.reserve(44 + data_bytes);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put32(out, 36 + data_bytes);
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    put32(out, 16);
    put16(out, kFormatPcm);
    put16(out, 1);
    put32(out, static_cast<std::uint32_t>(w.sample_rate_hz));
    put32(out, static_cast<std::uint32_t>(w.sample_rate_hz) * 2);
    put16(out, 2);
    put16(out, 16);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put32(out, data_bytes);
    for (float s : w.samples) {
        const double clipped = std::clamp(static_cast<double>(s), -1.0, 1.0);
        const auto v = static_cast<std::int16_t>(std::clamp(std::lround(clipped * 32767.0), -32768L, 32767L));
        put16(out, static_cast<std::uint16_t>(v));
    }
    return out;
}

void write_wav_pcm16(const Waveform& w, const std::filesystem::path& path)
{
    write_binary_file(path, encode_wav_pcm16(w));
}

} // namespace trait_probe
