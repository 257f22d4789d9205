#include "trait_probe/errors.hpp"
#include "trait_probe/train.hpp"
#include "trait_probe/util.hpp"

#include <bit>
#include <cstring>

namespace trait_probe {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'T', 'P', 'N', 'N'};
constexpr std::uint16_t kVersion = 1;

class Writer {
public:
    template <typename T>
    void put(T value)
    {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
        bytes.insert(bytes.end(), p, p + sizeof value);
    }
    void put_floats(std::span<const float> values)
    {
        const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
        bytes.insert(bytes.end(), p, p + values.size_bytes());
    }
    std::vector<std::uint8_t> bytes;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    template <typename T>
    T get()
    {
        need(sizeof(T));
        T value;
        std::memcpy(&value, in_.data() + pos_, sizeof value);
        pos_ += sizeof value;
        return value;
    }
    void get_floats(std::span<float> out)
    {
        need(out.size_bytes());
        std::memcpy(out.data(), in_.data() + pos_, out.size_bytes());
        pos_ += out.size_bytes();
    }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) const
    {
        if (pos_ + n > in_.size())
            throw TruncatedPayload("checkpoint truncated at byte " + std::to_string(pos_) + " (needs " +
                                   std::to_string(n) + " more)");
    }
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> encode_classifier(const Classifier& model)
{
    const auto& cfg = model.config();
    Writer w;
    for (char c : kMagic) w.put(c);
    w.put(kVersion);
    w.put(static_cast<std::uint32_t>(cfg.in_dim));
    w.put(static_cast<std::uint32_t>(cfg.n_classes));
    w.put(static_cast<std::uint32_t>(cfg.kernel_size));
    w.put(static_cast<std::uint32_t>(cfg.conv_channels.size()));
    for (int c : cfg.conv_channels) w.put(static_cast<std::uint32_t>(c));
    w.put(cfg.bn_eps);
    w.put(cfg.bn_momentum);
    w.put(static_cast<std::uint64_t>(model.seed()));
    for (const auto& t : model.params().tensors()) w.put_floats(t.values);
    for (const auto& r : model.running_stats()) {
        w.put_floats({r.mean.data(), static_cast<std::size_t>(r.mean.size())});
        w.put_floats({r.var.data(), static_cast<std::size_t>(r.var.size())});
    }
    w.put(crc32(w.bytes));
    return std::move(w.bytes);
}

Classifier decode_classifier(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw BadMagic("missing TPNN magic");
    Reader r(bytes.subspan(4));
    const auto version = r.get<std::uint16_t>();
    if (version != kVersion) throw VersionMismatch("checkpoint version " + std::to_string(version) + ", expected 1");

    ClassifierConfig cfg;
    cfg.in_dim = static_cast<int>(r.get<std::uint32_t>());
    cfg.n_classes = static_cast<int>(r.get<std::uint32_t>());
    cfg.kernel_size = static_cast<int>(r.get<std::uint32_t>());
    const auto n_blocks = r.get<std::uint32_t>();
    if (n_blocks == 0 || n_blocks > 64) throw InvariantViolation("implausible block count " + std::to_string(n_blocks));
    cfg.conv_channels.clear();
    for (std::uint32_t b = 0; b < n_blocks; ++b) cfg.conv_channels.push_back(static_cast<int>(r.get<std::uint32_t>()));
    cfg.bn_eps = r.get<double>();
    cfg.bn_momentum = r.get<double>();
    const auto seed = r.get<std::uint64_t>();
    cfg.validate();

    auto params = ParameterSet<float>::zeros(cfg);
    for (auto& t : params.tensors()) r.get_floats(t.values);
    std::vector<BatchNormStats<float>> running;
    for (int c : cfg.conv_channels) {
        BatchNormStats<float> s{VectorXf(c), VectorXf(c)};
        r.get_floats({s.mean.data(), static_cast<std::size_t>(c)});
        r.get_floats({s.var.data(), static_cast<std::size_t>(c)});
        running.push_back(std::move(s));
    }
    const std::size_t body = 4 + r.pos();
    const auto stored = r.get<std::uint32_t>();
    if (4 + r.pos() != bytes.size()) throw InvariantViolation("trailing bytes after checkpoint CRC");
    if (crc32(bytes.first(body)) != stored) throw ChecksumMismatch("checkpoint CRC32 mismatch");

    return Classifier::from_state(std::move(cfg), seed, std::move(params), std::move(running));
}

void save_classifier(const Classifier& model, const std::filesystem::path& path)
{
    write_binary_file(path, encode_classifier(model));
}

Classifier load_classifier(const std::filesystem::path& path)
{
    return decode_classifier(read_binary_file(path));
}

} // namespace trait_probe
