#include "trait_probe/pca.hpp"

#include "trait_probe/errors.hpp"
#include "trait_probe/util.hpp"

#include <Eigen/Eigenvalues>

#include <bit>
#include <cstring>
#include <numeric>

namespace trait_probe {

static_assert(std::endian::native == std::endian::little, "pca file I/O assumes a little-endian host");

PcaModel PcaModel::truncated(int k) const
{
    if (k < 1 || k > output_dim())
        throw InvalidK("cannot truncate a " + std::to_string(output_dim()) + "-component model to k=" + std::to_string(k));
    PcaModel out;
    out.mean = mean;
    out.basis = basis.topRows(k);
    out.eigenvalues = eigenvalues.head(k);
    out.fitted_on = fitted_on;
    return out;
}

namespace {

void check_k(long long n, long long d, int k)
{
    if (n < 2) throw InvalidK("PCA needs at least 2 frames, got " + std::to_string(n));
    if (k < 1 || k > std::min(n - 1, d))
        throw InvalidK("k=" + std::to_string(k) + " outside [1, " + std::to_string(std::min(n - 1, d)) + "]");
}

// `cov` holds the lower triangle of the centered scatter matrix.
PcaModel decompose(Eigen::VectorXd mean, Eigen::MatrixXd cov, long long n, int k)
{
    const auto d = cov.rows();
    cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
    cov /= static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw InvariantViolation("covariance eigendecomposition failed");

    PcaModel model;
    model.mean = std::move(mean);
    // Eigen orders ascending; take the top k in descending order.
    model.basis.resize(k, d);
    model.eigenvalues.resize(k);
    for (int i = 0; i < k; ++i) {
        const Eigen::Index src = d - 1 - i;
        model.eigenvalues(i) = std::max(0.0, solver.eigenvalues()(src));
        Eigen::VectorXd v = solver.eigenvectors().col(src);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        model.basis.row(i) = v.transpose();
    }
    model.fitted_on.n_frames = n;
    return model;
}

} // namespace

PcaModel fit_pca(const MatrixXd& frames, int k)
{
    check_k(frames.rows(), frames.cols(), k);
    Eigen::VectorXd mean = frames.colwise().mean().transpose();
    const Eigen::MatrixXd centered = frames.rowwise() - mean.transpose();
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(frames.cols(), frames.cols());
    cov.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
    return decompose(std::move(mean), std::move(cov), frames.rows(), k);
}

PcaModel fit_pca(const std::vector<MatrixXf>& utterances, int k, std::uint64_t seed, long long max_frames)
{
    if (utterances.empty()) throw InvalidK("PCA needs at least one utterance");
    const auto d = utterances.front().cols();
    long long total = 0;
    for (const auto& u : utterances) {
        if (u.cols() != d) throw ShapeMismatch("utterances differ in feature dim");
        total += u.rows();
    }

    // (utterance, row) of every frame used, subsampled when above the cap.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> picks;
    picks.reserve(static_cast<std::size_t>(total));
    for (std::size_t u = 0; u < utterances.size(); ++u)
        for (Eigen::Index r = 0; r < utterances[u].rows(); ++r)
            picks.emplace_back(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(r));
    if (max_frames > 0 && total > max_frames) {
        Rng rng(seed);
        rng.shuffle(picks);
        picks.resize(static_cast<std::size_t>(max_frames));
        std::sort(picks.begin(), picks.end());
    }
    const auto n = static_cast<long long>(picks.size());
    check_k(n, d, k);

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (const auto& [u, r] : picks) mean += utterances[u].row(r).transpose().cast<double>();
    mean /= static_cast<double>(n);

    // Scatter accumulated in real64 over fixed-size chunks, in pick order.
    constexpr std::size_t kChunk = 4096;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd chunk;
    for (std::size_t start = 0; start < picks.size(); start += kChunk) {
        const std::size_t rows = std::min(kChunk, picks.size() - start);
        chunk.resize(static_cast<Eigen::Index>(rows), d);
        for (std::size_t i = 0; i < rows; ++i) {
            const auto& [u, r] = picks[start + i];
            chunk.row(static_cast<Eigen::Index>(i)) = utterances[u].row(r).cast<double>() - mean.transpose();
        }
        cov.selfadjointView<Eigen::Lower>().rankUpdate(chunk.transpose());
    }
    return decompose(std::move(mean), std::move(cov), n, k);
}

MatrixXd project(const PcaModel& model, const MatrixXd& frames)
{
    if (frames.cols() != model.input_dim())
        throw ShapeMismatch("frames have dim " + std::to_string(frames.cols()) + ", PCA expects " +
                            std::to_string(model.input_dim()));
    return (frames.rowwise() - model.mean.transpose()) * model.basis.transpose();
}

MatrixXf project(const PcaModel& model, const MatrixXf& frames)
{
    return project(model, MatrixXd(frames.cast<double>())).cast<float>();
}

MatrixXd reconstruct(const PcaModel& model, const MatrixXd& projected)
{
    if (projected.cols() != model.output_dim()) throw ShapeMismatch("projection width does not match PCA k");
    MatrixXd out = projected * model.basis;
    out.rowwise() += model.mean.transpose();
    return out;
}

SweepDims pca_sweep_dims(int input_dim)
{
    SweepDims out;
    for (int k = 512; k >= 64; k -= 64)
        if (k <= input_dim) out.dims.push_back(k);
    if (32 <= input_dim) out.dims.push_back(32);
    if (input_dim < 512) {
        out.truncated = true;
        out.warning = "input dim " + std::to_string(input_dim) + " < 512: PCA sweep truncated to " +
                      std::to_string(out.dims.size()) + " value(s)";
    }
    return out;
}

namespace {

constexpr char kMagic[4] = {'T', 'P', 'P', 'C'};
constexpr std::uint16_t kVersion = 1;

} // namespace

std::vector<std::uint8_t> encode_pca(const PcaModel& model)
{
    std::vector<std::uint8_t> out;
    auto put = [&](const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    };
    const auto d = static_cast<std::uint32_t>(model.input_dim());
    const auto k = static_cast<std::uint32_t>(model.output_dim());
    put(kMagic, 4);
    put(&kVersion, 2);
    put(&d, 4);
    put(&k, 4);
    put(model.mean.data(), d * sizeof(double));
    put(model.eigenvalues.data(), k * sizeof(double));
    put(model.basis.data(), static_cast<std::size_t>(k) * d * sizeof(double));
    const std::uint32_t crc = crc32(out);
    put(&crc, 4);
    return out;
}

PcaModel decode_pca(std::span<const std::uint8_t> in)
{
    if (in.size() < 4 || std::memcmp(in.data(), kMagic, 4) != 0) throw BadMagic("missing TPPC magic");
    if (in.size() < 14) throw TruncatedPayload("PCA header truncated");
    std::uint16_t version;
    std::uint32_t d, k;
    std::memcpy(&version, in.data() + 4, 2);
    std::memcpy(&d, in.data() + 6, 4);
    std::memcpy(&k, in.data() + 10, 4);
    if (version != kVersion) throw VersionMismatch("PCA file version " + std::to_string(version) + ", expected 1");
    if (k > d) throw InvariantViolation("PCA file has k > D");
    const std::size_t body = 14 + (static_cast<std::size_t>(d) + k + static_cast<std::size_t>(k) * d) * sizeof(double);
    if (in.size() < body + 4)
        throw TruncatedPayload("expected " + std::to_string(body + 4) + " bytes, got " + std::to_string(in.size()));
    std::uint32_t stored;
    std::memcpy(&stored, in.data() + body, 4);
    if (crc32(in.first(body)) != stored) throw ChecksumMismatch("PCA file CRC32 mismatch");

    PcaModel model;
    model.mean.resize(d);
    model.eigenvalues.resize(k);
    model.basis.resize(k, d);
    std::size_t pos = 14;
    std::memcpy(model.mean.data(), in.data() + pos, d * sizeof(double));
    pos += d * sizeof(double);
    std::memcpy(model.eigenvalues.data(), in.data() + pos, k * sizeof(double));
    pos += k * sizeof(double);
    std::memcpy(model.basis.data(), in.data() + pos, static_cast<std::size_t>(k) * d * sizeof(double));
    return model;
}

void save_pca(const PcaModel& model, const std::filesystem::path& path) { write_binary_file(path, encode_pca(model)); }

PcaModel load_pca(const std::filesystem::path& path) { return decode_pca(read_binary_file(path)); }

} // namespace trait_probe
