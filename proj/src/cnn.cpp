#include "trait_probe/cnn.hpp"

#include "trait_probe/errors.hpp"
#include "trait_probe/feature_store.hpp"
#include "trait_probe/util.hpp"

#include <cmath>
#include <cstring>

namespace trait_probe {

void ClassifierConfig::validate() const
{
    if (in_dim <= 0) throw InvariantViolation("in_dim must be positive");
    if (n_classes < 2) throw InvariantViolation("n_classes must be at least 2");
    if (conv_channels.empty()) throw InvariantViolation("at least one conv block is required");
    for (int c : conv_channels)
        if (c <= 0) throw InvariantViolation("conv channel counts must be positive");
    if (kernel_size <= 0 || kernel_size % 2 == 0) throw InvariantViolation("kernel size must be odd and positive");
    if (!(bn_eps > 0.0) || !(bn_momentum > 0.0 && bn_momentum <= 1.0))
        throw InvariantViolation("batch-norm eps/momentum out of range");
}

// ---------------------------------------------------------------------------
// ParameterSet

template <typename Scalar>
ParameterSet<Scalar> ParameterSet<Scalar>::zeros(const ClassifierConfig& cfg)
{
    ParameterSet p;
    int in = cfg.in_dim;
    for (int out : cfg.conv_channels) {
        p.blocks.push_back({Matrix<Scalar>::Zero(cfg.kernel_size * in, out), Vector<Scalar>::Zero(out),
                            Vector<Scalar>::Zero(out)});
        in = out;
    }
    p.head_weight = Matrix<Scalar>::Zero(in, cfg.n_classes);
    p.head_bias = Vector<Scalar>::Zero(cfg.n_classes);
    return p;
}

template <typename Scalar>
std::vector<typename ParameterSet<Scalar>::Tensor> ParameterSet<Scalar>::tensors()
{
    std::vector<Tensor> out;
    auto add = [&](std::string name, auto& m) {
        out.push_back({std::move(name), std::span<Scalar>(m.data(), static_cast<std::size_t>(m.size()))});
    };
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const std::string prefix = "conv" + std::to_string(b + 1);
        add(prefix + ".weight", blocks[b].weight);
        add(prefix + ".bn_gain", blocks[b].gamma);
        add(prefix + ".bn_offset", blocks[b].beta);
    }
    add("head.weight", head_weight);
    add("head.bias", head_bias);
    return out;
}

template <typename Scalar>
std::vector<typename ParameterSet<Scalar>::ConstTensor> ParameterSet<Scalar>::tensors() const
{
    std::vector<ConstTensor> out;
    for (auto& t : const_cast<ParameterSet*>(this)->tensors())
        out.push_back({std::move(t.name), std::span<const Scalar>(t.values.data(), t.values.size())});
    return out;
}

template <typename Scalar>
std::size_t ParameterSet<Scalar>::count() const
{
    std::size_t n = 0;
    for (const auto& t : tensors()) n += t.values.size();
    return n;
}

// ---------------------------------------------------------------------------
// helpers

template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& logits)
{
    Matrix<Scalar> out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const Scalar peak = logits.row(r).maxCoeff();
        out.row(r) = (logits.row(r).array() - peak).exp().matrix();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

template <typename Scalar>
double cross_entropy(const Matrix<Scalar>& probabilities, std::span<const int> labels)
{
    if (static_cast<std::size_t>(probabilities.rows()) != labels.size())
        throw ShapeMismatch("label count does not match batch size");
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= probabilities.cols())
            throw ShapeMismatch("label " + std::to_string(labels[i]) + " outside [0, " +
                                std::to_string(probabilities.cols()) + ")");
        const double p = static_cast<double>(probabilities(static_cast<Eigen::Index>(i), labels[i]));
        total -= std::log(std::max(p, 1e-300));
    }
    return total / static_cast<double>(labels.size());
}

namespace {

// Time-axis patches: row t of an item holds frames t-half .. t+half
// concatenated, zero outside the item.
template <typename Scalar>
Matrix<Scalar> im2col(const Matrix<Scalar>& x, const SequenceBatch<Scalar>& batch, int kernel)
{
    const Eigen::Index c = x.cols();
    const int half = kernel / 2;
    Matrix<Scalar> patches = Matrix<Scalar>::Zero(x.rows(), kernel * c);
    for (int i = 0; i < batch.size(); ++i) {
        const int offset = batch.offsets[i];
        const int len = batch.lengths[i];
        for (int j = 0; j < kernel; ++j) {
            const int shift = j - half;
            const int start = std::max(0, -shift);
            const int count = len - std::abs(shift);
            if (count <= 0) continue;
            patches.block(offset + start, j * c, count, c) = x.block(offset + start + shift, 0, count, c);
        }
    }
    return patches;
}

template <typename Scalar>
Matrix<Scalar> col2im(const Matrix<Scalar>& dpatches, const SequenceBatch<Scalar>& batch, int kernel, Eigen::Index c)
{
    const int half = kernel / 2;
    Matrix<Scalar> dx = Matrix<Scalar>::Zero(dpatches.rows(), c);
    for (int i = 0; i < batch.size(); ++i) {
        const int offset = batch.offsets[i];
        const int len = batch.lengths[i];
        for (int j = 0; j < kernel; ++j) {
            const int shift = j - half;
            const int start = std::max(0, -shift);
            const int count = len - std::abs(shift);
            if (count <= 0) continue;
            dx.block(offset + start + shift, 0, count, c) += dpatches.block(offset + start, j * c, count, c);
        }
    }
    return dx;
}

template <typename Scalar>
Scalar uniform_scalar(Rng& rng, double bound)
{
    return static_cast<Scalar>(rng.uniform(-bound, bound));
}

} // namespace

// ---------------------------------------------------------------------------
// CnnProbe

template <typename Scalar>
struct CnnProbe<Scalar>::Cache {
    struct Block {
        Matrix<Scalar> patches;
        Matrix<Scalar> normalized;  // (z - mean) * inv_std
        Matrix<Scalar> activated;   // post-ReLU
        Vector<Scalar> inv_std;
    };
    std::vector<Block> blocks;
    Matrix<Scalar> pooled;
    std::vector<BatchNormStats<Scalar>> stats;
};

template <typename Scalar>
CnnProbe<Scalar>::CnnProbe(ClassifierConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed)
{
    config_.validate();
    params_ = ParameterSet<Scalar>::zeros(config_);
    Rng rng(seed);
    int in = config_.in_dim;
    for (std::size_t b = 0; b < params_.blocks.size(); ++b) {
        auto& block = params_.blocks[b];
        // Kaiming-uniform for ReLU: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
        const double bound = std::sqrt(6.0 / (config_.kernel_size * in));
        for (Eigen::Index k = 0; k < block.weight.size(); ++k) block.weight.data()[k] = uniform_scalar<Scalar>(rng, bound);
        block.gamma.setOnes();
        block.beta.setZero();
        running_.push_back({Vector<Scalar>::Zero(block.gamma.size()), Vector<Scalar>::Ones(block.gamma.size())});
        in = config_.conv_channels[b];
    }
    const double bound = std::sqrt(6.0 / in);
    for (Eigen::Index k = 0; k < params_.head_weight.size(); ++k)
        params_.head_weight.data()[k] = uniform_scalar<Scalar>(rng, bound);
    params_.head_bias.setZero();
}

template <typename Scalar>
CnnProbe<Scalar> CnnProbe<Scalar>::from_state(ClassifierConfig config, std::uint64_t seed, ParameterSet<Scalar> params,
                                              std::vector<BatchNormStats<Scalar>> running)
{
    config.validate();
    const auto expected = ParameterSet<Scalar>::zeros(config);
    if (params.blocks.size() != expected.blocks.size() || running.size() != expected.blocks.size())
        throw ShapeMismatch("parameter set does not match classifier config");
    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
        const auto& p = params.blocks[b];
        const auto& e = expected.blocks[b];
        if (p.weight.rows() != e.weight.rows() || p.weight.cols() != e.weight.cols() ||
            p.gamma.size() != e.gamma.size() || p.beta.size() != e.beta.size() ||
            running[b].mean.size() != e.gamma.size() || running[b].var.size() != e.gamma.size())
            throw ShapeMismatch("block " + std::to_string(b + 1) + " shape does not match config");
    }
    if (params.head_weight.rows() != expected.head_weight.rows() ||
        params.head_weight.cols() != expected.head_weight.cols() || params.head_bias.size() != expected.head_bias.size())
        throw ShapeMismatch("head shape does not match config");
    CnnProbe model;
    model.config_ = std::move(config);
    model.seed_ = seed;
    model.params_ = std::move(params);
    model.running_ = std::move(running);
    return model;
}

template <typename Scalar>
void CnnProbe<Scalar>::check_batch(const SequenceBatch<Scalar>& batch) const
{
    if (batch.size() == 0) throw ShapeMismatch("empty batch");
    if (batch.dim() != config_.in_dim)
        throw ShapeMismatch("feature dim " + std::to_string(batch.dim()) + " does not match classifier in_dim " +
                            std::to_string(config_.in_dim));
    for (int len : batch.lengths)
        if (len < 1) throw ShapeMismatch("batch item with zero frames");
}

template <typename Scalar>
Matrix<Scalar> CnnProbe<Scalar>::run(const SequenceBatch<Scalar>& batch, BnMode mode, Cache* cache) const
{
    check_batch(batch);
    const int kernel = config_.kernel_size;
    const auto eps = static_cast<Scalar>(config_.bn_eps);
    Matrix<Scalar> x = batch.frames;
    if (cache) cache->blocks.resize(params_.blocks.size());

    for (std::size_t b = 0; b < params_.blocks.size(); ++b) {
        const auto& p = params_.blocks[b];
        Matrix<Scalar> patches = im2col(x, batch, kernel);
        Matrix<Scalar> z = patches * p.weight;

        Vector<Scalar> mean, var;
        if (mode == BnMode::train) {
            const auto n = static_cast<Scalar>(z.rows());
            mean = z.colwise().mean().transpose();
            z.rowwise() -= mean.transpose();
            var = z.array().square().colwise().sum().transpose() / n;
            if (cache) {
                const Scalar unbias = z.rows() > 1 ? n / (n - 1) : Scalar(1);
                cache->stats.push_back({mean, var * unbias});
            }
        } else {
            mean = running_[b].mean;
            var = running_[b].var;
            z.rowwise() -= mean.transpose();
        }
        const Vector<Scalar> inv_std = (var.array() + eps).rsqrt().matrix();
        z.array().rowwise() *= inv_std.transpose().array();  // normalized
        Matrix<Scalar> y = (z.array().rowwise() * p.gamma.transpose().array()).rowwise() + p.beta.transpose().array();
        y = y.cwiseMax(Scalar(0));

        if (cache) {
            auto& c = cache->blocks[b];
            c.patches = std::move(patches);
            c.normalized = std::move(z);
            c.activated = y;
            c.inv_std = inv_std;
        }
        x = std::move(y);
    }

    Matrix<Scalar> pooled(batch.size(), x.cols());
    for (int i = 0; i < batch.size(); ++i)
        pooled.row(i) = x.middleRows(batch.offsets[i], batch.lengths[i]).colwise().mean();
    Matrix<Scalar> out = pooled * params_.head_weight;
    out.rowwise() += params_.head_bias.transpose();
    if (cache) cache->pooled = std::move(pooled);
    return out;
}

template <typename Scalar>
Matrix<Scalar> CnnProbe<Scalar>::logits(const SequenceBatch<Scalar>& batch, BnMode mode) const
{
    return run(batch, mode, nullptr);
}

template <typename Scalar>
Matrix<Scalar> CnnProbe<Scalar>::forward(const SequenceBatch<Scalar>& batch, BnMode mode) const
{
    return softmax_rows<Scalar>(run(batch, mode, nullptr));
}

template <typename Scalar>
double CnnProbe<Scalar>::loss(const SequenceBatch<Scalar>& batch, std::span<const int> labels) const
{
    return cross_entropy<Scalar>(forward(batch, BnMode::train), labels);
}

template <typename Scalar>
LossAndGrad<Scalar> CnnProbe<Scalar>::loss_and_grad(const SequenceBatch<Scalar>& batch,
                                                   std::span<const int> labels) const
{
    Cache cache;
    const Matrix<Scalar> logit = run(batch, BnMode::train, &cache);
    LossAndGrad<Scalar> out;
    out.probabilities = softmax_rows<Scalar>(logit);
    out.loss = cross_entropy<Scalar>(out.probabilities, labels);
    out.grad = ParameterSet<Scalar>::zeros(config_);

    const auto batch_size = static_cast<Scalar>(batch.size());
    Matrix<Scalar> dlogits = out.probabilities;
    for (int i = 0; i < batch.size(); ++i) dlogits(i, labels[static_cast<std::size_t>(i)]) -= Scalar(1);
    dlogits /= batch_size;

    out.grad.head_weight.noalias() = cache.pooled.transpose() * dlogits;
    out.grad.head_bias = dlogits.colwise().sum().transpose();
    const Matrix<Scalar> dpooled = dlogits * params_.head_weight.transpose();

    // Global average pooling spreads each item's gradient evenly over its frames.
    Matrix<Scalar> dact(batch.frames.rows(), dpooled.cols());
    for (int i = 0; i < batch.size(); ++i) {
        const Scalar inv_len = Scalar(1) / static_cast<Scalar>(batch.lengths[i]);
        dact.middleRows(batch.offsets[i], batch.lengths[i]).rowwise() = dpooled.row(i) * inv_len;
    }

    for (std::size_t bi = params_.blocks.size(); bi-- > 0;) {
        const auto& p = params_.blocks[bi];
        auto& c = cache.blocks[bi];
        auto& g = out.grad.blocks[bi];
        const auto n = static_cast<Scalar>(dact.rows());

        Matrix<Scalar> dy = (c.activated.array() > Scalar(0)).select(dact.array(), Scalar(0)).matrix();
        g.gamma = (dy.array() * c.normalized.array()).colwise().sum().transpose();
        g.beta = dy.colwise().sum().transpose();

        // Batch-norm backward, training mode.
        Matrix<Scalar> dnorm = dy.array().rowwise() * p.gamma.transpose().array();
        const RowVector<Scalar> sum_dnorm = dnorm.colwise().sum();
        const RowVector<Scalar> sum_dnorm_norm = (dnorm.array() * c.normalized.array()).colwise().sum();
        Matrix<Scalar> dz = (dnorm * n).rowwise() - sum_dnorm;
        dz.array() -= c.normalized.array().rowwise() * sum_dnorm_norm.array();
        dz.array().rowwise() *= (c.inv_std.transpose().array() / n);

        g.weight.noalias() = c.patches.transpose() * dz;
        if (bi > 0) {
            const Matrix<Scalar> dpatches = dz * p.weight.transpose();
            dact = col2im(dpatches, batch, config_.kernel_size, p.weight.rows() / config_.kernel_size);
        }
        c = {};
    }
    out.batch_stats = std::move(cache.stats);
    return out;
}

template <typename Scalar>
void CnnProbe<Scalar>::update_running_stats(const std::vector<BatchNormStats<Scalar>>& batch_stats)
{
    if (batch_stats.size() != running_.size()) throw ShapeMismatch("batch statistics do not match block count");
    const auto m = static_cast<Scalar>(config_.bn_momentum);
    for (std::size_t b = 0; b < running_.size(); ++b) {
        running_[b].mean = (Scalar(1) - m) * running_[b].mean + m * batch_stats[b].mean;
        running_[b].var = (Scalar(1) - m) * running_[b].var + m * batch_stats[b].var;
    }
}

template <typename Scalar>
template <typename To>
CnnProbe<To> CnnProbe<Scalar>::cast() const
{
    ParameterSet<To> params;
    for (const auto& b : params_.blocks)
        params.blocks.push_back({b.weight.template cast<To>(), b.gamma.template cast<To>(), b.beta.template cast<To>()});
    params.head_weight = params_.head_weight.template cast<To>();
    params.head_bias = params_.head_bias.template cast<To>();
    std::vector<BatchNormStats<To>> running;
    for (const auto& r : running_) running.push_back({r.mean.template cast<To>(), r.var.template cast<To>()});
    return CnnProbe<To>::from_state(config_, seed_, std::move(params), std::move(running));
}

template <typename Scalar>
std::uint64_t CnnProbe<Scalar>::checksum() const
{
    std::string bytes;
    auto append = [&](std::span<const Scalar> values) {
        bytes.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
    };
    for (const auto& t : params_.tensors()) append(t.values);
    for (const auto& r : running_) {
        append({r.mean.data(), static_cast<std::size_t>(r.mean.size())});
        append({r.var.data(), static_cast<std::size_t>(r.var.size())});
    }
    return fnv1a64(bytes);
}

template struct ParameterSet<float>;
template struct ParameterSet<double>;
template class CnnProbe<float>;
template class CnnProbe<double>;
template CnnProbe<double> CnnProbe<float>::cast<double>() const;
template CnnProbe<float> CnnProbe<double>::cast<float>() const;
template CnnProbe<float> CnnProbe<float>::cast<float>() const;
template CnnProbe<double> CnnProbe<double>::cast<double>() const;
template Matrix<float> softmax_rows<float>(const Matrix<float>&);
template Matrix<double> softmax_rows<double>(const Matrix<double>&);
template double cross_entropy<float>(const Matrix<float>&, std::span<const int>);
template double cross_entropy<double>(const Matrix<double>&, std::span<const int>);

// ---------------------------------------------------------------------------
// inference helpers

Prediction predict(const Classifier& model, const MatrixXf& frames)
{
    auto all = predict_all(model, std::vector<MatrixXf>{frames}, 1);
    return std::move(all.front());
}

Prediction predict(const Classifier& model, const FeatureMatrix& features)
{
    return predict(model, features.data);
}

std::vector<Prediction> predict_all(const Classifier& model, const std::vector<MatrixXf>& items, int batch_size)
{
    std::vector<Prediction> out;
    out.reserve(items.size());
    const std::size_t step = static_cast<std::size_t>(std::max(1, batch_size));
    for (std::size_t start = 0; start < items.size(); start += step) {
        std::vector<const MatrixXf*> chunk;
        for (std::size_t i = start; i < std::min(items.size(), start + step); ++i) chunk.push_back(&items[i]);
        const auto batch = SequenceBatch<float>::pack(chunk, model.config().kernel_size);
        const MatrixXf probs = model.forward(batch, BnMode::inference);
        for (Eigen::Index r = 0; r < probs.rows(); ++r) {
            Prediction p;
            Eigen::Index best = 0;
            probs.row(r).maxCoeff(&best);
            p.label = static_cast<int>(best);
            p.probabilities.assign(probs.row(r).data(), probs.row(r).data() + probs.cols());
            out.push_back(std::move(p));
        }
    }
    return out;
}

} // namespace trait_probe
