#pragma once

#include "trait_probe/errors.hpp"
#include "trait_probe/types.hpp"

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace trait_probe {

// Fixed probe: [conv(k=5, same, stride 1) -> batch-norm -> ReLU] x 3,
// global average pooling over time, linear head, softmax.
struct ClassifierConfig {
    int in_dim = 0;
    int n_classes = 2;
    std::vector<int> conv_channels{64, 128, 256};
    int kernel_size = 5;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    // Throws InvariantViolation.
    void validate() const;
    int head_in() const { return conv_channels.back(); }
};

// One mini-batch of variable-length utterances packed along the frame axis.
// Items shorter than the kernel are zero-padded symmetrically to its length.
template <typename Scalar>
struct SequenceBatch {
    Matrix<Scalar> frames;  // total_frames x D
    std::vector<int> lengths;
    std::vector<int> offsets;

    int size() const { return static_cast<int>(lengths.size()); }
    int dim() const { return static_cast<int>(frames.cols()); }

    template <typename Source>
    static SequenceBatch pack(const std::vector<const Source*>& items, int min_length);
    template <typename Source>
    static SequenceBatch pack(const std::vector<Source>& items, int min_length);
};

template <typename Scalar>
struct ConvBlockParams {
    Matrix<Scalar> weight;  // (kernel * C_in) x C_out
    Vector<Scalar> gamma;
    Vector<Scalar> beta;
};

template <typename Scalar>
struct ParameterSet {
    std::vector<ConvBlockParams<Scalar>> blocks;
    Matrix<Scalar> head_weight;  // C_last x n_classes
    Vector<Scalar> head_bias;

    struct Tensor {
        std::string name;
        std::span<Scalar> values;
    };
    struct ConstTensor {
        std::string name;
        std::span<const Scalar> values;
    };

    static ParameterSet zeros(const ClassifierConfig& cfg);
    // Stable order: per block (weight, gamma, beta), then head weight, head bias.
    std::vector<Tensor> tensors();
    std::vector<ConstTensor> tensors() const;
    std::size_t count() const;
};

template <typename Scalar>
struct BatchNormStats {
    Vector<Scalar> mean;
    Vector<Scalar> var;
};

enum class BnMode { train, inference };

template <typename Scalar>
struct LossAndGrad {
    double loss = 0.0;
    ParameterSet<Scalar> grad;
    Matrix<Scalar> probabilities;
    // Per-block batch statistics (mean, unbiased variance) seen in this pass.
    std::vector<BatchNormStats<Scalar>> batch_stats;
};

template <typename Scalar>
class CnnProbe {
public:
    CnnProbe() = default;
    CnnProbe(ClassifierConfig config, std::uint64_t seed);

    const ClassifierConfig& config() const { return config_; }
    std::uint64_t seed() const { return seed_; }

    ParameterSet<Scalar>& params() { return params_; }
    const ParameterSet<Scalar>& params() const { return params_; }
    std::vector<BatchNormStats<Scalar>>& running_stats() { return running_; }
    const std::vector<BatchNormStats<Scalar>>& running_stats() const { return running_; }

    // B x n_classes probabilities.
    Matrix<Scalar> forward(const SequenceBatch<Scalar>& batch, BnMode mode) const;
    Matrix<Scalar> logits(const SequenceBatch<Scalar>& batch, BnMode mode) const;

    // Mean cross-entropy over the batch; batch-norm in training mode.
    double loss(const SequenceBatch<Scalar>& batch, std::span<const int> labels) const;
    LossAndGrad<Scalar> loss_and_grad(const SequenceBatch<Scalar>& batch, std::span<const int> labels) const;

    // Exponential moving average update of the inference statistics.
    void update_running_stats(const std::vector<BatchNormStats<Scalar>>& batch_stats);

    template <typename To>
    CnnProbe<To> cast() const;

    // FNV-1a over the raw parameter and running-stat bytes.
    std::uint64_t checksum() const;

    // Direct construction from stored state (checkpoint loading, casts).
    static CnnProbe from_state(ClassifierConfig config, std::uint64_t seed, ParameterSet<Scalar> params,
                               std::vector<BatchNormStats<Scalar>> running);

private:
    struct Cache;
    Matrix<Scalar> run(const SequenceBatch<Scalar>& batch, BnMode mode, Cache* cache) const;
    void check_batch(const SequenceBatch<Scalar>& batch) const;

    ClassifierConfig config_;
    std::uint64_t seed_ = 0;
    ParameterSet<Scalar> params_;
    std::vector<BatchNormStats<Scalar>> running_;
};

// Cross-entropy of the given probability rows against integer labels.
template <typename Scalar>
double cross_entropy(const Matrix<Scalar>& probabilities, std::span<const int> labels);

// Numerically stable row-wise softmax.
template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& logits);

using Classifier = CnnProbe<float>;

struct Prediction {
    int label = 0;
    std::vector<double> probabilities;
};

struct FeatureMatrix;
Prediction predict(const Classifier& model, const FeatureMatrix& features);
Prediction predict(const Classifier& model, const MatrixXf& frames);

// Batched inference-mode predictions, in input order.
std::vector<Prediction> predict_all(const Classifier& model, const std::vector<MatrixXf>& items,
                                    int batch_size = 64);

template <typename Scalar>
template <typename Source>
SequenceBatch<Scalar> SequenceBatch<Scalar>::pack(const std::vector<const Source*>& items, int min_length)
{
    SequenceBatch batch;
    Eigen::Index total = 0;
    Eigen::Index dim = items.empty() ? 0 : items.front()->cols();
    for (const auto* item : items) {
        const int len = std::max(static_cast<int>(item->rows()), min_length);
        batch.offsets.push_back(static_cast<int>(total));
        batch.lengths.push_back(len);
        total += len;
        if (item->cols() != dim) throw ShapeMismatch("batch items have different feature dims");
    }
    batch.frames = Matrix<Scalar>::Zero(total, dim);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& item = *items[i];
        const int pad_before = (batch.lengths[i] - static_cast<int>(item.rows())) / 2;
        batch.frames.block(batch.offsets[i] + pad_before, 0, item.rows(), item.cols()) =
            item.template cast<Scalar>();
    }
    return batch;
}

template <typename Scalar>
template <typename Source>
SequenceBatch<Scalar> SequenceBatch<Scalar>::pack(const std::vector<Source>& items, int min_length)
{
    std::vector<const Source*> ptrs;
    ptrs.reserve(items.size());
    for (const auto& item : items) ptrs.push_back(&item);
    return pack(ptrs, min_length);
}

} // namespace trait_probe
