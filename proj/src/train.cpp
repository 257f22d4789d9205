#include "trait_probe/train.hpp"

#include "trait_probe/errors.hpp"
#include "trait_probe/util.hpp"

#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace trait_probe {

void TrainConfig::validate() const
{
    if (!(learning_rate > 0) || !(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1) || !(adam_eps > 0))
        throw InvariantViolation("Adam hyperparameters out of range");
    if (batch_size <= 0 || max_epochs <= 0 || patience <= 0) throw InvariantViolation("batch/epochs/patience must be positive");
    if (patience >= max_epochs) throw InvariantViolation("patience must be smaller than max_epochs");
    if (!(validation_fraction > 0 && validation_fraction < 1)) throw InvariantViolation("validation_fraction must be in (0,1)");
}

std::string TrainConfig::describe() const
{
    std::ostringstream out;
    out << "optimizer=adam lr=" << format_shortest(learning_rate) << " beta1=" << format_shortest(beta1)
        << " beta2=" << format_shortest(beta2) << " eps=" << format_shortest(adam_eps) << " batch=" << batch_size
        << " max_epochs=" << max_epochs << " patience=" << patience
        << " val_fraction=" << format_shortest(validation_fraction);
    return out.str();
}

namespace {

struct Adam {
    ParameterSet<float> m, v;
    long long step = 0;

    explicit Adam(const ClassifierConfig& cfg) : m(ParameterSet<float>::zeros(cfg)), v(ParameterSet<float>::zeros(cfg)) {}

    void apply(ParameterSet<float>& params, const ParameterSet<float>& grad, const TrainConfig& cfg)
    {
        ++step;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
        const auto b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
        const auto lr_t = static_cast<float>(cfg.learning_rate / bc1);
        const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
        const auto eps = static_cast<float>(cfg.adam_eps);

        auto p = params.tensors();
        auto g = grad.tensors();
        auto mt = m.tensors();
        auto vt = v.tensors();
        for (std::size_t t = 0; t < p.size(); ++t) {
            for (std::size_t k = 0; k < p[t].values.size(); ++k) {
                const float gk = g[t].values[k];
                float& mk = mt[t].values[k];
                float& vk = vt[t].values[k];
                mk = b1 * mk + (1.0f - b1) * gk;
                vk = b2 * vk + (1.0f - b2) * gk * gk;
                p[t].values[k] -= lr_t * mk / (std::sqrt(vk) * inv_sqrt_bc2 + eps);
            }
        }
    }
};

struct Evaluation {
    double accuracy = 0.0;
    double loss = 0.0;
};

Evaluation evaluate(const Classifier& model, const LabeledSet& data, const std::vector<std::size_t>& idx)
{
    std::vector<MatrixXf> items;
    items.reserve(idx.size());
    for (auto i : idx) items.push_back(data.features[i]);
    const auto preds = predict_all(model, items);
    Evaluation e;
    for (std::size_t j = 0; j < idx.size(); ++j) {
        const int label = data.labels[idx[j]];
        if (preds[j].label == label) e.accuracy += 1.0;
        e.loss -= std::log(std::max(preds[j].probabilities[static_cast<std::size_t>(label)], 1e-300));
    }
    e.accuracy /= static_cast<double>(idx.size());
    e.loss /= static_cast<double>(idx.size());
    return e;
}

} // namespace

TrainResult train(const LabeledSet& data, const ClassifierConfig& config, const TrainConfig& tc)
{
    tc.validate();
    config.validate();
    if (data.features.size() != data.labels.size()) throw ShapeMismatch("feature and label counts differ");
    std::set<int> classes(data.labels.begin(), data.labels.end());
    if (classes.size() < 2)
        throw DegenerateData("training data must contain at least 2 classes, found " + std::to_string(classes.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.labels[i] < 0 || data.labels[i] >= config.n_classes)
            throw ShapeMismatch("label " + std::to_string(data.labels[i]) + " outside [0, " +
                                std::to_string(config.n_classes) + ")");
        if (data.features[i].cols() != config.in_dim)
            throw ShapeMismatch("item " + std::to_string(i) + " has dim " + std::to_string(data.features[i].cols()) +
                                ", classifier expects " + std::to_string(config.in_dim));
        if (data.features[i].rows() < 1) throw ShapeMismatch("item " + std::to_string(i) + " has zero frames");
    }

    Rng rng(derive_seed(tc.seed, 1));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::size_t n_val = static_cast<std::size_t>(std::llround(tc.validation_fraction * static_cast<double>(data.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, data.size() - 1);
    std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> fit(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

    TrainResult result{Classifier(config, derive_seed(tc.seed, 0)), {}};
    Classifier model = result.model;
    Adam adam(config);
    double best_acc = -1.0, best_loss = 0.0;
    int since_best = 0;

    for (int epoch = 0; epoch < tc.max_epochs; ++epoch) {
        rng.shuffle(fit);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < fit.size(); start += static_cast<std::size_t>(tc.batch_size)) {
            const std::size_t end = std::min(fit.size(), start + static_cast<std::size_t>(tc.batch_size));
            std::vector<const MatrixXf*> items;
            std::vector<int> labels;
            for (std::size_t j = start; j < end; ++j) {
                items.push_back(&data.features[fit[j]]);
                labels.push_back(data.labels[fit[j]]);
            }
            const auto batch = SequenceBatch<float>::pack(items, config.kernel_size);
            auto lg = model.loss_and_grad(batch, labels);
            if (!std::isfinite(lg.loss))
                throw DivergedLoss("non-finite loss at epoch " + std::to_string(epoch + 1));
            adam.apply(model.params(), lg.grad, tc);
            model.update_running_stats(lg.batch_stats);
            loss_sum += lg.loss * static_cast<double>(labels.size());
            seen += labels.size();
        }
        result.trace.epoch_loss.push_back(loss_sum / static_cast<double>(seen));

        const auto eval = evaluate(model, data, val);
        if (!std::isfinite(eval.loss)) throw DivergedLoss("non-finite validation loss at epoch " + std::to_string(epoch + 1));
        result.trace.validation_accuracy.push_back(eval.accuracy);
        if (eval.accuracy > best_acc || (eval.accuracy == best_acc && eval.loss < best_loss)) {
            best_acc = eval.accuracy;
            best_loss = eval.loss;
            result.model = model;
            result.trace.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= tc.patience) {
            break;
        }
    }
    return result;
}

double accuracy(const Classifier& model, const LabeledSet& data)
{
    if (data.size() == 0) throw EmptyInput("accuracy of an empty set");
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    return evaluate(model, data, idx).accuracy;
}

} // namespace trait_probe
