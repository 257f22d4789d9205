#include "trait_probe/errors.hpp"
#include "trait_probe/stats.hpp"

namespace trait_probe {

EvalReport compute_metrics(std::span<const LabelPair> predictions, int n_classes)
{
    if (predictions.empty()) throw EmptyInput("no predictions to score");
    if (n_classes < 1) throw ShapeMismatch("n_classes must be positive");

    EvalReport r;
    r.n_classes = n_classes;
    r.n_test = static_cast<long long>(predictions.size());
    r.confusion.assign(static_cast<std::size_t>(n_classes), std::vector<long long>(static_cast<std::size_t>(n_classes), 0));
    for (const auto& p : predictions) {
        if (p.truth < 0 || p.truth >= n_classes || p.predicted < 0 || p.predicted >= n_classes)
            throw ShapeMismatch("label pair (" + std::to_string(p.truth) + ", " + std::to_string(p.predicted) +
                                ") outside [0, " + std::to_string(n_classes) + ")");
        ++r.confusion[static_cast<std::size_t>(p.truth)][static_cast<std::size_t>(p.predicted)];
    }

    long long correct = 0;
    for (int c = 0; c < n_classes; ++c) {
        const auto cu = static_cast<std::size_t>(c);
        long long row = 0, col = 0;
        for (int o = 0; o < n_classes; ++o) {
            row += r.confusion[cu][static_cast<std::size_t>(o)];
            col += r.confusion[static_cast<std::size_t>(o)][cu];
        }
        const long long tp = r.confusion[cu][cu];
        correct += tp;
        double precision = 0.0, recall = 0.0;
        if (col > 0) precision = static_cast<double>(tp) / static_cast<double>(col);
        else r.undefined_precision.push_back(c);
        if (row > 0) recall = static_cast<double>(tp) / static_cast<double>(row);
        else r.undefined_recall.push_back(c);
        const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        r.class_precision.push_back(precision);
        r.class_recall.push_back(recall);
        r.class_f1.push_back(f1);
        r.precision += precision;
        r.recall += recall;
        r.f1 += f1;
    }
    r.precision /= n_classes;
    r.recall /= n_classes;
    r.f1 /= n_classes;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n_test);
    return r;
}

EvalReport compute_metrics(std::span<const int> truth, std::span<const int> predicted, int n_classes)
{
    if (truth.size() != predicted.size()) throw ShapeMismatch("truth and prediction counts differ");
    std::vector<LabelPair> pairs;
    pairs.reserve(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) pairs.push_back({truth[i], predicted[i]});
    return compute_metrics(pairs, n_classes);
}

} // namespace trait_probe
