#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace trait_probe {

struct LabelPair {
    int truth = 0;
    int predicted = 0;
};

struct EvalReport {
    int n_classes = 0;
    long long n_test = 0;
    double accuracy = 0.0;
    // Macro averages over all classes.
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::vector<double> class_precision;
    std::vector<double> class_recall;
    std::vector<double> class_f1;
    std::vector<std::vector<long long>> confusion;  // [truth][predicted]
    // Classes whose precision (never predicted) or recall (absent from the
    // test labels) had an empty denominator and were scored 0.
    std::vector<int> undefined_precision;
    std::vector<int> undefined_recall;

    bool has_warnings() const { return !undefined_precision.empty() || !undefined_recall.empty(); }
};

// Throws EmptyInput; ShapeMismatch for labels outside [0, n_classes).
EvalReport compute_metrics(std::span<const LabelPair> predictions, int n_classes);
EvalReport compute_metrics(std::span<const int> truth, std::span<const int> predicted, int n_classes);

enum class WilcoxonMethod { exact, normal_approx };

const char* to_string(WilcoxonMethod m);

struct WilcoxonResult {
    double w_plus = 0.0;
    double w_minus = 0.0;
    int n_effective = 0;
    double p_value = 1.0;  // two-sided
    WilcoxonMethod method = WilcoxonMethod::exact;
};

inline constexpr int kWilcoxonExactMaxN = 25;
inline constexpr int kWilcoxonMinPairs = 5;

// Signed-rank test on differences a - b. Zero differences are dropped and
// tied |d| get average ranks. Exact two-sided p for n <= 25, otherwise the
// tie-corrected normal approximation with continuity correction.
// Throws AllZeroDifferences, TooFewPairs.
WilcoxonResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs);
// Same, with the p-value method chosen by the caller.
WilcoxonResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs, WilcoxonMethod method);

// Average ranks (1-based) of |values|, ties averaged.
std::vector<double> average_ranks(std::span<const double> magnitudes);

struct BootstrapSpec {
    int resamples = 30;
    double fraction = 0.8;
    std::uint64_t seed = 0;
};

// Paired (candidate, baseline) accuracies over seeded bootstrap subsamples of
// a shared test set. Each subsample draws round(fraction * n) indices with
// replacement; both systems are scored on the same indices.
std::vector<std::pair<double, double>> bootstrap_paired_accuracy(std::span<const std::uint8_t> candidate_correct,
                                                                 std::span<const std::uint8_t> baseline_correct,
                                                                 const BootstrapSpec& spec);

// Wilcoxon test of candidate vs baseline over bootstrap-paired accuracies.
WilcoxonResult compare_to_baseline(std::span<const std::uint8_t> baseline_correct,
                                   std::span<const std::uint8_t> candidate_correct, const BootstrapSpec& spec = {});

} // namespace trait_probe
