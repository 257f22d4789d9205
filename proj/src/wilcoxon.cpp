#include "trait_probe/errors.hpp"
#include "trait_probe/stats.hpp"
#include "trait_probe/util.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace trait_probe {

const char* to_string(WilcoxonMethod m) { return m == WilcoxonMethod::exact ? "exact" : "normal_approx"; }

std::vector<double> average_ranks(std::span<const double> magnitudes)
{
    const std::size_t n = magnitudes.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return magnitudes[a] < magnitudes[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && magnitudes[order[j + 1]] == magnitudes[order[i]]) ++j;
        const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
        i = j + 1;
    }
    return ranks;
}

namespace {

// Exact two-sided p. Doubled ranks are integers even with ties, so the null
// distribution of 2*W+ over all 2^n sign assignments is a subset-sum count.
double exact_p(const std::vector<double>& ranks, double w_plus)
{
    std::vector<long long> doubled;
    long long total = 0;
    for (double r : ranks) {
        doubled.push_back(std::llround(2.0 * r));
        total += doubled.back();
    }
    std::vector<std::uint64_t> count(static_cast<std::size_t>(total) + 1, 0);
    count[0] = 1;
    for (long long r : doubled)
        for (long long s = total; s >= r; --s) count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - r)];

    const long long observed = std::llround(2.0 * w_plus);
    std::uint64_t at_most = 0, at_least = 0;
    for (long long s = 0; s <= total; ++s) {
        if (s <= observed) at_most += count[static_cast<std::size_t>(s)];
        if (s >= observed) at_least += count[static_cast<std::size_t>(s)];
    }
    const double outcomes = std::ldexp(1.0, static_cast<int>(ranks.size()));
    return std::min(1.0, static_cast<double>(2 * std::min(at_most, at_least)) / outcomes);
}

double normal_p(const std::vector<double>& magnitudes, double w_plus)
{
    const double n = static_cast<double>(magnitudes.size());
    const double mean = n * (n + 1.0) / 4.0;
    double variance = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;

    std::vector<double> sorted(magnitudes);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i);
        variance -= (t * t * t - t) / 48.0;
        i = j;
    }
    if (variance <= 0.0) return 1.0;
    const double z = std::max(0.0, std::abs(w_plus - mean) - 0.5) / std::sqrt(variance);
    const double p = std::erfc(z / std::sqrt(2.0));
    return std::clamp(p, std::numeric_limits<double>::min(), 1.0);
}

} // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs)
{
    std::size_t nonzero = 0;
    for (const auto& [a, b] : pairs) nonzero += a - b != 0.0;
    return wilcoxon_signed_rank(pairs, static_cast<int>(nonzero) <= kWilcoxonExactMaxN ? WilcoxonMethod::exact
                                                                                      : WilcoxonMethod::normal_approx);
}

WilcoxonResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs, WilcoxonMethod method)
{
    std::vector<double> diffs;
    for (const auto& [a, b] : pairs) {
        const double d = a - b;
        if (d != 0.0) diffs.push_back(d);
    }
    if (diffs.empty()) throw AllZeroDifferences("all " + std::to_string(pairs.size()) + " paired differences are zero");
    if (static_cast<int>(diffs.size()) < kWilcoxonMinPairs)
        throw TooFewPairs("need at least " + std::to_string(kWilcoxonMinPairs) + " nonzero differences, got " +
                          std::to_string(diffs.size()));

    std::vector<double> magnitudes;
    for (double d : diffs) magnitudes.push_back(std::abs(d));
    const auto ranks = average_ranks(magnitudes);

    WilcoxonResult r;
    r.n_effective = static_cast<int>(diffs.size());
    for (std::size_t i = 0; i < diffs.size(); ++i) (diffs[i] > 0 ? r.w_plus : r.w_minus) += ranks[i];

    r.method = method;
    r.p_value = method == WilcoxonMethod::exact ? exact_p(ranks, r.w_plus) : normal_p(magnitudes, r.w_plus);
    return r;
}

std::vector<std::pair<double, double>> bootstrap_paired_accuracy(std::span<const std::uint8_t> candidate_correct,
                                                                 std::span<const std::uint8_t> baseline_correct,
                                                                 const BootstrapSpec& spec)
{
    if (candidate_correct.size() != baseline_correct.size())
        throw ShapeMismatch("systems were scored on different test sets");
    if (candidate_correct.empty()) throw EmptyInput("empty test set");
    if (spec.resamples < 1 || !(spec.fraction > 0.0 && spec.fraction <= 1.0))
        throw InvariantViolation("bootstrap needs resamples >= 1 and fraction in (0, 1]");

    const std::size_t n = candidate_correct.size();
    const auto draw = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(spec.fraction * static_cast<double>(n))));
    Rng rng(spec.seed);
    std::vector<std::pair<double, double>> out;
    for (int k = 0; k < spec.resamples; ++k) {
        std::size_t cand = 0, base = 0;
        for (std::size_t i = 0; i < draw; ++i) {
            const std::size_t idx = rng.below(n);
            cand += candidate_correct[idx] ? 1 : 0;
            base += baseline_correct[idx] ? 1 : 0;
        }
        out.emplace_back(static_cast<double>(cand) / static_cast<double>(draw),
                         static_cast<double>(base) / static_cast<double>(draw));
    }
    return out;
}

WilcoxonResult compare_to_baseline(std::span<const std::uint8_t> baseline_correct,
                                   std::span<const std::uint8_t> candidate_correct, const BootstrapSpec& spec)
{
    const auto pairs = bootstrap_paired_accuracy(candidate_correct, baseline_correct, spec);
    // Subsample sizes are equal, so the difference is an integer count over a
    // shared denominator. Rebuilding it that way keeps equal count
    // differences bitwise equal and therefore tied.
    const auto draw = static_cast<double>(
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(spec.fraction * static_cast<double>(candidate_correct.size())))));
    std::vector<std::pair<double, double>> diffs;
    for (const auto& [cand, base] : pairs)
        diffs.emplace_back((std::llround(cand * draw) - std::llround(base * draw)) / draw, 0.0);
    return wilcoxon_signed_rank(diffs);
}

} // namespace trait_probe
