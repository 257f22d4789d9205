// Desk-scale acceptance run: one PASS/FAIL line per criterion.

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles/jacobi.hpp"
#include "oracles/naive_mfcc.hpp"
#include "oracles/wilcoxon_enum.hpp"
#include "trait_probe/audio.hpp"
#include "trait_probe/pca.hpp"
#include "trait_probe/stats.hpp"
#include "trait_probe/sweep.hpp"
#include "trait_probe/synth.hpp"
#include "trait_probe/util.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>

using namespace trait_probe;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const char* name, double limit_s, const std::function<Outcome()>& fn)
{
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = fn();
    } catch (const std::exception& e) {
        o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0 && secs >= limit_s) {
        o.pass = false;
        o.detail += "; over the " + format_fixed(limit_s, 0) + " s budget";
    }
    if (!o.pass) ++failures;
    std::printf("%s %s (%s; %.1f s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string num(double v, int digits = 3) { return format_fixed(v, digits); }

std::string sci(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
}

Outcome dsp_oracle()
{
    Rng rng(2024);
    double worst = 0;
    bool frames_ok = true;
    for (int trial = 0; trial < 20; ++trial) {
        // Random tones plus white noise, 1 s at 16 kHz.
        Waveform w;
        w.samples.resize(16000);
        const double f1 = rng.uniform(80, 4000), f2 = rng.uniform(80, 7000);
        const double a = rng.uniform(0.05, 0.5), noise = rng.uniform(0.001, 0.2);
        for (std::size_t n = 0; n < w.samples.size(); ++n) {
            const double t = static_cast<double>(n) / 16000.0;
            w.samples[n] = static_cast<float>(a * std::sin(2 * std::numbers::pi * f1 * t) +
                                              0.5 * a * std::sin(2 * std::numbers::pi * f2 * t) +
                                              noise * rng.uniform(-1, 1));
        }
        const auto got = mfcc(w);
        const auto want = oracle::naive_mfcc(w.samples);
        if (got.rows() != static_cast<Eigen::Index>(want.size()) || got.rows() != 98) {
            frames_ok = false;
            continue;
        }
        for (Eigen::Index t = 0; t < got.rows(); ++t)
            for (Eigen::Index k = 0; k < 26; ++k) worst = std::max(worst, std::abs(got(t, k) - want[t][k]));
    }
    // 25 ms frames every 10 ms, no padding.
    const MfccConfig cfg;
    for (std::size_t n : {0u, 399u, 400u, 559u, 560u, 16000u, 16001u, 48123u}) {
        const int expected = n < 400 ? 0 : static_cast<int>((n - 400) / 160 + 1);
        frames_ok = frames_ok && mfcc_frame_count(n, cfg) == expected;
    }
    return {worst < 1e-4 && frames_ok, "max |diff| " + sci(worst) + (frames_ok ? ", frame counts exact" : ", frame count mismatch")};
}

MatrixXd random_seq(Eigen::Index t, Eigen::Index d, Rng& rng)
{
    MatrixXd m(t, d);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

Outcome gradient_check()
{
    double worst_rel = 0, worst_dir = 0;
    std::size_t checked = 0, kinks = 0;
    std::string where;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        ClassifierConfig c;
        c.in_dim = 4;
        c.n_classes = 3;
        CnnProbe<double> net(c, seed);
        Rng rng(seed + 100);
        for (auto& t : net.params().tensors())
            if (t.name.find("bn_") != std::string::npos)
                for (double& v : t.values) v += 0.3 * rng.normal();
        std::vector<MatrixXd> items{random_seq(6, 4, rng), random_seq(4, 4, rng), random_seq(7, 4, rng)};
        const auto batch = SequenceBatch<double>::pack(items, c.kernel_size);
        const std::vector<int> labels{0, 2, 1};
        const auto w = gradcheck::check(net, batch, labels, 1e-3, 4096, 384, seed);
        checked += w.checked;
        kinks += w.kinks;
        if (w.rel >= worst_rel) {
            worst_rel = w.rel;
            where = w.tensor + "[" + std::to_string(w.index) + "]";
        }
        for (std::uint64_t d = 0; d < 3; ++d)
            worst_dir = std::max(worst_dir, gradcheck::directional_rel_error(net, batch, labels, 1e-5, seed * 10 + d));
    }
    return {worst_rel < 1e-3 && worst_dir < 1e-3,
            std::to_string(checked) + " components, worst rel " + sci(worst_rel) + " at " + where + ", " +
                std::to_string(kinks) + " kink rechecks, worst directional " + sci(worst_dir)};
}

Outcome pca_oracle()
{
    double worst = 0, identity = 0;
    std::uint64_t seed = 7;
    for (auto [n, d] : {std::pair{10, 5}, std::pair{50, 8}}) {
        for (int rep = 0; rep < 5; ++rep) {
            Rng rng(++seed);
            MatrixXd x(n, d);
            for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
            for (int j = 0; j < d; ++j) x.col(j) *= 1.0 + 0.7 * j;
            oracle::Mat rows(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) rows[i].assign(x.row(i).data(), x.row(i).data() + d);
            const auto want = oracle::jacobi(oracle::covariance(rows));
            const auto m = fit_pca(x, d);
            for (int i = 0; i < d; ++i) {
                worst = std::max(worst, std::abs(m.eigenvalues(i) - want.values[i]));
                for (int j = 0; j < d; ++j) worst = std::max(worst, std::abs(m.basis(i, j) - want.vectors[i][j]));
            }
            // At k = D the projection keeps all of the variance.
            const MatrixXd y = project(m, x);
            const MatrixXd yc = y.rowwise() - y.colwise().mean();
            const MatrixXd xc = x.rowwise() - x.colwise().mean();
            const double kept = yc.squaredNorm() / (n - 1), total = xc.squaredNorm() / (n - 1);
            identity = std::max(identity, std::abs(kept - total) / total);
            identity = std::max(identity, std::abs(m.eigenvalues.sum() - total) / total);
        }
    }
    return {worst < 1e-6 && identity < 1e-9,
            "max eigen/basis diff " + sci(worst) + ", variance identity rel err " + sci(identity)};
}

Outcome wilcoxon_oracle()
{
    Rng rng(99);
    int sets = 0, mismatches = 0, identity_failures = 0;
    while (sets < 50) {
        const int n = 5 + static_cast<int>(rng.below(8));  // 5..12
        std::vector<std::pair<double, double>> pairs;
        for (int i = 0; i < n; ++i) {
            // Integer scores every other set, so |d| ties are exercised.
            if (sets % 2) pairs.emplace_back(static_cast<double>(rng.below(6)), static_cast<double>(rng.below(6)));
            else pairs.emplace_back(rng.normal() + 0.3, rng.normal());
        }
        const auto want = oracle::enumerate_signed_rank(pairs);
        if (want.n < kWilcoxonMinPairs) continue;
        ++sets;
        const auto got = wilcoxon_signed_rank(pairs);
        if (got.p_value != want.p || got.w_plus != want.w_plus || got.w_minus != want.w_minus) ++mismatches;
        if (got.w_plus + got.w_minus != got.n_effective * (got.n_effective + 1) / 2.0) ++identity_failures;
    }
    return {mismatches == 0 && identity_failures == 0,
            std::to_string(sets) + " sets, " + std::to_string(mismatches) + " p/W mismatches, " +
                std::to_string(identity_failures) + " W+ + W- identity failures"};
}

Outcome metrics_check()
{
    std::vector<LabelPair> pairs;
    const int confusion[2][2] = {{8, 2}, {3, 7}};
    for (int t = 0; t < 2; ++t)
        for (int p = 0; p < 2; ++p)
            for (int i = 0; i < confusion[t][p]; ++i) pairs.push_back({t, p});
    const auto r = compute_metrics(pairs, 2);
    // scikit-learn: accuracy_score 0.75, f1_score(average="macro") 0.749373
    return {std::abs(r.accuracy - 0.75) < 1e-4 && std::abs(r.f1 - 0.749373) < 1e-4,
            "A=" + num(r.accuracy, 6) + " macro-F1=" + num(r.f1, 6)};
}

// Shared by the sweep criteria.
struct Bench {
    fixtures::TempDir dir{"acceptance"};
    SweepPlan plan;
    SweepReport layers;
    std::string layers_csv;
    bool ready = false;
};

Bench& bench()
{
    static Bench b;
    return b;
}

Outcome layer_sweep()
{
    auto& b = bench();
    SynthSpec s;
    s.n_speakers = 100;
    s.utterances_per_speaker = 4;
    s.ssl_sim = PseudoSslSpec{};
    const auto manifest = generate_corpus(s, b.dir.path());
    const auto features = b.dir / "features";
    generate_pseudo_ssl(s, manifest, features);
    for (const auto& e : manifest.entries)
        write_features(make_mfcc_features(e.utterance_id, mfcc(read_wav(manifest.resolve_audio(e)))), features);

    b.plan.manifest = manifest;
    b.plan.features_dir = features;
    b.plan.systems = {SystemSpec::mfcc(), SystemSpec::all_layers(ModelId::base_100h)};
    b.layers = run_layer_sweep(b.plan);
    b.layers_csv = format_report_csv(b.layers);
    b.ready = true;
    render_report(b.layers, b.dir / "report", "sweep_layers");

    std::ostringstream curve;
    double acc12 = -1;
    for (const auto& r : b.layers.rows) {
        if (r.model == "mfcc") continue;
        curve << (r.layer ? " " : "") << num(r.accuracy, 2);
        if (r.layer == 12) acc12 = r.accuracy;
    }
    const auto* best = b.layers.best_row("base-100h");
    if (!best) return {false, "no best row"};
    const bool ok = manifest.entries.size() == 400 && best->layer <= 2 && acc12 <= best->accuracy - 0.15;
    return {ok, "400 utterances; best layer " + std::to_string(best->layer) + " at " + num(best->accuracy) +
                    ", layer 12 at " + num(acc12) + "; curve " + curve.str()};
}

Outcome pca_sweep()
{
    auto& b = bench();
    if (!b.ready) return {false, "layer sweep did not run"};
    const auto* best = b.layers.best_row("base-100h");
    auto plan = b.plan;
    plan.systems = {SystemSpec::mfcc()};
    plan.pca = PcaPlan{{{ModelId::base_100h, best->layer}}, {}};
    const auto r = run_pca_sweep(plan);
    render_report(r, b.dir / "report", "sweep_pca");

    double control = -1, best_reduced = -1;
    int best_k = 0;
    for (const auto& row : r.rows) {
        if (row.model == "mfcc") continue;
        if (!row.k) control = row.accuracy;
        else if (*row.k < 768 && row.accuracy > best_reduced) {
            best_reduced = row.accuracy;
            best_k = *row.k;
        }
    }
    return {control >= 0 && best_reduced >= control - 0.02,
            "layer " + std::to_string(best->layer) + " no-PCA " + num(control) + ", best k=" + std::to_string(best_k) +
                " at " + num(best_reduced)};
}

Outcome determinism()
{
    auto& b = bench();
    if (!b.ready) return {false, "layer sweep did not run"};
    auto plan = b.plan;
    plan.jobs = 2;
    const auto again = format_report_csv(run_layer_sweep(plan));
    return {again == b.layers_csv, again == b.layers_csv ? "layer sweep CSV byte-identical on rerun (jobs 1 vs 2)"
                                                         : "layer sweep CSV differs on rerun"};
}

} // namespace

int main()
{
    report("dsp-oracle: MFCC vs naive DFT on 20 random 1 s signals", 30, dsp_oracle);
    report("gradient-check: 64/128/256 probe, 3 seeds", 60, gradient_check);
    report("pca-oracle: 10x5 and 50x8 vs cyclic Jacobi", 10, pca_oracle);
    report("wilcoxon-oracle: exact p vs 2^n enumeration, n <= 12", 30, wilcoxon_oracle);
    report("metrics: confusion [[8,2],[3,7]]", 0, metrics_check);
    report("layer-sweep: early-layer dominance on pseudo-SSL corpus", 15 * 60, layer_sweep);
    report("pca-sweep: reduced k within 0.02 of no-PCA", 20 * 60, pca_sweep);
    report("determinism: repeated sweep gives identical CSV", 0, determinism);
    return failures == 0 ? 0 : 1;
}
