#include <doctest.h>

#include "fixtures.hpp"
#include "oracles/pitch.hpp"
#include "trait_probe/audio.hpp"
#include "trait_probe/errors.hpp"
#include "trait_probe/feature_store.hpp"
#include "trait_probe/stats.hpp"
#include "trait_probe/sweep.hpp"
#include "trait_probe/synth.hpp"
#include "trait_probe/util.hpp"

#include <map>

using namespace trait_probe;

namespace {

// Mean frame of every utterance of one age class, per layer.
std::vector<VectorXd> class_means(const std::filesystem::path& dir, const DatasetManifest& m, int age, int layers)
{
    std::vector<VectorXd> out;
    for (int layer = 0; layer < layers; ++layer) {
        VectorXd sum = VectorXd::Zero(768);
        double frames = 0;
        for (const auto& e : m.entries) {
            if (e.age_class != age) continue;
            const auto f = read_features(dir / feature_filename(e.utterance_id, FeatureSource::ssl, ModelId::base_100h, layer));
            sum += f.data.cast<double>().colwise().sum().transpose();
            frames += f.frames();
        }
        out.push_back(sum / frames);
    }
    return out;
}

} // namespace

TEST_SUITE_BEGIN("synth");

TEST_CASE("synth settings validation")
{
    SynthSpec s;
    s.n_speakers = 0;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    fixtures::TempDir dir("synth_empty");
    CHECK_THROWS_AS(generate_corpus(s, dir.path()), ValidationError);
    s = {};
    s.ages = {6, 8};
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = {};
    s.ssl_sim = PseudoSslSpec{};
    s.ssl_sim->signal_decay = 1.5;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = {};
    CHECK(s.f0_hz(6, Gender::male) == 280.0);
    CHECK(s.f0_hz(11, Gender::male) == 215.0);
    CHECK(s.f0_hz(11, Gender::female) == 245.0);
    CHECK(s.formant_scale(14) == 1.0);
}

TEST_CASE("two speakers, two utterances each")
{
    SynthSpec s;
    s.n_speakers = 2;
    s.utterances_per_speaker = 2;
    s.ages = {6, 7};
    fixtures::TempDir dir("synth_small");
    const auto m = generate_corpus(s, dir.path());
    REQUIRE(m.entries.size() == 4);
    for (const auto& e : m.entries) {
        CHECK(std::filesystem::is_regular_file(dir.path() / e.audio_path));
        const auto w = read_wav(dir.path() / e.audio_path);
        CHECK(w.samples.size() == static_cast<std::size_t>(std::llround(e.duration_s * 16000)));
    }
    const auto back = load_manifest(dir / "manifest.tsv");
    CHECK(format_manifest(back) == format_manifest(m));
    CHECK_NOTHROW(validate(back));
}

TEST_CASE("pitch follows the f0 law")
{
    SynthSpec s;
    s.n_speakers = 12;
    s.utterances_per_speaker = 1;
    fixtures::TempDir dir("synth_pitch");
    const auto m = generate_corpus(s, dir.path());
    std::map<std::string, SpeakerPlan> plan;
    for (const auto& p : plan_speakers(s)) plan[p.speaker_id] = p;
    for (const auto& e : m.entries) {
        const auto w = read_wav(dir.path() / e.audio_path);
        const double want = s.f0_hz(plan[e.speaker_id].age, plan[e.speaker_id].gender);
        const double got = oracle::autocorrelation_f0(w.samples, 16000);
        INFO(e.utterance_id, " want ", want, " got ", got);
        CHECK(std::abs(got - want) <= 10.0);
    }
}

TEST_CASE("corpus is deterministic per seed")
{
    SynthSpec s;
    s.n_speakers = 6;
    s.utterances_per_speaker = 1;
    s.ssl_sim = PseudoSslSpec{};
    fixtures::TempDir a("synth_det_a"), b("synth_det_b");
    const auto ma = generate_corpus(s, a.path());
    const auto mb = generate_corpus(s, b.path(), 2);
    generate_pseudo_ssl(s, ma, a / "f");
    generate_pseudo_ssl(s, mb, b / "f", 3);
    for (const auto& e : ma.entries) {
        CHECK(read_binary_file(a.path() / e.audio_path) == read_binary_file(b.path() / e.audio_path));
        const auto name = feature_filename(e.utterance_id, FeatureSource::ssl, ModelId::base_100h, 7);
        CHECK(read_binary_file(a / "f" / name) == read_binary_file(b / "f" / name));
    }
    s.seed = 2;
    fixtures::TempDir c("synth_det_c");
    const auto mc = generate_corpus(s, c.path());
    CHECK(read_binary_file(c.path() / mc.entries[0].audio_path) != read_binary_file(a.path() / ma.entries[0].audio_path));
}

TEST_CASE("pseudo-SSL frame counts and file layout")
{
    CHECK(ssl_frame_count(1.0) == 49);
    CHECK(ssl_frame_count(0.02) == 1);
    SynthSpec s;
    s.n_speakers = 6;
    s.utterances_per_speaker = 1;
    s.ssl_sim = PseudoSslSpec{};
    s.ssl_sim->models = {ModelId::base_100h, ModelId::large_960h_lv60};
    fixtures::TempDir dir("synth_layout");
    const auto m = generate_corpus(s, dir.path());
    CHECK(generate_pseudo_ssl(s, m, dir / "f") == 6 * (13 + 25));
    const auto& e = m.entries[0];
    const auto f = read_features(dir / "f" / feature_filename(e.utterance_id, FeatureSource::ssl, ModelId::large_960h_lv60, 24));
    CHECK(f.dims() == 1024);
    CHECK(f.frames() == ssl_frame_count(e.duration_s));
    const auto dirs = pseudo_ssl_directions(s, ModelId::base_100h);
    CHECK(dirs.age.rows() == 6);
    CHECK(dirs.age.row(2).norm() == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("decay 1 keeps every layer identical")
{
    SynthSpec s;
    s.n_speakers = 6;
    s.utterances_per_speaker = 1;
    s.ssl_sim = PseudoSslSpec{};
    s.ssl_sim->signal_decay = 1.0;
    fixtures::TempDir dir("synth_decay1");
    const auto m = generate_corpus(s, dir.path());
    generate_pseudo_ssl(s, m, dir / "f");
    const auto a = class_means(dir / "f", m, 7, 13);
    for (int layer = 1; layer < 13; ++layer) CHECK((a[layer] - a[0]).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("decay 0.7 shrinks class separation by 0.7 per layer")
{
    SynthSpec s;
    s.n_speakers = 12;
    s.utterances_per_speaker = 2;
    s.ssl_sim = PseudoSslSpec{};
    fixtures::TempDir dir("synth_decay07");
    const auto m = generate_corpus(s, dir.path());
    generate_pseudo_ssl(s, m, dir / "f");
    const auto a = class_means(dir / "f", m, 6, 13);
    const auto b = class_means(dir / "f", m, 9, 13);
    // Per-utterance noise is shared across layers, so it cancels in the
    // change of the class-mean gap from one layer to the next.
    std::vector<double> step;
    for (int layer = 0; layer + 1 < 13; ++layer)
        step.push_back(((a[layer] - b[layer]) - (a[layer + 1] - b[layer + 1])).norm());
    for (std::size_t i = 0; i + 1 < step.size(); ++i) {
        INFO("layer ", i);
        CHECK(std::abs(step[i + 1] / step[i] - 0.7) < 1e-3);
    }
}

TEST_CASE("decay 0 leaves deep layers at chance")
{
    SynthSpec s;
    s.n_speakers = 60;
    s.utterances_per_speaker = 4;
    s.min_duration_s = 0.3;
    s.max_duration_s = 0.5;
    s.ssl_sim = PseudoSslSpec{};
    s.ssl_sim->signal_decay = 0.0;
    fixtures::TempDir dir("synth_decay0");
    auto m = generate_corpus(s, dir.path());
    generate_pseudo_ssl(s, m, dir / "f");

    const auto task = make_task_spec(Task::age, m.age_range);
    const auto train_set = load_split(dir / "f", m, StoreFilter::ssl(ModelId::base_100h, 5, Split::train), task);
    const auto test_set = load_split(dir / "f", m, StoreFilter::ssl(ModelId::base_100h, 5, Split::test), task);
    SweepPlan plan;
    plan.manifest = m;
    plan.train.max_epochs = 6;
    plan.train.patience = 3;
    const auto out = run_cell(train_set.set, test_set.set, plan, task.n_classes);
    std::vector<int> per_class(6, 0);
    for (int l : test_set.set.labels) ++per_class[l];
    const double chance = 1.0 / 6;
    CHECK(*std::max_element(per_class.begin(), per_class.end()) == *std::min_element(per_class.begin(), per_class.end()));
    CHECK(std::abs(out.metrics.accuracy - chance) <= 0.1);
}

TEST_SUITE_END();
