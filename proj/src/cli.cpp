#include "trait_probe/cli.hpp"

#include "trait_probe/audio.hpp"
#include "trait_probe/errors.hpp"
#include "trait_probe/feature_store.hpp"
#include "trait_probe/manifest.hpp"
#include "trait_probe/pca.hpp"
#include "trait_probe/sweep.hpp"
#include "trait_probe/synth.hpp"
#include "trait_probe/util.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <map>
#include <ostream>
#include <set>

namespace trait_probe {

namespace {

class Log {
public:
    Log(std::ostream& err, bool quiet) : err_(err), quiet_(quiet) {}
    void info(const std::string& msg) const
    {
        if (!quiet_) err_ << "[trait-probe] " << msg << '\n';
    }
    void warn(const std::string& msg) const { err_ << "[trait-probe] warning: " << msg << '\n'; }

private:
    std::ostream& err_;
    bool quiet_;
};

struct Globals {
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string out;
    bool quiet = false;
    std::string plan;
};

struct TrainFlags {
    int max_epochs = 50;
    int patience = 7;
    int batch_size = 32;
    double learning_rate = 1e-3;

    void add_to(CLI::App* cmd)
    {
        cmd->add_option("--max-epochs", max_epochs, "Training epochs cap")->check(CLI::PositiveNumber);
        cmd->add_option("--patience", patience, "Early-stopping patience (epochs)")->check(CLI::PositiveNumber);
        cmd->add_option("--batch-size", batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
        cmd->add_option("--lr", learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
    }
    TrainConfig config() const
    {
        TrainConfig tc;
        tc.max_epochs = max_epochs;
        tc.patience = patience;
        tc.batch_size = batch_size;
        tc.learning_rate = learning_rate;
        return tc;
    }
};

std::string timestamp()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::filesystem::path require_out(const Globals& g)
{
    if (g.out.empty()) throw CLI::RequiredError("--out");
    std::filesystem::path out(g.out);
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
    return out;
}

void write_run_record(const std::filesystem::path& dir, const std::string& command, const std::vector<std::string>& args,
                      const Globals& g, const std::string& started, nlohmann::json extra)
{
    nlohmann::json j;
    j["tool"] = "trait-probe";
    j["version"] = kVersion;
    j["command"] = command;
    j["args"] = args;
    j["seed"] = g.seed;
    j["jobs"] = g.jobs;
    j["started"] = started;
    j["finished"] = timestamp();
    for (auto& [k, v] : extra.items()) j[k] = v;
    write_text_file(dir / "run.json", j.dump(2) + "\n");
}

std::vector<ModelId> parse_models(const std::string& text)
{
    std::vector<ModelId> out;
    for (const auto& name : split(text, ','))
        if (!name.empty()) out.push_back(parse_model_id(name));
    if (out.empty()) throw ParseError("no models given");
    return out;
}

std::vector<int> parse_int_list(const std::string& text)
{
    std::vector<int> out;
    for (const auto& item : split(text, ',')) {
        if (item.empty()) continue;
        const auto dash = item.find('-', 1);
        if (dash != std::string::npos) {
            const int lo = std::stoi(item.substr(0, dash));
            const int hi = std::stoi(item.substr(dash + 1));
            if (hi < lo) throw ParseError("bad range '" + item + "'");
            for (int v = lo; v <= hi; ++v) out.push_back(v);
        } else {
            out.push_back(std::stoi(item));
        }
    }
    return out;
}

std::vector<std::pair<ModelId, int>> parse_best_layers(const std::string& text)
{
    std::vector<std::pair<ModelId, int>> out;
    for (const auto& item : split(text, ',')) {
        if (item.empty()) continue;
        const auto colon = item.rfind(':');
        if (colon == std::string::npos) throw ParseError("best layer '" + item + "' must be model:layer");
        out.emplace_back(parse_model_id(item.substr(0, colon)), std::stoi(item.substr(colon + 1)));
    }
    return out;
}

std::vector<std::pair<ModelId, int>> best_layers_from_csv(const std::filesystem::path& path)
{
    const auto report = parse_report_csv(read_text_file(path));
    std::vector<std::pair<ModelId, int>> out;
    for (const auto& r : report.rows)
        if (r.is_best && r.model != "mfcc" && !r.k) out.emplace_back(parse_model_id(r.model), r.layer);
    if (out.empty()) throw ValidationError(path.string() + " has no best SSL rows");
    return out;
}

// Plan files hold `key=value` lines naming long flags of the subcommand.
// Flags given on the command line win.
std::vector<std::string> merge_plan(const std::vector<std::string>& args)
{
    std::string plan_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--plan" && i + 1 < args.size()) plan_path = args[i + 1];
        else if (args[i].rfind("--plan=", 0) == 0) plan_path = args[i].substr(7);
    }
    if (plan_path.empty()) return args;

    std::set<std::string> given;
    for (const auto& a : args)
        if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));

    std::vector<std::string> merged = args;
    for (auto line : split(read_text_file(plan_path), '\n')) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("plan line '" + line + "' is not key=value");
        const std::string key = line.substr(0, eq);
        if (key == "plan" || given.count(key)) continue;
        merged.push_back("--" + key + "=" + line.substr(eq + 1));
    }
    return merged;
}

SummaryTable print_summary(const DatasetManifest& m, std::ostream& out)
{
    const auto s = summarize(m);
    auto line = [&](const char* split, const SplitSummary& t) {
        out << split << "\tutterances=" << t.utterances << "\tmale_speakers=" << t.male_speakers
            << "\tfemale_speakers=" << t.female_speakers << "\tduration_s=" << format_fixed(t.total_duration_s, 3) << '\n';
    };
    out << "dataset=" << m.dataset_name << " age_range=" << m.age_range.min_years << "-" << m.age_range.max_years << '\n';
    line("train", s.train);
    line("test", s.test);
    return s;
}

// ---------------------------------------------------------------------------
// subcommands

struct SynthFlags {
    std::string name = "synth";
    int speakers = 24;
    int utts = 4;
    std::string ages = "6-11";
    double min_duration = 0.6;
    double max_duration = 1.2;
    double test_fraction = 0.2;
    std::string pseudo_ssl;
    double decay = 0.7;
    double age_strength = 2.0;
    double gender_strength = 1.0;
    std::string features;
};

void cmd_synth(const SynthFlags& f, const Globals& g, const std::vector<std::string>& args, const Log& log,
               std::ostream& out)
{
    const auto started = timestamp();
    const auto dir = require_out(g);
    SynthSpec spec;
    spec.dataset_name = f.name;
    spec.n_speakers = f.speakers;
    spec.utterances_per_speaker = f.utts;
    spec.ages = parse_int_list(f.ages);
    spec.min_duration_s = f.min_duration;
    spec.max_duration_s = f.max_duration;
    spec.test_fraction = f.test_fraction;
    spec.seed = g.seed;
    if (!f.pseudo_ssl.empty()) {
        PseudoSslSpec sim;
        sim.models = parse_models(f.pseudo_ssl);
        sim.signal_decay = f.decay;
        sim.age_strength = f.age_strength;
        sim.gender_strength = f.gender_strength;
        spec.ssl_sim = sim;
    }
    spec.validate();

    log.info("synthesizing " + std::to_string(spec.n_utterances()) + " utterances into " + dir.string());
    const auto manifest = generate_corpus(spec, dir, g.jobs);
    std::size_t feature_files = 0;
    const std::filesystem::path features = f.features.empty() ? dir / "features" : std::filesystem::path(f.features);
    if (spec.ssl_sim) {
        log.info("writing pseudo-SSL features to " + features.string());
        feature_files = generate_pseudo_ssl(spec, manifest, features, g.jobs);
    }
    print_summary(manifest, out);
    write_run_record(dir, "synth", args, g, started,
                     {{"manifest", (dir / "manifest.tsv").string()},
                      {"pseudo_ssl_files", feature_files},
                      {"features", spec.ssl_sim ? features.string() : ""}});
}

void cmd_mfcc(const std::string& manifest_path, const Globals& g, const std::vector<std::string>& args, const Log& log)
{
    const auto started = timestamp();
    const auto dir = require_out(g);
    const auto manifest = load_manifest(manifest_path);
    log.info("computing MFCCs for " + std::to_string(manifest.entries.size()) + " utterances");
    parallel_for(manifest.entries.size(), g.jobs, [&](std::size_t i) {
        const auto& e = manifest.entries[i];
        const auto w = read_wav(manifest.resolve_audio(e));
        write_features(make_mfcc_features(e.utterance_id, mfcc(w)), dir);
    });
    const MfccConfig cfg;
    write_run_record(dir, "mfcc", args, g, started,
                     {{"manifest", manifest_path},
                      {"files", manifest.entries.size()},
                      {"mfcc", {{"n_coeffs", cfg.n_coeffs}, {"frame_len_ms", cfg.frame_len_ms}, {"hop_ms", cfg.hop_ms},
                                {"n_fft", cfg.n_fft}, {"n_mel_filters", cfg.n_mel_filters},
                                {"pre_emphasis", cfg.pre_emphasis}, {"log_floor", cfg.log_floor}}}});
}

struct SweepFlags {
    std::string manifest;
    std::string features;
    std::string models = "base-100h";
    std::string layers;
    std::string task = "age";
    bool no_baseline = false;
    int seeds = 1;
    std::string best_layers;
    std::string from_csv;
    std::string dims;
    TrainFlags train;
};

SweepPlan build_plan(const SweepFlags& f, const Globals& g)
{
    SweepPlan plan;
    plan.manifest = load_manifest(f.manifest);
    plan.features_dir = f.features;
    plan.task = parse_task(f.task);
    plan.train = f.train.config();
    plan.seed = g.seed;
    plan.jobs = g.jobs;
    if (!f.no_baseline) plan.systems.push_back(SystemSpec::mfcc());
    return plan;
}

// Mean and standard deviation of accuracy per row key over repeated seeds.
void write_seed_summary(const std::vector<SweepReport>& runs, const std::filesystem::path& path)
{
    std::ostringstream csv;
    csv << "dataset,task,model,layer,k,n_seeds,accuracy_mean,accuracy_std\n";
    const auto& first = runs.front();
    for (std::size_t i = 0; i < first.rows.size(); ++i) {
        std::vector<double> acc;
        for (const auto& run : runs)
            if (!run.rows[i].failed) acc.push_back(run.rows[i].accuracy);
        const auto& r = first.rows[i];
        csv << r.dataset << ',' << r.task << ',' << r.model << ',' << r.layer << ',' << (r.k ? std::to_string(*r.k) : "")
            << ',' << acc.size() << ',';
        if (acc.empty()) {
            csv << ",\n";
            continue;
        }
        double mean = 0.0;
        for (double a : acc) mean += a;
        mean /= static_cast<double>(acc.size());
        double var = 0.0;
        for (double a : acc) var += (a - mean) * (a - mean);
        const double sd = acc.size() > 1 ? std::sqrt(var / static_cast<double>(acc.size() - 1)) : 0.0;
        csv << format_fixed(mean, 6) << ',' << format_fixed(sd, 6) << '\n';
    }
    write_text_file(path, csv.str());
}

void finish_sweep(const std::vector<SweepReport>& runs, const SweepPlan& plan, const std::string& stem,
                  const std::string& command, const Globals& g, const std::vector<std::string>& args,
                  const std::string& started, const Log& log)
{
    const auto dir = require_out(g);
    const auto& report = runs.front();
    for (const auto& w : report.warnings) log.warn(w);
    const auto files = render_report(report, dir, stem);
    if (runs.size() > 1) write_seed_summary(runs, dir / (stem + "_seeds.csv"));

    nlohmann::json best = nlohmann::json::object();
    for (const auto& r : report.rows)
        if (r.is_best) best[r.model] = r.k ? *r.k : r.layer;
    write_run_record(dir, command, args, g, started,
                     {{"config_hash", report.config_hash},
                      {"config", plan.describe()},
                      {"seeds", runs.size()},
                      {"csv", files.csv.string()},
                      {"best", best}});
    for (const auto& r : report.rows)
        if (r.is_best)
            log.info("best " + r.model + (r.k ? " k=" + std::to_string(*r.k) : " layer=" + std::to_string(r.layer)) +
                     " accuracy=" + format_fixed(r.accuracy, 4));
}

void cmd_sweep_layers(const SweepFlags& f, const Globals& g, const std::vector<std::string>& args, const Log& log)
{
    const auto started = timestamp();
    require_out(g);
    SweepPlan plan = build_plan(f, g);
    for (ModelId m : parse_models(f.models)) {
        SystemSpec s = SystemSpec::all_layers(m);
        if (!f.layers.empty()) s.layers = parse_int_list(f.layers);
        plan.systems.push_back(std::move(s));
    }
    std::vector<SweepReport> runs;
    for (int i = 0; i < f.seeds; ++i) {
        SweepPlan p = plan;
        p.seed = plan.seed + static_cast<std::uint64_t>(i);
        log.info("layer sweep, seed " + std::to_string(p.seed));
        runs.push_back(run_layer_sweep(p));
    }
    finish_sweep(runs, plan, "sweep_layers", "sweep-layers", g, args, started, log);
}

void cmd_sweep_pca(const SweepFlags& f, const Globals& g, const std::vector<std::string>& args, const Log& log)
{
    const auto started = timestamp();
    require_out(g);
    SweepPlan plan = build_plan(f, g);
    PcaPlan pca;
    if (!f.best_layers.empty()) pca.best_layers = parse_best_layers(f.best_layers);
    else if (!f.from_csv.empty()) pca.best_layers = best_layers_from_csv(f.from_csv);
    else throw CLI::RequiredError("--best-layers or --from-csv");
    if (!f.dims.empty()) pca.dims = parse_int_list(f.dims);
    plan.pca = pca;
    std::vector<SweepReport> runs;
    for (int i = 0; i < f.seeds; ++i) {
        SweepPlan p = plan;
        p.seed = plan.seed + static_cast<std::uint64_t>(i);
        log.info("PCA sweep, seed " + std::to_string(p.seed));
        runs.push_back(run_pca_sweep(p));
    }
    finish_sweep(runs, plan, "sweep_pca", "sweep-pca", g, args, started, log);
}

void cmd_report(const std::string& in, const Globals& g, const std::vector<std::string>& args, const Log& log)
{
    const auto started = timestamp();
    const auto dir = require_out(g);
    const auto report = parse_report_csv(read_text_file(in));
    const auto stem = std::filesystem::path(in).stem().string();
    const auto files = render_report(report, dir, stem);
    for (const auto& svg : files.svgs) log.info("wrote " + svg.string());
    write_run_record(dir, "report", args, g, started, {{"input", in}});
}

int cmd_validate(const std::string& manifest_path, const std::string& features, const Log& log, std::ostream& out)
{
    const auto manifest = load_manifest(manifest_path);
    print_summary(manifest, out);
    if (features.empty()) return 0;

    // Every .fmx in the directory must decode; every (model, layer) group
    // present must cover the whole manifest.
    std::map<std::string, std::set<std::string>> groups;
    std::size_t files = 0;
    std::vector<std::filesystem::path> paths;
    for (const auto& entry : std::filesystem::directory_iterator(features))
        if (entry.is_regular_file() && entry.path().extension() == ".fmx") paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        const auto fm = read_features(p);
        groups[(fm.source == FeatureSource::mfcc ? std::string("mfcc") : to_string(fm.model)) + ".L" +
               std::to_string(fm.layer)]
            .insert(fm.utterance_id);
        ++files;
    }
    std::size_t incomplete = 0;
    for (const auto& [group, ids] : groups) {
        std::size_t missing = 0;
        for (const auto& e : manifest.entries) missing += ids.count(e.utterance_id) ? 0 : 1;
        out << "features " << group << "\tfiles=" << ids.size() << "\tmissing=" << missing << '\n';
        if (missing) ++incomplete;
    }
    out << "feature_files=" << files << " groups=" << groups.size() << '\n';
    if (incomplete) {
        log.warn(std::to_string(incomplete) + " feature group(s) do not cover the manifest");
        return 1;
    }
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"trait-probe: layer-wise probing of speech representations for age and gender"};
    app.name("trait-probe");
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    if (const char* env = std::getenv("TRAIT_PROBE_SEED")) {
        try {
            g.seed = std::stoull(env);
        } catch (const std::exception&) {
            err << "[trait-probe] TRAIT_PROBE_SEED is not an unsigned integer: " << env << '\n';
            return 2;
        }
    }
    app.add_option("--seed", g.seed, "Global RNG seed (overrides TRAIT_PROBE_SEED)");
    app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output directory");
    app.add_flag("--quiet", g.quiet, "Suppress progress logs");
    app.add_option("--plan", g.plan, "key=value file of subcommand flags");

    SynthFlags synth;
    auto* c_synth = app.add_subcommand("synth", "Generate a synthetic corpus (WAV + manifest, optional pseudo-SSL features)");
    c_synth->add_option("--name", synth.name, "Dataset name");
    c_synth->add_option("--speakers", synth.speakers, "Number of speakers")->check(CLI::PositiveNumber);
    c_synth->add_option("--utts", synth.utts, "Utterances per speaker")->check(CLI::PositiveNumber);
    c_synth->add_option("--ages", synth.ages, "Age classes, e.g. 6-11");
    c_synth->add_option("--min-duration", synth.min_duration, "Shortest utterance (s)");
    c_synth->add_option("--max-duration", synth.max_duration, "Longest utterance (s)");
    c_synth->add_option("--test-fraction", synth.test_fraction, "Fraction of speakers held out for test");
    c_synth->add_option("--pseudo-ssl", synth.pseudo_ssl, "Comma-separated models to emit pseudo-SSL features for");
    c_synth->add_option("--decay", synth.decay, "Per-layer class-signal decay in [0,1]");
    c_synth->add_option("--age-strength", synth.age_strength, "Age signal norm at layer 0");
    c_synth->add_option("--gender-strength", synth.gender_strength, "Gender signal norm at layer 0");
    c_synth->add_option("--features", synth.features, "Pseudo-SSL output directory (default OUT/features)");

    std::string mfcc_manifest;
    auto* c_mfcc = app.add_subcommand("mfcc", "Compute 26-dim MFCC features for every manifest utterance");
    c_mfcc->add_option("--manifest", mfcc_manifest, "Manifest file")->required();

    SweepFlags layers;
    auto* c_layers = app.add_subcommand("sweep-layers", "Train and score one probe per (model, layer)");
    c_layers->add_option("--manifest", layers.manifest, "Manifest file")->required();
    c_layers->add_option("--features", layers.features, "Feature store directory")->required();
    c_layers->add_option("--models", layers.models, "Comma-separated model ids");
    c_layers->add_option("--layers", layers.layers, "Layer list/range, e.g. 0-12 (default: all)");
    c_layers->add_option("--task", layers.task, "age|gender");
    c_layers->add_flag("--no-baseline", layers.no_baseline, "Skip the MFCC baseline");
    c_layers->add_option("--seeds", layers.seeds, "Repeat with N consecutive seeds")->check(CLI::PositiveNumber);
    layers.train.add_to(c_layers);

    SweepFlags pca;
    auto* c_pca = app.add_subcommand("sweep-pca", "PCA dimension sweep on each model's best layer");
    c_pca->add_option("--manifest", pca.manifest, "Manifest file")->required();
    c_pca->add_option("--features", pca.features, "Feature store directory")->required();
    c_pca->add_option("--best-layers", pca.best_layers, "model:layer,... ");
    c_pca->add_option("--from-csv", pca.from_csv, "Take best layers from a sweep-layers CSV");
    c_pca->add_option("--dims", pca.dims, "PCA dimensions (default 512..64 step 64, then 32)");
    c_pca->add_option("--task", pca.task, "age|gender");
    c_pca->add_flag("--no-baseline", pca.no_baseline, "Skip the MFCC baseline");
    c_pca->add_option("--seeds", pca.seeds, "Repeat with N consecutive seeds")->check(CLI::PositiveNumber);
    pca.train.add_to(c_pca);

    std::string report_in;
    auto* c_report = app.add_subcommand("report", "Render CSV + SVG from a sweep CSV");
    c_report->add_option("--in", report_in, "Sweep CSV")->required();

    std::string val_manifest, val_features;
    auto* c_validate = app.add_subcommand("validate", "Validate a manifest and, optionally, a feature store");
    c_validate->add_option("--manifest", val_manifest, "Manifest file")->required();
    c_validate->add_option("--features", val_features, "Feature store directory");

    try {
        auto args = merge_plan(raw_args);
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "[trait-probe] " << e.what() << "\n\n" << app.help();
        return 2;
    } catch (const Error& e) {
        err << "[trait-probe] " << e.what() << '\n';
        return 2;
    }

    const Log log(err, g.quiet);
    try {
        if (c_synth->parsed()) cmd_synth(synth, g, raw_args, log, out);
        else if (c_mfcc->parsed()) cmd_mfcc(mfcc_manifest, g, raw_args, log);
        else if (c_layers->parsed()) cmd_sweep_layers(layers, g, raw_args, log);
        else if (c_pca->parsed()) cmd_sweep_pca(pca, g, raw_args, log);
        else if (c_report->parsed()) cmd_report(report_in, g, raw_args, log);
        else if (c_validate->parsed()) return cmd_validate(val_manifest, val_features, log, out);
    } catch (const CLI::ParseError& e) {
        err << "[trait-probe] " << e.what() << "\n\n" << app.help();
        return 2;
    } catch (const Error& e) {
        err << "[trait-probe] error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "[trait-probe] error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

} // namespace trait_probe
