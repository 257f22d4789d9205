#include "trait_probe/sweep.hpp"

#include "trait_probe/errors.hpp"
#include "trait_probe/reference_results.hpp"
#include "trait_probe/pca.hpp"
#include "trait_probe/util.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace trait_probe {

SystemSpec SystemSpec::all_layers(ModelId model)
{
    SystemSpec s{FeatureSource::ssl, model, {}};
    for (int l = 0; l < model_spec(model).n_layers; ++l) s.layers.push_back(l);
    return s;
}

std::string SystemSpec::name() const { return source == FeatureSource::mfcc ? "mfcc" : to_string(model); }

void SweepPlan::validate() const
{
    trait_probe::validate(manifest);
    if (manifest.split_entries(Split::train).empty()) throw ValidationError("plan needs train utterances");
    if (manifest.split_entries(Split::test).empty()) throw ValidationError("plan needs test utterances");
    if (jobs < 1) throw ValidationError("jobs must be at least 1");
    for (const auto& s : systems) {
        if (s.layers.empty()) throw ValidationError("system " + s.name() + " has no layers");
        if (s.source == FeatureSource::mfcc) {
            if (s.layers != std::vector<int>{-1}) throw ValidationError("mfcc system must use layer -1");
            continue;
        }
        const auto& ms = model_spec(s.model);
        for (int l : s.layers)
            if (l < 0 || l >= ms.n_layers)
                throw ValidationError("layer " + std::to_string(l) + " outside [0," + std::to_string(ms.n_layers - 1) +
                                      "] for " + ms.name);
    }
    if (pca) {
        for (const auto& [model, layer] : pca->best_layers) {
            const auto& ms = model_spec(model);
            if (layer < 0 || layer >= ms.n_layers)
                throw ValidationError("best layer " + std::to_string(layer) + " outside range for " + ms.name);
            for (int k : pca->dims)
                if (k < 1 || k > ms.dim) throw InvalidK("k=" + std::to_string(k) + " outside [1," + std::to_string(ms.dim) + "]");
        }
    }
    train.validate();
}

bool SweepPlan::has_baseline() const
{
    return std::any_of(systems.begin(), systems.end(), [](const SystemSpec& s) { return s.source == FeatureSource::mfcc; });
}

std::string SweepPlan::describe() const
{
    std::ostringstream out;
    out << "dataset=" << manifest.dataset_name << " utterances=" << manifest.entries.size() << " task=" << to_string(task)
        << "\nsystems=";
    for (const auto& s : systems) {
        out << s.name() << ":";
        for (std::size_t i = 0; i < s.layers.size(); ++i) out << (i ? "," : "") << s.layers[i];
        out << ";";
    }
    if (pca) {
        out << "\npca_best=";
        for (const auto& [m, l] : pca->best_layers) out << to_string(m) << ":" << l << ";";
        out << " pca_dims=";
        for (int k : pca->dims) out << k << ",";
        out << " pca_max_frames=" << pca->max_fit_frames;
    }
    out << "\nclassifier=channels:";
    for (int c : classifier.conv_channels) out << c << ",";
    out << " kernel=" << classifier.kernel_size << " bn_eps=" << format_shortest(classifier.bn_eps)
        << " bn_momentum=" << format_shortest(classifier.bn_momentum);
    out << "\ntrain=" << train.describe();
    out << "\nbootstrap=" << bootstrap.resamples << "x" << format_shortest(bootstrap.fraction);
    out << "\nseed=" << seed << "\n";
    return out.str();
}

std::string SweepPlan::config_hash() const { return hex64(fnv1a64(describe())); }

const SweepRow* SweepReport::best_row(const std::string& model) const
{
    for (const auto& r : rows)
        if (r.model == model && r.is_best) return &r;
    return nullptr;
}

const SweepRow* SweepReport::baseline_row() const
{
    for (const auto& r : rows)
        if (r.model == "mfcc" && !r.failed) return &r;
    return nullptr;
}

SplitData load_split(const std::filesystem::path& features_dir, const DatasetManifest& manifest,
                     const StoreFilter& filter, const TaskSpec& task)
{
    SplitData out;
    for (const auto& h : scan_store(features_dir, manifest, filter)) {
        FeatureMatrix fm = h.load();
        if (fm.utterance_id != h.utterance_id)
            throw InvariantViolation(h.path.string() + " holds utterance '" + fm.utterance_id + "'");
        out.set.features.push_back(std::move(fm.data));
        out.set.labels.push_back(task.label_of(*h.entry, manifest.age_range));
        out.utterance_ids.push_back(h.utterance_id);
    }
    return out;
}

CellOutcome run_cell(const LabeledSet& train_set, const LabeledSet& test_set, const SweepPlan& plan, int n_classes)
{
    if (train_set.size() == 0 || test_set.size() == 0) throw EmptyInput("empty train or test split");
    ClassifierConfig cfg = plan.classifier;
    cfg.in_dim = static_cast<int>(train_set.features.front().cols());
    cfg.n_classes = n_classes;
    TrainConfig tc = plan.train;
    tc.seed = plan.seed;

    const auto trained = trait_probe::train(train_set, cfg, tc);
    const auto preds = predict_all(trained.model, test_set.features);
    std::vector<int> predicted;
    CellOutcome out;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        predicted.push_back(preds[i].label);
        out.correct.push_back(preds[i].label == test_set.labels[i] ? 1 : 0);
    }
    out.metrics = compute_metrics(test_set.labels, predicted, n_classes);
    return out;
}

namespace {

struct Cell {
    SystemSpec system;
    int layer = -1;
    std::optional<int> k;
    bool no_pca_control = false;
    std::size_t pca_group = 0;
};

struct CellResult {
    std::optional<CellOutcome> outcome;
    std::string error;
};

SweepRow make_row(const SweepPlan& plan, const std::string& hash, const Cell& cell, const CellResult& result)
{
    SweepRow row;
    row.dataset = plan.manifest.dataset_name;
    row.task = to_string(plan.task);
    row.model = cell.system.name();
    row.layer = cell.layer;
    row.k = cell.k;
    row.seed = plan.seed;
    row.config_hash = hash;
    if (result.outcome) {
        const auto& m = result.outcome->metrics;
        row.accuracy = m.accuracy;
        row.precision = m.precision;
        row.recall = m.recall;
        row.f1 = m.f1;
    } else {
        row.failed = true;
        row.error = result.error;
    }
    return row;
}

template <typename Fn>
CellResult guarded(Fn&& fn)
{
    CellResult r;
    try {
        r.outcome = fn();
    } catch (const Error& e) {
        r.error = e.what();
    }
    return r;
}

void annotate_references(SweepReport& report, Task task)
{
    const bool reduced = report.kind == SweepKind::pca;
    for (auto& row : report.rows) {
        if (!row.is_best) continue;
        if (auto ref = find_reference(report.dataset, task, reduced, row.model)) row.paper_ref_accuracy = ref->accuracy_pct / 100.0;
    }
}

// Wilcoxon comparisons of each model's best row against the MFCC baseline.
void compare_best_rows(SweepReport& report, const SweepPlan& plan, const std::vector<Cell>& cells,
                       const std::vector<CellResult>& results)
{
    std::optional<std::size_t> baseline;
    for (std::size_t i = 0; i < cells.size(); ++i)
        if (cells[i].system.source == FeatureSource::mfcc && results[i].outcome) baseline = i;
    if (!baseline) {
        if (plan.has_baseline()) report.warnings.push_back("baseline cell failed; no significance tests run");
        return;
    }

    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i].system.source == FeatureSource::mfcc || !report.rows[i].is_best || !results[i].outcome) continue;
        BaselineTest t;
        t.model = report.rows[i].model;
        t.layer = report.rows[i].layer;
        t.k = report.rows[i].k;
        BootstrapSpec spec = plan.bootstrap;
        spec.seed = derive_seed(plan.seed, 77);
        try {
            t.result = compare_to_baseline(results[*baseline].outcome->correct, results[i].outcome->correct, spec);
        } catch (const AllZeroDifferences&) {
            t.note = "no difference";
        } catch (const Error& e) {
            t.note = e.what();
        }
        report.baseline_tests.push_back(std::move(t));
    }
}

SweepReport assemble(SweepKind kind, const SweepPlan& plan, const std::vector<Cell>& cells,
                     const std::vector<CellResult>& results)
{
    SweepReport report;
    report.kind = kind;
    report.dataset = plan.manifest.dataset_name;
    report.task = to_string(plan.task);
    report.seed = plan.seed;
    report.config_text = plan.describe();
    report.config_hash = plan.config_hash();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        report.rows.push_back(make_row(plan, report.config_hash, cells[i], results[i]));
        if (!results[i].error.empty())
            report.warnings.push_back(report.rows.back().model + " layer " + std::to_string(cells[i].layer) +
                                      (cells[i].k ? " k " + std::to_string(*cells[i].k) : std::string()) + ": " +
                                      results[i].error);
    }
    mark_best_rows(report);
    annotate_references(report, plan.task);
    compare_best_rows(report, plan, cells, results);
    return report;
}

} // namespace

void mark_best_rows(SweepReport& report)
{
    std::map<std::string, std::size_t> best;
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        auto& row = report.rows[i];
        row.is_best = false;
        // The no-PCA reference row of a PCA sweep never competes.
        if (row.failed || (report.kind == SweepKind::pca && row.model != "mfcc" && !row.k)) continue;
        auto it = best.find(row.model);
        if (it == best.end()) {
            best.emplace(row.model, i);
            continue;
        }
        const auto& cur = report.rows[it->second];
        const int key = row.k.value_or(row.layer);
        const int cur_key = cur.k.value_or(cur.layer);
        if (row.accuracy > cur.accuracy || (row.accuracy == cur.accuracy && key < cur_key)) it->second = i;
    }
    for (const auto& [model, idx] : best) report.rows[idx].is_best = true;
}

SweepReport run_layer_sweep(const SweepPlan& plan)
{
    plan.validate();
    const TaskSpec task = make_task_spec(plan.task, plan.manifest.age_range);

    std::vector<Cell> cells;
    for (const auto& s : plan.systems)
        for (int layer : s.layers) cells.push_back({s, layer, std::nullopt, false, 0});

    // Missing features are a plan-level error, reported before any training.
    for (const auto& c : cells) {
        const auto filter = c.system.source == FeatureSource::mfcc ? StoreFilter::mfcc() : StoreFilter::ssl(c.system.model, c.layer);
        scan_store(plan.features_dir, plan.manifest, filter);
    }

    std::vector<CellResult> results(cells.size());
    parallel_for(cells.size(), plan.jobs, [&](std::size_t i) {
        const auto& c = cells[i];
        results[i] = guarded([&] {
            const auto base = c.system.source == FeatureSource::mfcc ? StoreFilter::mfcc() : StoreFilter::ssl(c.system.model, c.layer);
            auto train_filter = base, test_filter = base;
            train_filter.split = Split::train;
            test_filter.split = Split::test;
            const auto train_data = load_split(plan.features_dir, plan.manifest, train_filter, task);
            const auto test_data = load_split(plan.features_dir, plan.manifest, test_filter, task);
            return run_cell(train_data.set, test_data.set, plan, task.n_classes);
        });
    });
    return assemble(SweepKind::layers, plan, cells, results);
}

SweepReport run_pca_sweep(const SweepPlan& plan)
{
    plan.validate();
    if (!plan.pca || plan.pca->best_layers.empty()) throw ValidationError("PCA sweep needs best layers");
    const TaskSpec task = make_task_spec(plan.task, plan.manifest.age_range);

    struct Group {
        ModelId model;
        int layer;
        int dim;
        SplitData train, test;
        std::optional<PcaModel> pca;
        std::string error;
    };
    std::vector<Group> groups;
    std::vector<Cell> cells;
    std::vector<std::string> warnings;

    for (const auto& s : plan.systems)
        if (s.source == FeatureSource::mfcc) cells.push_back({s, -1, std::nullopt, false, 0});

    for (const auto& [model, layer] : plan.pca->best_layers) {
        const auto& ms = model_spec(model);
        std::vector<int> dims = plan.pca->dims;
        if (dims.empty()) {
            auto sweep = pca_sweep_dims(ms.dim);
            if (sweep.truncated) warnings.push_back(sweep.warning);
            dims = sweep.dims;
        }
        std::sort(dims.begin(), dims.end(), std::greater<>());
        dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
        dims.erase(std::remove(dims.begin(), dims.end(), ms.dim), dims.end());

        scan_store(plan.features_dir, plan.manifest, StoreFilter::ssl(model, layer));
        const std::size_t group = groups.size();
        groups.push_back({model, layer, ms.dim, {}, {}, std::nullopt, {}});
        SystemSpec system{FeatureSource::ssl, model, {layer}};
        cells.push_back({system, layer, std::nullopt, true, group});  // no-PCA reference
        cells.push_back({system, layer, ms.dim, false, group});       // full-rank rotation control
        for (int k : dims) cells.push_back({system, layer, k, false, group});
    }

    // Load each best layer once and fit PCA on its training frames.
    parallel_for(groups.size(), plan.jobs, [&](std::size_t g) {
        auto& grp = groups[g];
        try {
            grp.train = load_split(plan.features_dir, plan.manifest, StoreFilter::ssl(grp.model, grp.layer, Split::train), task);
            grp.test = load_split(plan.features_dir, plan.manifest, StoreFilter::ssl(grp.model, grp.layer, Split::test), task);
            grp.pca = fit_pca(grp.train.set.features, grp.dim, derive_seed(plan.seed, 300 + g), plan.pca->max_fit_frames);
            grp.pca->fitted_on = {to_string(grp.model), grp.layer, plan.manifest.dataset_name, grp.pca->fitted_on.n_frames};
        } catch (const Error& e) {
            grp.error = e.what();
        }
    });

    std::vector<CellResult> results(cells.size());
    parallel_for(cells.size(), plan.jobs, [&](std::size_t i) {
        const auto& c = cells[i];
        if (c.system.source == FeatureSource::mfcc) {
            results[i] = guarded([&] {
                const auto train_data = load_split(plan.features_dir, plan.manifest, StoreFilter::mfcc(Split::train), task);
                const auto test_data = load_split(plan.features_dir, plan.manifest, StoreFilter::mfcc(Split::test), task);
                return run_cell(train_data.set, test_data.set, plan, task.n_classes);
            });
            return;
        }
        const auto& grp = groups[c.pca_group];
        if (!grp.error.empty()) {
            results[i].error = grp.error;
            return;
        }
        results[i] = guarded([&] {
            if (c.no_pca_control) return run_cell(grp.train.set, grp.test.set, plan, task.n_classes);
            const PcaModel reduced = grp.pca->truncated(*c.k);
            auto project_set = [&](const LabeledSet& in) {
                LabeledSet out;
                out.labels = in.labels;
                for (const auto& f : in.features) out.features.push_back(project(reduced, f));
                return out;
            };
            return run_cell(project_set(grp.train.set), project_set(grp.test.set), plan, task.n_classes);
        });
    });

    auto report = assemble(SweepKind::pca, plan, cells, results);
    report.warnings.insert(report.warnings.begin(), warnings.begin(), warnings.end());
    return report;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

constexpr const char* kCsvHeader =
    "dataset,task,model,layer,k,accuracy,precision,recall,f1,is_best,paper_ref_accuracy,seed,config_hash";

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> parse_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

std::string metric(double v) { return format_fixed(v, 6); }

double parse_number(const std::string& s, const char* what)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw ParseError("");
        return v;
    } catch (const std::exception&) {
        throw ParseError(std::string("bad ") + what + " '" + s + "'");
    }
}

} // namespace

std::string format_report_csv(const SweepReport& report)
{
    std::ostringstream out;
    out << kCsvHeader << '\n';
    for (const auto& r : report.rows) {
        out << csv_field(r.dataset) << ',' << r.task << ',' << r.model << ',' << r.layer << ','
            << (r.k ? std::to_string(*r.k) : "") << ',';
        if (r.failed) out << ",,,,";
        else out << metric(r.accuracy) << ',' << metric(r.precision) << ',' << metric(r.recall) << ',' << metric(r.f1) << ',';
        out << (r.is_best ? 1 : 0) << ',' << (r.paper_ref_accuracy ? metric(*r.paper_ref_accuracy) : "") << ',' << r.seed
            << ',' << r.config_hash << '\n';
    }
    return out.str();
}

SweepReport parse_report_csv(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw ParseError("report CSV header mismatch");
    SweepReport report;
    bool any_pca = false;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = parse_csv_line(line);
        if (f.size() != 13) throw ParseError("line " + std::to_string(line_no) + ": expected 13 fields");
        SweepRow r;
        r.dataset = f[0];
        r.task = f[1];
        r.model = f[2];
        r.layer = static_cast<int>(parse_number(f[3], "layer"));
        if (!f[4].empty()) {
            r.k = static_cast<int>(parse_number(f[4], "k"));
            any_pca = true;
        }
        if (f[5].empty()) {
            r.failed = true;
        } else {
            r.accuracy = parse_number(f[5], "accuracy");
            r.precision = parse_number(f[6], "precision");
            r.recall = parse_number(f[7], "recall");
            r.f1 = parse_number(f[8], "f1");
        }
        r.is_best = f[9] == "1";
        if (!f[10].empty()) r.paper_ref_accuracy = parse_number(f[10], "paper_ref_accuracy");
        r.seed = std::stoull(f[11]);
        r.config_hash = f[12];
        report.rows.push_back(std::move(r));
    }
    if (report.rows.empty()) throw ParseError("report CSV has no rows");
    report.kind = any_pca ? SweepKind::pca : SweepKind::layers;
    report.dataset = report.rows.front().dataset;
    report.task = report.rows.front().task;
    report.seed = report.rows.front().seed;
    report.config_hash = report.rows.front().config_hash;
    return report;
}

std::string format_baseline_tests_csv(const SweepReport& report)
{
    std::ostringstream out;
    out << "dataset,task,model,layer,k,w_plus,w_minus,n_effective,p_value,method,note\n";
    for (const auto& t : report.baseline_tests) {
        out << csv_field(report.dataset) << ',' << report.task << ',' << t.model << ',' << t.layer << ','
            << (t.k ? std::to_string(*t.k) : "") << ',';
        if (t.result) {
            out << format_shortest(t.result->w_plus) << ',' << format_shortest(t.result->w_minus) << ','
                << t.result->n_effective << ',' << format_shortest(t.result->p_value) << ',' << to_string(t.result->method);
        } else {
            out << ",,,,";
        }
        out << ',' << csv_field(t.note) << '\n';
    }
    return out.str();
}

RenderedFiles render_report(const SweepReport& report, const std::filesystem::path& out_dir, const std::string& stem)
{
    if (report.rows.empty()) throw ValidationError("cannot render an empty report");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    RenderedFiles files;
    files.csv = out_dir / (stem + ".csv");
    write_text_file(files.csv, format_report_csv(report));
    files.tests_csv = out_dir / (stem + "_wilcoxon.csv");
    write_text_file(files.tests_csv, format_baseline_tests_csv(report));

    std::string slug;
    for (char c : report.dataset + "_" + report.task)
        slug += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
    const auto svg = out_dir / (stem + "_" + slug + ".svg");
    write_text_file(svg, render_svg(report));
    files.svgs.push_back(svg);
    return files;
}

} // namespace trait_probe
