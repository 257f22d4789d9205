#include "trait_probe/manifest.hpp"

#include "trait_probe/errors.hpp"
#include "trait_probe/util.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace trait_probe {

namespace {

constexpr const char* kMagicLine = "trait-probe-manifest v1";

int parse_int(std::string_view text, const std::string& what, std::size_t line_no)
{
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" +
                         std::string(text) + "'");
    }
    return value;
}

double parse_double(std::string_view text, const std::string& what, std::size_t line_no)
{
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
        throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" +
                         std::string(text) + "'");
    }
    return value;
}

} // namespace

const char* to_string(Gender g) { return g == Gender::male ? "m" : "f"; }
const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }
const char* to_string(Task t) { return t == Task::age ? "age" : "gender"; }

Task parse_task(const std::string& s)
{
    if (s == "age") return Task::age;
    if (s == "gender") return Task::gender;
    throw ParseError("unknown task '" + s + "' (expected age|gender)");
}

std::vector<const UtteranceEntry*> DatasetManifest::split_entries(Split s) const
{
    std::vector<const UtteranceEntry*> out;
    for (const auto& e : entries)
        if (e.split == s) out.push_back(&e);
    return out;
}

std::filesystem::path DatasetManifest::resolve_audio(const UtteranceEntry& e) const
{
    std::filesystem::path p(e.audio_path);
    if (p.is_absolute() || base_dir.empty()) return p;
    return base_dir / p;
}

int TaskSpec::label_of(const UtteranceEntry& e, const AgeRange& range) const
{
    if (task == Task::gender) return e.gender == Gender::male ? 0 : 1;
    return e.age_class - range.min_years;
}

TaskSpec make_task_spec(Task task, const AgeRange& range)
{
    TaskSpec spec;
    spec.task = task;
    if (task == Task::gender) {
        spec.class_labels = {"male", "female"};
    } else {
        for (int age = range.min_years; age <= range.max_years; ++age)
            spec.class_labels.push_back(std::to_string(age));
    }
    spec.n_classes = static_cast<int>(spec.class_labels.size());
    if (spec.n_classes < 2)
        throw ValidationError("task needs at least 2 classes, got " + std::to_string(spec.n_classes));
    return spec;
}

void validate(const DatasetManifest& m)
{
    if (m.age_range.min_years > m.age_range.max_years)
        throw ValidationError("age_min " + std::to_string(m.age_range.min_years) + " > age_max " +
                              std::to_string(m.age_range.max_years));
    if (m.entries.empty()) throw ValidationError("manifest has zero utterances");

    std::unordered_set<std::string> ids;
    std::unordered_map<std::string, Split> speaker_split;
    for (const auto& e : m.entries) {
        if (e.utterance_id.empty()) throw ValidationError("record with empty utterance id");
        if (!ids.insert(e.utterance_id).second)
            throw ValidationError("duplicate utterance id '" + e.utterance_id + "'");
        if (!m.age_range.contains(e.age_class))
            throw ValidationError("utterance '" + e.utterance_id + "': age " + std::to_string(e.age_class) +
                                  " outside range " + std::to_string(m.age_range.min_years) + "-" +
                                  std::to_string(m.age_range.max_years));
        if (!(e.duration_s >= 0.0) || !std::isfinite(e.duration_s))
            throw ValidationError("utterance '" + e.utterance_id + "': negative or non-finite duration");
        if (m.speaker_disjoint) {
            auto [it, inserted] = speaker_split.emplace(e.speaker_id, e.split);
            if (!inserted && it->second != e.split)
                throw ValidationError("utterance '" + e.utterance_id + "': speaker '" + e.speaker_id +
                                      "' appears in both train and test");
        }
    }
}

DatasetManifest parse_manifest(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;

    auto next_line = [&]() -> bool {
        if (!std::getline(in, line)) return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };

    if (!next_line() || line != kMagicLine)
        throw ParseError("line 1: expected '" + std::string(kMagicLine) + "'");

    DatasetManifest m;
    if (!next_line()) throw ParseError("line 2: missing dataset header");
    bool have_name = false, have_min = false, have_max = false, have_disjoint = false;
    for (const auto& field : split(line, ' ')) {
        if (field.empty()) continue;
        auto eq = field.find('=');
        if (eq == std::string::npos) throw ParseError("line 2: expected key=value, got '" + field + "'");
        std::string key = field.substr(0, eq);
        std::string value = field.substr(eq + 1);
        if (key == "dataset") {
            m.dataset_name = value;
            have_name = true;
        } else if (key == "age_min") {
            m.age_range.min_years = parse_int(value, "age_min", line_no);
            have_min = true;
        } else if (key == "age_max") {
            m.age_range.max_years = parse_int(value, "age_max", line_no);
            have_max = true;
        } else if (key == "speaker_disjoint") {
            if (value != "0" && value != "1") throw ParseError("line 2: speaker_disjoint must be 0 or 1");
            m.speaker_disjoint = value == "1";
            have_disjoint = true;
        } else {
            throw ParseError("line 2: unknown header key '" + key + "'");
        }
    }
    if (!have_name || !have_min || !have_max || !have_disjoint)
        throw ParseError("line 2: header needs dataset, age_min, age_max, speaker_disjoint");

    while (next_line()) {
        if (line.empty()) continue;
        auto fields = split(line, '\t');
        if (fields.size() != 7)
            throw ParseError("line " + std::to_string(line_no) + ": expected 7 tab-separated fields, got " +
                             std::to_string(fields.size()));
        UtteranceEntry e;
        e.utterance_id = fields[0];
        e.speaker_id = fields[1];
        e.audio_path = fields[2];
        e.age_class = parse_int(fields[3], "age", line_no);
        if (fields[4] == "m") e.gender = Gender::male;
        else if (fields[4] == "f") e.gender = Gender::female;
        else throw ParseError("line " + std::to_string(line_no) + ": gender must be m|f, got '" + fields[4] + "'");
        if (fields[5] == "train") e.split = Split::train;
        else if (fields[5] == "test") e.split = Split::test;
        else throw ParseError("line " + std::to_string(line_no) + ": split must be train|test, got '" + fields[5] + "'");
        e.duration_s = parse_double(fields[6], "duration", line_no);
        m.entries.push_back(std::move(e));
    }

    validate(m);
    return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    DatasetManifest m = parse_manifest(buf.str());
    m.base_dir = path.parent_path();
    return m;
}

std::string format_manifest(const DatasetManifest& m)
{
    std::ostringstream out;
    out << kMagicLine << '\n';
    out << "dataset=" << m.dataset_name << " age_min=" << m.age_range.min_years
        << " age_max=" << m.age_range.max_years << " speaker_disjoint=" << (m.speaker_disjoint ? 1 : 0) << '\n';
    for (const auto& e : m.entries) {
        out << e.utterance_id << '\t' << e.speaker_id << '\t' << e.audio_path << '\t' << e.age_class << '\t'
            << to_string(e.gender) << '\t' << to_string(e.split) << '\t' << format_shortest(e.duration_s) << '\n';
    }
    return out.str();
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path)
{
    validate(m);
    write_text_file(path, format_manifest(m));
}

SummaryTable summarize(const DatasetManifest& m)
{
    struct Tally {
        std::set<std::string> male, female;
        int utterances = 0;
        long long micros = 0;
    } tallies[2];

    for (const auto& e : m.entries) {
        auto& t = tallies[e.split == Split::train ? 0 : 1];
        ++t.utterances;
        (e.gender == Gender::male ? t.male : t.female).insert(e.speaker_id);
        // Integer accumulation keeps the total independent of entry order.
        t.micros += std::llround(e.duration_s * 1e6);
    }

    auto to_summary = [](const Tally& t) {
        SplitSummary s;
        s.utterances = t.utterances;
        s.male_speakers = static_cast<int>(t.male.size());
        s.female_speakers = static_cast<int>(t.female.size());
        s.total_duration_s = static_cast<double>(t.micros) / 1e6;
        return s;
    };
    return {to_summary(tallies[0]), to_summary(tallies[1])};
}

} // namespace trait_probe
