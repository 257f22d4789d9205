#pragma once

#include "trait_probe/manifest.hpp"

#include <filesystem>
#include <string>
#include <unistd.h>

namespace fixtures {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
        : path_(std::filesystem::temp_directory_path() /
                ("trait_probe_" + tag + "_" + std::to_string(::getpid())))
    {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
    std::filesystem::path path_;
};

inline trait_probe::UtteranceEntry entry(std::string id, std::string speaker, int age, trait_probe::Gender g,
                                         trait_probe::Split s, double dur = 1.0)
{
    trait_probe::UtteranceEntry e;
    e.utterance_id = std::move(id);
    e.speaker_id = std::move(speaker);
    e.audio_path = "audio/" + e.utterance_id + ".wav";
    e.age_class = age;
    e.gender = g;
    e.split = s;
    e.duration_s = dur;
    return e;
}

// Manifest with `train` + `test` records spread over 4-14 year olds.
inline trait_probe::DatasetManifest shaped_manifest(const std::string& name, int train, int test, int min_age,
                                                    int max_age)
{
    using namespace trait_probe;
    DatasetManifest m;
    m.dataset_name = name;
    m.age_range = {min_age, max_age};
    m.speaker_disjoint = true;
    const int span = max_age - min_age + 1;
    for (int i = 0; i < train + test; ++i) {
        const bool is_test = i >= train;
        const std::string spk = (is_test ? "te" : "tr") + std::to_string(i % 40);
        m.entries.push_back(entry("u" + std::to_string(100000 + i), spk, min_age + (i % 40) % span,
                                  (i % 40) % 2 ? Gender::female : Gender::male, is_test ? Split::test : Split::train,
                                  2.5));
    }
    return m;
}

} // namespace fixtures
