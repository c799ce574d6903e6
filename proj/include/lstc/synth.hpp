#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lstc/eval.hpp"
#include "lstc/short_term.hpp"

namespace lstc {

struct SynthConfig {
    std::size_t n_videos = 4;
    std::size_t clips_per_video = 6;
    std::size_t h = 4, w = 4, t = 2;
    std::size_t d = 16;
    std::size_t c_local = 4;
    std::size_t c_longterm = 4;
    std::size_t actors_min = 2;
    std::size_t actors_max = 3;
    double noise_sigma = 0.05;
    std::uint64_t seed = 0;

    std::size_t classes() const { return c_local + c_longterm; }
    void validate() const;
};

SynthConfig parse_synth_config(const std::string& json_text);
SynthConfig load_synth_config(const std::string& path);
std::string synth_config_json(const SynthConfig& cfg);

struct SynthClip {
    std::string video_id;
    std::int64_t timestamp_s = 0;
    ClipFeatureMap x;
    std::vector<Box> boxes;
    std::vector<std::uint32_t> identities; // per actor, for diagnostics
    Matrix labels;                         // N x (c_local + c_longterm), {0,1}
};

struct SynthDataset {
    SynthConfig cfg;
    std::vector<SynthClip> clips;

    std::size_t classes() const { return cfg.classes(); }
    bool operator==(const SynthDataset& other) const;
};

// Deterministic under cfg.seed. Local classes are decodable from the clip's
// own grid (pattern vectors injected at the actor's cells); long-term
// classes depend on identity co-occurrence across neighboring clips of the
// same video and are invisible within a single clip.
SynthDataset synth_generate(const SynthConfig& cfg);

std::vector<GroundTruthRecord> dataset_ground_truth(const SynthDataset& ds);

void save_dataset(const SynthDataset& ds, const std::string& path);
SynthDataset load_dataset(const std::string& path);

} // namespace lstc
