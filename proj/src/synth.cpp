#include "lstc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "lstc/binio.hpp"
#include "lstc/rng.hpp"

namespace lstc {

namespace {

constexpr double kIdentityAmp = 3.0;
constexpr double kPatternAmp = 3.0;
constexpr double kRingFactor = 0.5;
constexpr double kLocalRate = 0.4;
constexpr std::size_t kResidents = 3;

Matrix unit_rows(std::size_t n, std::size_t d, double amp, Rng& rng) {
    Matrix m = rng.normal_matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (double v : m.row(i)) norm += v * v;
        norm = std::sqrt(norm);
        for (double& v : m.row(i)) v = v / norm * amp;
    }
    return m;
}

// Cells whose centers fall inside the box; falls back to the nearest cell
// so every box reads at least one cell (mirrors the ROI pooling rule).
std::vector<std::pair<std::size_t, std::size_t>> cells_in_box(std::size_t h, std::size_t w,
                                                              const Box& b) {
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (std::size_t i = 0; i < h; ++i) {
        const double cy = (static_cast<double>(i) + 0.5) / static_cast<double>(h);
        for (std::size_t j = 0; j < w; ++j) {
            const double cx = (static_cast<double>(j) + 0.5) / static_cast<double>(w);
            if (cx >= b.x1 && cx <= b.x2 && cy >= b.y1 && cy <= b.y2) cells.emplace_back(i, j);
        }
    }
    if (cells.empty()) {
        const double bx = 0.5 * (b.x1 + b.x2), by = 0.5 * (b.y1 + b.y2);
        double best = 1e300;
        std::pair<std::size_t, std::size_t> arg{0, 0};
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                const double cy = (static_cast<double>(i) + 0.5) / static_cast<double>(h);
                const double cx = (static_cast<double>(j) + 0.5) / static_cast<double>(w);
                const double dist = (cx - bx) * (cx - bx) + (cy - by) * (cy - by);
                if (dist < best) {
                    best = dist;
                    arg = {i, j};
                }
            }
        }
        cells.push_back(arg);
    }
    return cells;
}

void add_to_cells(ClipFeatureMap& x, const std::vector<std::pair<std::size_t, std::size_t>>& cells,
                  std::span<const double> vec, double factor) {
    for (std::size_t ti = 0; ti < x.grid.t; ++ti) {
        for (auto [i, j] : cells) {
            auto row = x.x.row(x.cell_index(ti, i, j));
            for (std::size_t kdim = 0; kdim < vec.size(); ++kdim) row[kdim] += factor * vec[kdim];
        }
    }
}

} // namespace

void SynthConfig::validate() const {
    if (n_videos < 1 || clips_per_video < 1) {
        throw ConfigError("synth: n_videos and clips_per_video must be >= 1");
    }
    if (h < 1 || w < 1 || t < 1) throw ConfigError("synth: grid dims must be >= 1");
    if (d < 1) throw ConfigError("synth: d must be >= 1");
    if (classes() < 1) throw ConfigError("synth: c_local + c_longterm must be >= 1");
    if (actors_min < 1 || actors_min > actors_max) {
        throw ConfigError("synth: actors_per_clip range must satisfy 1 <= min <= max");
    }
    if (!(noise_sigma >= 0.0)) throw ConfigError("synth: noise_sigma must be >= 0");
    if (c_longterm >= 1 && clips_per_video == 1) {
        throw ConfigError("synth: long-term classes need clips_per_video >= 2");
    }
}

SynthConfig parse_synth_config(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("synth config: invalid JSON: ") + e.what());
    }
    SynthConfig cfg;
    try {
        cfg.n_videos = j.at("n_videos").get<std::size_t>();
        cfg.clips_per_video = j.at("clips_per_video").get<std::size_t>();
        cfg.h = j.at("grid").at("h").get<std::size_t>();
        cfg.w = j.at("grid").at("w").get<std::size_t>();
        cfg.t = j.at("grid").at("t").get<std::size_t>();
        cfg.d = j.at("d").get<std::size_t>();
        cfg.c_local = j.at("c_local").get<std::size_t>();
        cfg.c_longterm = j.at("c_longterm").get<std::size_t>();
        if (j.contains("actors_per_clip")) {
            const auto& r = j.at("actors_per_clip");
            if (!r.is_array() || r.size() != 2) {
                throw ConfigError("synth config: actors_per_clip must be [min, max]");
            }
            cfg.actors_min = r[0].get<std::size_t>();
            cfg.actors_max = r[1].get<std::size_t>();
        }
        if (j.contains("noise_sigma")) cfg.noise_sigma = j.at("noise_sigma").get<double>();
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("synth config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

SynthConfig load_synth_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open synth config: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_synth_config(text);
}

std::string synth_config_json(const SynthConfig& cfg) {
    nlohmann::json j;
    j["n_videos"] = cfg.n_videos;
    j["clips_per_video"] = cfg.clips_per_video;
    j["grid"] = {{"h", cfg.h}, {"w", cfg.w}, {"t", cfg.t}};
    j["d"] = cfg.d;
    j["c_local"] = cfg.c_local;
    j["c_longterm"] = cfg.c_longterm;
    j["actors_per_clip"] = {cfg.actors_min, cfg.actors_max};
    j["noise_sigma"] = cfg.noise_sigma;
    j["seed"] = cfg.seed;
    return j.dump(2) + "\n";
}

SynthDataset synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    SynthDataset ds;
    ds.cfg = cfg;

    // Identity layout: ids [0, c_longterm) are partner identities that only
    // ever appear through the partner schedule below; the rest are fillers
    // from which residents and visitors are drawn. Keeping the ranges
    // disjoint stops partner sightings inside a clip from doubling as
    // recurring-cast evidence.
    const std::size_t pool = std::max<std::size_t>(2 * cfg.c_longterm + 4, 8);
    const Matrix identity_vecs = unit_rows(pool, cfg.d, kIdentityAmp, rng);
    const Matrix pattern_vecs = unit_rows(std::max<std::size_t>(cfg.c_local, 1), cfg.d,
                                          kPatternAmp, rng);
    const std::size_t fillers = pool - cfg.c_longterm;
    const std::size_t n_res = std::min(kResidents, fillers - 1);

    for (std::size_t vi = 0; vi < cfg.n_videos; ++vi) {
        const std::string video_id = "video" + std::to_string(vi);

        // Cast plan: a few resident identities recur across clips, other
        // fillers supply one-clip visitors, and each partner identity shows
        // up in at most one clip of the video (coin flip).
        auto residents = rng.sample_without_replacement(fillers, n_res);
        for (std::size_t& id : residents) id += cfg.c_longterm;
        std::vector<std::size_t> visitors;
        for (std::size_t p = cfg.c_longterm; p < pool; ++p) {
            if (std::find(residents.begin(), residents.end(), p) == residents.end()) {
                visitors.push_back(p);
            }
        }
        for (std::size_t i = visitors.size(); i > 1; --i) {
            std::swap(visitors[i - 1], visitors[rng.below(i)]);
        }

        constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);
        std::vector<std::size_t> partner_clip(cfg.c_longterm, kAbsent);
        for (std::size_t j = 0; j < cfg.c_longterm; ++j) {
            if (rng.uniform() < 0.5) partner_clip[j] = rng.below(cfg.clips_per_video);
        }

        std::vector<std::size_t> n_actors(cfg.clips_per_video);
        for (std::size_t ci = 0; ci < cfg.clips_per_video; ++ci) {
            n_actors[ci] = cfg.actors_min + rng.below(cfg.actors_max - cfg.actors_min + 1);
        }

        // Partners claim their slots first, capped so at least one filler
        // slot stays free per clip; a partner crowded out simply never
        // appears (the honest label computation below absorbs it).
        std::vector<std::vector<std::size_t>> casts(cfg.clips_per_video);
        for (std::size_t j = 0; j < cfg.c_longterm; ++j) {
            const std::size_t ci = partner_clip[j];
            if (ci == kAbsent) continue;
            if (casts[ci].size() + 1 >= n_actors[ci]) continue;
            casts[ci].push_back(j);
        }

        std::vector<std::size_t> want_res(cfg.clips_per_video);
        std::size_t resident_slots = 0;
        for (std::size_t ci = 0; ci < cfg.clips_per_video; ++ci) {
            const std::size_t room = n_actors[ci] - casts[ci].size();
            want_res[ci] = std::min<std::size_t>(room, std::min<std::size_t>(1 + rng.below(2), n_res));
            resident_slots += want_res[ci];
        }
        // Deal residents from an evenly balanced, shuffled multiset so each
        // one recurs; a stray single appearance is handled by the honest
        // label computation below.
        std::vector<std::size_t> deck;
        for (std::size_t s = 0; s < resident_slots; ++s) deck.push_back(residents[s % n_res]);
        for (std::size_t i = deck.size(); i > 1; --i) {
            std::swap(deck[i - 1], deck[rng.below(i)]);
        }

        std::size_t deck_at = 0, visitor_at = 0;
        for (std::size_t ci = 0; ci < cfg.clips_per_video; ++ci) {
            auto& cast = casts[ci];
            for (std::size_t s = 0; s < want_res[ci]; ++s) {
                std::size_t pick = deck[deck_at];
                if (std::find(cast.begin(), cast.end(), pick) != cast.end()) {
                    std::size_t swap_at = deck_at + 1;
                    while (swap_at < deck.size() &&
                           std::find(cast.begin(), cast.end(), deck[swap_at]) != cast.end()) {
                        ++swap_at;
                    }
                    if (swap_at == deck.size()) {
                        ++deck_at;
                        continue; // cannot deal a distinct resident, leave the slot to a visitor
                    }
                    std::swap(deck[deck_at], deck[swap_at]);
                    pick = deck[deck_at];
                }
                cast.push_back(pick);
                ++deck_at;
            }
            while (cast.size() < n_actors[ci]) {
                std::size_t tries = 0;
                std::size_t pick;
                do {
                    pick = visitors[visitor_at % visitors.size()];
                    ++visitor_at;
                    ++tries;
                } while (std::find(cast.begin(), cast.end(), pick) != cast.end() &&
                         tries < visitors.size());
                if (std::find(cast.begin(), cast.end(), pick) != cast.end()) break;
                cast.push_back(pick);
            }
        }

        // Appearance map drives the long-term labels.
        std::vector<std::vector<std::size_t>> appears(pool);
        for (std::size_t ci = 0; ci < cfg.clips_per_video; ++ci) {
            for (std::size_t id : casts[ci]) appears[id].push_back(ci);
        }
        auto present_elsewhere = [&](std::size_t id, std::size_t ci) {
            for (std::size_t at : appears[id]) {
                if (at != ci) return true;
            }
            return false;
        };

        for (std::size_t ci = 0; ci < cfg.clips_per_video; ++ci) {
            const auto& cast = casts[ci];
            const std::size_t n = cast.size();
            SynthClip clip;
            clip.video_id = video_id;
            clip.timestamp_s = static_cast<std::int64_t>(ci);

            // Non-overlapping boxes from a shuffled slot grid.
            const std::size_t slots = static_cast<std::size_t>(
                std::ceil(std::sqrt(static_cast<double>(n))));
            auto slot_ids = rng.sample_without_replacement(slots * slots, n);
            for (std::size_t a = 0; a < n; ++a) {
                const double si = static_cast<double>(slot_ids[a] / slots);
                const double sj = static_cast<double>(slot_ids[a] % slots);
                const double m = static_cast<double>(slots);
                Box b{(sj + rng.uniform(0.06, 0.18)) / m, (si + rng.uniform(0.06, 0.18)) / m,
                      (sj + 1.0 - rng.uniform(0.06, 0.18)) / m,
                      (si + 1.0 - rng.uniform(0.06, 0.18)) / m};
                b.validate();
                clip.boxes.push_back(b);
                clip.identities.push_back(static_cast<std::uint32_t>(cast[a]));
            }

            GridDims grid{cfg.h, cfg.w, cfg.t};
            Matrix base(grid.cells(), cfg.d);
            if (cfg.noise_sigma > 0.0) base = rng.normal_matrix(grid.cells(), cfg.d, cfg.noise_sigma);
            clip.x = ClipFeatureMap(grid, cfg.d, std::move(base));

            clip.labels = Matrix(n, cfg.classes());
            std::vector<std::vector<std::pair<std::size_t, std::size_t>>> actor_cells(n);
            for (std::size_t a = 0; a < n; ++a) {
                actor_cells[a] = cells_in_box(cfg.h, cfg.w, clip.boxes[a]);
            }
            std::set<std::pair<std::size_t, std::size_t>> occupied;
            for (const auto& cells : actor_cells) {
                occupied.insert(cells.begin(), cells.end());
            }

            for (std::size_t a = 0; a < n; ++a) {
                add_to_cells(clip.x, actor_cells[a], identity_vecs.row(cast[a]), 1.0);

                for (std::size_t cl = 0; cl < cfg.c_local; ++cl) {
                    if (rng.uniform() >= kLocalRate) continue;
                    clip.labels(a, cl) = 1.0;
                    add_to_cells(clip.x, actor_cells[a], pattern_vecs.row(cl), 1.0);
                    // half-amplitude spill into free neighboring cells
                    std::set<std::pair<std::size_t, std::size_t>> ring;
                    for (auto [i, j] : actor_cells[a]) {
                        for (int di = -1; di <= 1; ++di) {
                            for (int dj = -1; dj <= 1; ++dj) {
                                const long ri = static_cast<long>(i) + di;
                                const long rj = static_cast<long>(j) + dj;
                                if (ri < 0 || rj < 0 || ri >= static_cast<long>(cfg.h) ||
                                    rj >= static_cast<long>(cfg.w)) {
                                    continue;
                                }
                                std::pair<std::size_t, std::size_t> cell{
                                    static_cast<std::size_t>(ri), static_cast<std::size_t>(rj)};
                                if (!occupied.count(cell)) ring.insert(cell);
                            }
                        }
                    }
                    add_to_cells(clip.x,
                                 std::vector<std::pair<std::size_t, std::size_t>>(ring.begin(),
                                                                                  ring.end()),
                                 pattern_vecs.row(cl), kRingFactor);
                }

                // Long-term class j is positive iff this actor's identity
                // recurs in a neighboring clip AND partner identity j does.
                for (std::size_t j = 0; j < cfg.c_longterm; ++j) {
                    const bool recur = present_elsewhere(cast[a], ci);
                    const bool partner = present_elsewhere(j, ci);
                    clip.labels(a, cfg.c_local + j) = (recur && partner) ? 1.0 : 0.0;
                }
            }
            ds.clips.push_back(std::move(clip));
        }
    }
    return ds;
}

std::vector<GroundTruthRecord> dataset_ground_truth(const SynthDataset& ds) {
    std::vector<GroundTruthRecord> out;
    for (const auto& clip : ds.clips) {
        for (std::size_t a = 0; a < clip.boxes.size(); ++a) {
            for (std::size_t cl = 0; cl < ds.classes(); ++cl) {
                if (clip.labels(a, cl) == 1.0) {
                    out.push_back({clip.video_id, clip.timestamp_s, clip.boxes[a],
                                   static_cast<int>(cl)});
                }
            }
        }
    }
    return out;
}

bool SynthDataset::operator==(const SynthDataset& other) const {
    if (clips.size() != other.clips.size()) return false;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const SynthClip& a = clips[i];
        const SynthClip& b = other.clips[i];
        if (a.video_id != b.video_id || a.timestamp_s != b.timestamp_s ||
            !(a.x.grid == b.x.grid) || !(a.x.x == b.x.x) || a.boxes != b.boxes ||
            a.identities != b.identities || !(a.labels == b.labels)) {
            return false;
        }
    }
    return true;
}

void save_dataset(const SynthDataset& ds, const std::string& path) {
    BinWriter w;
    w.bytes("LSD1", 4);
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(ds.cfg.n_videos));
    w.u32(static_cast<std::uint32_t>(ds.cfg.clips_per_video));
    w.u32(static_cast<std::uint32_t>(ds.cfg.h));
    w.u32(static_cast<std::uint32_t>(ds.cfg.w));
    w.u32(static_cast<std::uint32_t>(ds.cfg.t));
    w.u32(static_cast<std::uint32_t>(ds.cfg.d));
    w.u32(static_cast<std::uint32_t>(ds.cfg.c_local));
    w.u32(static_cast<std::uint32_t>(ds.cfg.c_longterm));
    w.u32(static_cast<std::uint32_t>(ds.cfg.actors_min));
    w.u32(static_cast<std::uint32_t>(ds.cfg.actors_max));
    w.f64(ds.cfg.noise_sigma);
    w.i64(static_cast<std::int64_t>(ds.cfg.seed));
    w.u32(static_cast<std::uint32_t>(ds.clips.size()));
    for (const SynthClip& clip : ds.clips) {
        w.str(clip.video_id);
        w.i64(clip.timestamp_s);
        for (double v : clip.x.x.data()) w.f64(v);
        w.u32(static_cast<std::uint32_t>(clip.boxes.size()));
        for (std::size_t a = 0; a < clip.boxes.size(); ++a) {
            const Box& b = clip.boxes[a];
            w.f64(b.x1);
            w.f64(b.y1);
            w.f64(b.x2);
            w.f64(b.y2);
            w.u32(clip.identities[a]);
            for (std::size_t cl = 0; cl < ds.classes(); ++cl) w.f64(clip.labels(a, cl));
        }
    }
    w.to_file(path);
}

SynthDataset load_dataset(const std::string& path) {
    BinReader r = BinReader::from_file(path);
    r.expect_magic("LSD1");
    const std::uint32_t version = r.u32("version");
    if (version != 1) {
        throw FormatError("unsupported dataset version " + std::to_string(version),
                          r.offset() - 4);
    }
    SynthDataset ds;
    ds.cfg.n_videos = r.u32("n_videos");
    ds.cfg.clips_per_video = r.u32("clips_per_video");
    ds.cfg.h = r.u32("grid h");
    ds.cfg.w = r.u32("grid w");
    ds.cfg.t = r.u32("grid t");
    ds.cfg.d = r.u32("d");
    ds.cfg.c_local = r.u32("c_local");
    ds.cfg.c_longterm = r.u32("c_longterm");
    ds.cfg.actors_min = r.u32("actors_min");
    ds.cfg.actors_max = r.u32("actors_max");
    ds.cfg.noise_sigma = r.f64("noise_sigma");
    ds.cfg.seed = static_cast<std::uint64_t>(r.i64("seed"));
    try {
        ds.cfg.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid dataset config: ") + e.what(), 8);
    }
    const std::uint32_t n_clips = r.u32("clip count");
    GridDims grid{ds.cfg.h, ds.cfg.w, ds.cfg.t};
    for (std::uint32_t ci = 0; ci < n_clips; ++ci) {
        SynthClip clip;
        clip.video_id = r.str("video id");
        clip.timestamp_s = r.i64("timestamp");
        Matrix x(grid.cells(), ds.cfg.d);
        for (double& v : x.data()) {
            const std::size_t at = r.offset();
            v = r.f64("feature value");
            if (!std::isfinite(v)) throw FormatError("non-finite feature value", at);
        }
        clip.x = ClipFeatureMap(grid, ds.cfg.d, std::move(x));
        const std::uint32_t n = r.u32("actor count");
        clip.labels = Matrix(n, ds.cfg.classes());
        for (std::uint32_t a = 0; a < n; ++a) {
            const std::size_t at = r.offset();
            Box b{r.f64("box x1"), r.f64("box y1"), r.f64("box x2"), r.f64("box y2")};
            try {
                b.validate();
            } catch (const ConfigError& e) {
                throw FormatError(e.what(), at);
            }
            clip.boxes.push_back(b);
            clip.identities.push_back(r.u32("identity"));
            for (std::size_t cl = 0; cl < ds.classes(); ++cl) {
                const std::size_t lat = r.offset();
                const double v = r.f64("label");
                if (v != 0.0 && v != 1.0) throw FormatError("label must be 0 or 1", lat);
                clip.labels(a, cl) = v;
            }
        }
        ds.clips.push_back(std::move(clip));
    }
    r.expect_end("dataset payload");
    return ds;
}

} // namespace lstc
