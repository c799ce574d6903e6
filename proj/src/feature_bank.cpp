#include "lstc/feature_bank.hpp"

#include <algorithm>
#include <ostream>

#include <json.hpp>

#include "lstc/binio.hpp"
#include "lstc/errors.hpp"

namespace lstc {

FeatureBank::FeatureBank(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw ConfigError("feature bank: dim must be >= 1");
}

std::size_t FeatureBank::record_count() const {
    std::size_t n = 0;
    for (const auto& [_, timeline] : videos_) n += timeline.size();
    return n;
}

void FeatureBank::insert(const BankRecord& record) {
    if (record.feats.rows() > 0 && record.feats.cols() != dim_) {
        throw DimensionError("bank insert: record dim " + std::to_string(record.feats.cols()) +
                             " vs bank dim " + std::to_string(dim_));
    }
    BankRecord rec = record;
    if (rec.feats.rows() == 0) rec.feats = Matrix(0, dim_);
    auto& timeline = videos_[rec.video_id];
    auto it = std::lower_bound(timeline.begin(), timeline.end(), rec.timestamp_s,
                               [](const BankRecord& r, std::int64_t t) { return r.timestamp_s < t; });
    if (it != timeline.end() && it->timestamp_s == rec.timestamp_s) {
        *it = std::move(rec);
    } else {
        timeline.insert(it, std::move(rec));
    }
}

FeatureWindow FeatureBank::query_window(const std::string& video_id, std::int64_t t,
                                        const WindowSpec& spec) const {
    if (spec.radius_s < 0) throw ConfigError("query_window: radius_s must be >= 0");
    FeatureWindow w;
    auto vit = videos_.find(video_id);
    if (vit == videos_.end()) {
        w.ctx = Matrix(0, dim_);
        return w;
    }
    std::vector<const BankRecord*> hits;
    std::size_t rows = 0;
    for (const BankRecord& r : vit->second) {
        if (r.timestamp_s < t - spec.radius_s || r.timestamp_s > t + spec.radius_s) continue;
        if (!spec.include_center && r.timestamp_s == t) continue;
        hits.push_back(&r);
        rows += r.feats.rows();
    }
    w.ctx = Matrix(rows, dim_);
    w.source_timestamps.reserve(rows);
    std::size_t at = 0;
    for (const BankRecord* r : hits) {
        for (std::size_t i = 0; i < r->feats.rows(); ++i, ++at) {
            std::copy(r->feats.row(i).begin(), r->feats.row(i).end(), w.ctx.row(at).begin());
            w.source_timestamps.push_back(r->timestamp_s);
        }
    }
    return w;
}

void FeatureBank::save(const std::string& path) const {
    BinWriter w;
    w.bytes("LFB1", 4);
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(dim_));
    w.u32(static_cast<std::uint32_t>(videos_.size()));
    for (const auto& [name, timeline] : videos_) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(timeline.size()));
        for (const BankRecord& r : timeline) {
            w.i64(r.timestamp_s);
            w.u32(static_cast<std::uint32_t>(r.feats.rows()));
            for (double v : r.feats.data()) w.f64(v);
        }
    }
    w.to_file(path);
}

FeatureBank FeatureBank::load(const std::string& path) {
    BinReader r = BinReader::from_file(path);
    r.expect_magic("LFB1");
    const std::uint32_t version = r.u32("version");
    if (version != 1) {
        throw FormatError("unsupported bank version " + std::to_string(version), r.offset() - 4);
    }
    const std::uint32_t dim = r.u32("dim");
    if (dim == 0) throw FormatError("bank dim must be >= 1", r.offset() - 4);
    FeatureBank bank(dim);
    const std::uint32_t n_videos = r.u32("video count");
    for (std::uint32_t vi = 0; vi < n_videos; ++vi) {
        const std::string name = r.str("video name");
        const std::uint32_t n_records = r.u32("record count");
        std::vector<BankRecord> timeline;
        timeline.reserve(n_records);
        for (std::uint32_t ri = 0; ri < n_records; ++ri) {
            BankRecord rec;
            rec.video_id = name;
            rec.timestamp_s = r.i64("timestamp");
            const std::uint32_t n_rows = r.u32("row count");
            rec.feats = Matrix(n_rows, dim);
            for (double& v : rec.feats.data()) v = r.f64("feature value");
            if (!timeline.empty() && timeline.back().timestamp_s >= rec.timestamp_s) {
                throw FormatError("bank timeline not strictly ascending", r.offset());
            }
            timeline.push_back(std::move(rec));
        }
        bank.videos_[name] = std::move(timeline);
    }
    r.expect_end("bank payload");
    return bank;
}

void FeatureBank::export_ndjson(std::ostream& out) const {
    // Inspection-only export; doubles go through decimal text and are not
    // guaranteed to roundtrip bit-exactly.
    for (const auto& [name, timeline] : videos_) {
        for (const BankRecord& r : timeline) {
            nlohmann::json j;
            j["video_id"] = name;
            j["timestamp_s"] = r.timestamp_s;
            j["rows"] = r.feats.rows();
            j["dim"] = dim_;
            nlohmann::json feats = nlohmann::json::array();
            for (std::size_t i = 0; i < r.feats.rows(); ++i) {
                nlohmann::json row = nlohmann::json::array();
                for (double v : r.feats.row(i)) row.push_back(v);
                feats.push_back(std::move(row));
            }
            j["feats"] = std::move(feats);
            out << j.dump() << "\n";
        }
    }
}

void FeatureBank::inspect(std::ostream& out) const {
    out << "dim " << dim_ << ", videos " << videos_.size() << ", records " << record_count()
        << "\n";
    for (const auto& [name, timeline] : videos_) {
        std::size_t rows = 0;
        for (const BankRecord& r : timeline) rows += r.feats.rows();
        out << "  " << name << ": " << timeline.size() << " records, " << rows << " actor rows";
        if (!timeline.empty()) {
            out << ", t in [" << timeline.front().timestamp_s << ", "
                << timeline.back().timestamp_s << "]";
        }
        out << "\n";
    }
}

bool FeatureBank::operator==(const FeatureBank& other) const {
    if (dim_ != other.dim_ || videos_.size() != other.videos_.size()) return false;
    for (auto it = videos_.begin(), jt = other.videos_.begin(); it != videos_.end(); ++it, ++jt) {
        if (it->first != jt->first || it->second.size() != jt->second.size()) return false;
        for (std::size_t i = 0; i < it->second.size(); ++i) {
            const BankRecord& a = it->second[i];
            const BankRecord& b = jt->second[i];
            if (a.timestamp_s != b.timestamp_s || !(a.feats == b.feats)) return false;
        }
    }
    return true;
}

} // namespace lstc
