#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lstc/feature_window.hpp"
#include "lstc/matrix.hpp"

namespace lstc {

struct BankRecord {
    std::string video_id;
    std::int64_t timestamp_s = 0;
    Matrix feats; // N_t x d, N_t may be 0
};

struct WindowSpec {
    std::int64_t radius_s = 8;
    bool include_center = false;
};

// Time-indexed store of per-clip actor features. Concurrency contract:
// any number of concurrent readers, or one exclusive writer, never both.
// query_window copies rows out, so readers never alias bank storage.
class FeatureBank {
  public:
    explicit FeatureBank(std::size_t dim);

    std::size_t dim() const { return dim_; }
    std::size_t video_count() const { return videos_.size(); }
    std::size_t record_count() const;

    void insert(const BankRecord& record);
    FeatureWindow query_window(const std::string& video_id, std::int64_t t,
                               const WindowSpec& spec) const;

    void save(const std::string& path) const;
    static FeatureBank load(const std::string& path);
    void export_ndjson(std::ostream& out) const;
    void inspect(std::ostream& out) const;

    const std::map<std::string, std::vector<BankRecord>>& videos() const { return videos_; }

    bool operator==(const FeatureBank& other) const;

  private:
    std::size_t dim_;
    // timeline per video, sorted strictly ascending by timestamp
    std::map<std::string, std::vector<BankRecord>> videos_;
};

} // namespace lstc
