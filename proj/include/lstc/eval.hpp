#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lstc/box.hpp"

namespace lstc {

struct DetectionRecord {
    std::string video_id;
    std::int64_t timestamp_s = 0;
    Box box;
    int class_id = 0;
    double score = 1.0;
};

struct GroundTruthRecord {
    std::string video_id;
    std::int64_t timestamp_s = 0;
    Box box;
    int class_id = 0;
};

struct ClassAp {
    double ap = 0.0;
    std::size_t matched = 0;   // true positives
    std::size_t unmatched = 0; // false positives
    std::size_t gt = 0;
};

struct APResult {
    std::map<int, double> per_class_ap;
    double map_value = 0.0;
    std::size_t matched = 0;
    std::size_t unmatched = 0;
    std::size_t gt_total = 0;
};

double iou(const Box& a, const Box& b);

// Greedy matching by descending score (ties by input order) against the
// highest-IoU unmatched ground truth in the same frame, IoU >= delta.
// All-point interpolated AP. Returns nullopt when the class has no ground
// truth (class excluded from means).
std::optional<ClassAp> average_precision(const std::vector<DetectionRecord>& dets,
                                         const std::vector<GroundTruthRecord>& gts, int class_id,
                                         double delta);

// Mean AP over classes with >= 1 ground truth, optionally restricted to
// class_filter. Empty ground truth is an error.
APResult frame_map(const std::vector<DetectionRecord>& dets,
                   const std::vector<GroundTruthRecord>& gts, double delta,
                   const std::set<int>& class_filter = {});

double multi_threshold_map(const std::vector<DetectionRecord>& dets,
                           const std::vector<GroundTruthRecord>& gts,
                           const std::vector<double>& deltas);

// Each ground truth and each detection contributes to the precision/recall
// accumulation with its frame's crowd index (distinct GT boxes in the frame).
APResult weighted_frame_map(const std::vector<DetectionRecord>& dets,
                            const std::vector<GroundTruthRecord>& gts, double delta,
                            const std::set<int>& class_filter = {});

double weighted_map(const std::vector<DetectionRecord>& dets,
                    const std::vector<GroundTruthRecord>& gts,
                    const std::vector<double>& deltas);

// CSV: video_id,timestamp_s,x1,y1,x2,y2,class_id[,score]; no header,
// coordinates normalized, 6-decimal fixed output formatting.
std::vector<DetectionRecord> parse_detections(std::istream& in, const std::string& source);
std::vector<GroundTruthRecord> parse_ground_truth(std::istream& in, const std::string& source);
std::vector<DetectionRecord> load_detection_csv(const std::string& path);
std::vector<GroundTruthRecord> load_ground_truth_csv(const std::string& path);
void write_detections(const std::vector<DetectionRecord>& dets, std::ostream& out);
void write_ground_truth(const std::vector<GroundTruthRecord>& gts, std::ostream& out);

} // namespace lstc
