#include "lstc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <tuple>

#include "lstc/errors.hpp"

namespace lstc {

double iou(const Box& a, const Box& b) {
    a.validate();
    b.validate();
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return inter / uni;
}

namespace {

using FrameKey = std::pair<std::string, std::int64_t>;

struct BoxKey {
    double x1, y1, x2, y2;
    bool operator<(const BoxKey& o) const {
        return std::tie(x1, y1, x2, y2) < std::tie(o.x1, o.y1, o.x2, o.y2);
    }
};

// Crowd index per frame: number of distinct ground-truth boxes (persons),
// counted across all classes.
std::map<FrameKey, double> crowd_index(const std::vector<GroundTruthRecord>& gts) {
    std::map<FrameKey, std::set<BoxKey>> boxes;
    for (const auto& g : gts) {
        boxes[{g.video_id, g.timestamp_s}].insert({g.box.x1, g.box.y1, g.box.x2, g.box.y2});
    }
    std::map<FrameKey, double> w;
    for (const auto& [k, s] : boxes) w[k] = static_cast<double>(s.size());
    return w;
}

std::optional<ClassAp> class_ap(const std::vector<DetectionRecord>& dets,
                                const std::vector<GroundTruthRecord>& gts, int class_id,
                                double delta, const std::map<FrameKey, double>* weights) {
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("average_precision: delta must lie in (0,1)");

    std::map<FrameKey, std::vector<const GroundTruthRecord*>> gt_by_frame;
    std::size_t n_gt = 0;
    double gt_weight = 0.0;
    for (const auto& g : gts) {
        if (g.class_id != class_id) continue;
        FrameKey key{g.video_id, g.timestamp_s};
        gt_by_frame[key].push_back(&g);
        ++n_gt;
        gt_weight += weights ? weights->at(key) : 1.0;
    }
    if (n_gt == 0) return std::nullopt;

    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        if (dets[i].class_id == class_id) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].score > dets[b].score;
    });

    std::map<FrameKey, std::vector<bool>> used;
    for (const auto& [k, v] : gt_by_frame) used[k].assign(v.size(), false);

    ClassAp out;
    out.gt = n_gt;
    std::vector<double> precision, recall;
    double cum_tp = 0.0, cum_fp = 0.0;
    for (std::size_t idx : order) {
        const DetectionRecord& det = dets[idx];
        FrameKey key{det.video_id, det.timestamp_s};
        const double w = weights ? (weights->count(key) ? weights->at(key) : 1.0) : 1.0;
        double best = -1.0;
        std::size_t best_j = 0;
        auto it = gt_by_frame.find(key);
        if (it != gt_by_frame.end()) {
            auto& flags = used[key];
            for (std::size_t j = 0; j < it->second.size(); ++j) {
                if (flags[j]) continue;
                const double v = iou(det.box, it->second[j]->box);
                if (v > best) {
                    best = v;
                    best_j = j;
                }
            }
        }
        if (best >= delta) {
            used[key][best_j] = true;
            cum_tp += w;
            ++out.matched;
        } else {
            cum_fp += w;
            ++out.unmatched;
        }
        precision.push_back(cum_tp / (cum_tp + cum_fp));
        recall.push_back(cum_tp / gt_weight);
    }

    // All-point interpolation: area under the monotone precision envelope.
    double ap = 0.0;
    double env = 0.0;
    double prev_recall = 0.0;
    std::vector<double> envelope(precision.size());
    for (std::size_t i = precision.size(); i-- > 0;) {
        env = std::max(env, precision[i]);
        envelope[i] = env;
    }
    for (std::size_t i = 0; i < precision.size(); ++i) {
        ap += (recall[i] - prev_recall) * envelope[i];
        prev_recall = recall[i];
    }
    out.ap = ap;
    return out;
}

APResult map_over_classes(const std::vector<DetectionRecord>& dets,
                          const std::vector<GroundTruthRecord>& gts, double delta,
                          const std::set<int>& class_filter,
                          const std::map<FrameKey, double>* weights) {
    if (gts.empty()) throw ConfigError("frame_map: ground truth is empty");
    std::set<int> classes;
    for (const auto& g : gts) {
        if (class_filter.empty() || class_filter.count(g.class_id)) classes.insert(g.class_id);
    }
    if (classes.empty()) throw ConfigError("frame_map: no ground-truth classes after filtering");
    APResult r;
    double sum = 0.0;
    for (int cid : classes) {
        auto ap = class_ap(dets, gts, cid, delta, weights);
        r.per_class_ap[cid] = ap->ap;
        r.matched += ap->matched;
        r.unmatched += ap->unmatched;
        r.gt_total += ap->gt;
        sum += ap->ap;
    }
    r.map_value = sum / static_cast<double>(classes.size());
    return r;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double(const std::string& s, const std::string& source, std::size_t line_no,
                    std::size_t offset, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(what);
        return v;
    } catch (const std::exception&) {
        throw FormatError(source + " line " + std::to_string(line_no) + ": bad " + what + " '" +
                              s + "'",
                          offset);
    }
}

long long parse_int(const std::string& s, const std::string& source, std::size_t line_no,
                    std::size_t offset, const char* what) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(what);
        return v;
    } catch (const std::exception&) {
        throw FormatError(source + " line " + std::to_string(line_no) + ": bad " + what + " '" +
                              s + "'",
                          offset);
    }
}

Box parse_box(const std::vector<std::string>& f, const std::string& source, std::size_t line_no,
              std::size_t offset) {
    Box b{parse_double(f[2], source, line_no, offset, "x1"),
          parse_double(f[3], source, line_no, offset, "y1"),
          parse_double(f[4], source, line_no, offset, "x2"),
          parse_double(f[5], source, line_no, offset, "y2")};
    try {
        b.validate();
    } catch (const ConfigError& e) {
        throw FormatError(source + " line " + std::to_string(line_no) + ": " + e.what(), offset);
    }
    return b;
}

void format_row(std::ostream& out, const std::string& video_id, std::int64_t t, const Box& b,
                int class_id) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f", b.x1, b.y1, b.x2, b.y2);
    out << video_id << "," << t << "," << buf << "," << class_id;
}

} // namespace

std::optional<ClassAp> average_precision(const std::vector<DetectionRecord>& dets,
                                         const std::vector<GroundTruthRecord>& gts, int class_id,
                                         double delta) {
    return class_ap(dets, gts, class_id, delta, nullptr);
}

APResult frame_map(const std::vector<DetectionRecord>& dets,
                   const std::vector<GroundTruthRecord>& gts, double delta,
                   const std::set<int>& class_filter) {
    return map_over_classes(dets, gts, delta, class_filter, nullptr);
}

double multi_threshold_map(const std::vector<DetectionRecord>& dets,
                           const std::vector<GroundTruthRecord>& gts,
                           const std::vector<double>& deltas) {
    if (deltas.empty()) throw ConfigError("multi_threshold_map: deltas must be nonempty");
    double sum = 0.0;
    for (double d : deltas) sum += frame_map(dets, gts, d).map_value;
    return sum / static_cast<double>(deltas.size());
}

APResult weighted_frame_map(const std::vector<DetectionRecord>& dets,
                            const std::vector<GroundTruthRecord>& gts, double delta,
                            const std::set<int>& class_filter) {
    const auto weights = crowd_index(gts);
    return map_over_classes(dets, gts, delta, class_filter, &weights);
}

double weighted_map(const std::vector<DetectionRecord>& dets,
                    const std::vector<GroundTruthRecord>& gts,
                    const std::vector<double>& deltas) {
    if (deltas.empty()) throw ConfigError("weighted_map: deltas must be nonempty");
    double sum = 0.0;
    for (double d : deltas) sum += weighted_frame_map(dets, gts, d).map_value;
    return sum / static_cast<double>(deltas.size());
}

std::vector<DetectionRecord> parse_detections(std::istream& in, const std::string& source) {
    std::vector<DetectionRecord> out;
    std::string line;
    std::size_t line_no = 0, offset = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t line_offset = offset;
        offset += line.size() + 1;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 7 && f.size() != 8) {
            throw FormatError(source + " line " + std::to_string(line_no) +
                                  ": expected 7 or 8 fields, got " + std::to_string(f.size()),
                              line_offset);
        }
        DetectionRecord d;
        d.video_id = f[0];
        d.timestamp_s = parse_int(f[1], source, line_no, line_offset, "timestamp");
        d.box = parse_box(f, source, line_no, line_offset);
        d.class_id = static_cast<int>(parse_int(f[6], source, line_no, line_offset, "class_id"));
        d.score = f.size() == 8 ? parse_double(f[7], source, line_no, line_offset, "score") : 1.0;
        if (d.score < 0.0 || d.score > 1.0) {
            throw FormatError(source + " line " + std::to_string(line_no) +
                                  ": score outside [0,1]",
                              line_offset);
        }
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<GroundTruthRecord> parse_ground_truth(std::istream& in, const std::string& source) {
    std::vector<GroundTruthRecord> out;
    std::string line;
    std::size_t line_no = 0, offset = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t line_offset = offset;
        offset += line.size() + 1;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 7) {
            throw FormatError(source + " line " + std::to_string(line_no) +
                                  ": expected 7 fields, got " + std::to_string(f.size()),
                              line_offset);
        }
        GroundTruthRecord g;
        g.video_id = f[0];
        g.timestamp_s = parse_int(f[1], source, line_no, line_offset, "timestamp");
        g.box = parse_box(f, source, line_no, line_offset);
        g.class_id = static_cast<int>(parse_int(f[6], source, line_no, line_offset, "class_id"));
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<DetectionRecord> load_detection_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open detection csv: " + path, 0);
    return parse_detections(f, path);
}

std::vector<GroundTruthRecord> load_ground_truth_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open ground truth csv: " + path, 0);
    return parse_ground_truth(f, path);
}

void write_detections(const std::vector<DetectionRecord>& dets, std::ostream& out) {
    char buf[32];
    for (const auto& d : dets) {
        format_row(out, d.video_id, d.timestamp_s, d.box, d.class_id);
        std::snprintf(buf, sizeof buf, "%.6f", d.score);
        out << "," << buf << "\n";
    }
}

void write_ground_truth(const std::vector<GroundTruthRecord>& gts, std::ostream& out) {
    for (const auto& g : gts) {
        format_row(out, g.video_id, g.timestamp_s, g.box, g.class_id);
        out << "\n";
    }
}

} // namespace lstc
