#include "lstc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "lstc/fusion.hpp"
#include "lstc/rng.hpp"

namespace lstc {

Matrix roi_pool(const ClipFeatureMap& x, const Box& box) {
    box.validate();
    const std::size_t h = x.grid.h, w = x.grid.w, t = x.grid.t, d = x.d;

    // Temporal average and max, one h*w x d map each.
    Matrix avg(h * w, d);
    Matrix mx(h * w, d);
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            auto avg_row = avg.row(i * w + j);
            auto max_row = mx.row(i * w + j);
            for (std::size_t ti = 0; ti < t; ++ti) {
                const auto cell = x.x.row(x.cell_index(ti, i, j));
                for (std::size_t kdim = 0; kdim < d; ++kdim) {
                    avg_row[kdim] += cell[kdim];
                    if (ti == 0 || cell[kdim] > max_row[kdim]) max_row[kdim] = cell[kdim];
                }
            }
            for (double& v : avg_row) v /= static_cast<double>(t);
        }
    }

    std::vector<std::size_t> cells;
    for (std::size_t i = 0; i < h; ++i) {
        const double cy = (static_cast<double>(i) + 0.5) / static_cast<double>(h);
        for (std::size_t j = 0; j < w; ++j) {
            const double cx = (static_cast<double>(j) + 0.5) / static_cast<double>(w);
            if (cx >= box.x1 && cx <= box.x2 && cy >= box.y1 && cy <= box.y2) {
                cells.push_back(i * w + j);
            }
        }
    }
    if (cells.empty()) {
        const double bx = 0.5 * (box.x1 + box.x2), by = 0.5 * (box.y1 + box.y2);
        double best = 1e300;
        std::size_t arg = 0;
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                const double cy = (static_cast<double>(i) + 0.5) / static_cast<double>(h);
                const double cx = (static_cast<double>(j) + 0.5) / static_cast<double>(w);
                const double dist = (cx - bx) * (cx - bx) + (cy - by) * (cy - by);
                if (dist < best) {
                    best = dist;
                    arg = i * w + j;
                }
            }
        }
        cells.push_back(arg);
    }

    Matrix out(1, d);
    for (std::size_t cell : cells) {
        for (std::size_t kdim = 0; kdim < d; ++kdim) {
            out(0, kdim) += avg(cell, kdim) + mx(cell, kdim);
        }
    }
    for (double& v : out.data()) v /= static_cast<double>(cells.size());
    return out;
}

ActorSet pool_actors(const ClipFeatureMap& x, const std::vector<Box>& boxes) {
    Matrix v(boxes.size(), x.d);
    for (std::size_t a = 0; a < boxes.size(); ++a) {
        const Matrix pooled = roi_pool(x, boxes[a]);
        std::copy(pooled.row(0).begin(), pooled.row(0).end(), v.row(a).begin());
    }
    return ActorSet(std::move(v), boxes);
}

void TrainConfig::validate() const {
    if (stage != 1 && stage != 2) throw ConfigError("train: stage must be 1 or 2");
    if (!(learning_rate >= 0.0)) throw ConfigError("train: learning_rate must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
    if (batch_clips < 1) throw ConfigError("train: batch_clips must be >= 1");
    if (k < 1 || m < 1 || d_k < 1) throw ConfigError("train: K, M, d_k must be >= 1");
    if (radius_s < 0) throw ConfigError("train: radius_s must be >= 0");
}

double accumulate_stage1(ModelState& model, const ClipFeatureMap& x, const ActorSet& actors,
                         const Matrix& labels, double grad_scale) {
    ShortTermCache cache;
    const Matrix z_s = short_term_forward(x, actors, model.short_branch, &cache);
    const BceResult bce = bce_loss(sigmoid(z_s), labels);
    short_term_backward(scale(bce.grad_logits, grad_scale), cache, model.short_branch);
    return bce.loss;
}

double accumulate_stage2(ModelState& model, const ClipFeatureMap& x, const ActorSet& actors,
                         const FeatureWindow& ctx, const Matrix& labels, double grad_scale) {
    ShortTermCache s_cache;
    LongTermCache l_cache;
    const Matrix z_s = short_term_forward(x, actors, model.short_branch, &s_cache);
    const Matrix z_l = long_term_logits(actors, ctx, model.long_branch, &l_cache);
    const BceResult bce = bce_loss(fuse({z_s, z_l}), labels);
    const Matrix g = scale(bce.grad_logits, grad_scale);
    short_term_backward(g, s_cache, model.short_branch);
    long_term_backward(g, l_cache, model.long_branch);
    return bce.loss;
}

namespace {

FeatureBank build_bank(const SynthDataset& ds, const std::vector<ActorSet>& actors) {
    FeatureBank bank(ds.cfg.d);
    for (std::size_t i = 0; i < ds.clips.size(); ++i) {
        bank.insert({ds.clips[i].video_id, ds.clips[i].timestamp_s, actors[i].v});
    }
    return bank;
}

void sgd_step(ModelState& model, double lr, double wd) {
    visit_params(model, [&](const std::string&, Param& p) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            p.value.data()[i] -= lr * (p.grad.data()[i] + wd * p.value.data()[i]);
        }
    });
}

} // namespace

TrainResult train(const SynthDataset& ds, const TrainConfig& cfg, const ModelState* init_from,
                  const FeatureBank* bank) {
    cfg.validate();
    if (ds.clips.empty()) throw ConfigError("train: dataset has no clips");
    if (cfg.stage == 2) {
        if (!init_from) throw ConfigError("train: stage 2 needs stage-1 weights to start from");
        if (!bank) throw ConfigError("train: stage 2 needs a feature bank");
        if (init_from->dims.d != ds.cfg.d || init_from->dims.c != ds.classes()) {
            throw ConfigError("train: stage-1 model dims do not match the dataset");
        }
        if (bank->dim() != ds.cfg.d) throw ConfigError("train: bank dim does not match dataset");
    }

    ModelDims dims;
    dims.d = ds.cfg.d;
    dims.c = ds.classes();
    dims.k = cfg.k;
    dims.m = cfg.m;
    dims.d_k = cfg.d_k;
    dims.attn_scale = cfg.stage == 2 ? init_from->dims.attn_scale : cfg.attn_scale;

    ModelState model = init_model(dims, cfg.seed);
    model.stage = cfg.stage;
    model.window = WindowSpec{cfg.radius_s, cfg.include_center};
    if (cfg.stage == 2) {
        model.short_branch = init_from->short_branch;
        visit_params(model, [](const std::string&, Param& p) { p.zero_grad(); });
    }

    std::vector<ActorSet> actors;
    actors.reserve(ds.clips.size());
    for (const SynthClip& clip : ds.clips) actors.push_back(pool_actors(clip.x, clip.boxes));

    std::vector<FeatureWindow> windows;
    if (cfg.stage == 2) {
        windows.reserve(ds.clips.size());
        for (const SynthClip& clip : ds.clips) {
            windows.push_back(bank->query_window(clip.video_id, clip.timestamp_s, model.window));
        }
    }

    Rng rng(cfg.seed + 0x9e3779b97f4a7c15ULL);
    TrainResult result{std::move(model), {}, FeatureBank(ds.cfg.d)};
    result.loss_curve.reserve(cfg.steps);

    const double grad_scale = 1.0 / static_cast<double>(cfg.batch_clips);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        zero_grads(result.model);
        double loss = 0.0;
        for (std::size_t b = 0; b < cfg.batch_clips; ++b) {
            const std::size_t ci = rng.below(ds.clips.size());
            const SynthClip& clip = ds.clips[ci];
            if (cfg.stage == 1) {
                loss += accumulate_stage1(result.model, clip.x, actors[ci], clip.labels,
                                          grad_scale);
            } else {
                loss += accumulate_stage2(result.model, clip.x, actors[ci], windows[ci],
                                          clip.labels, grad_scale);
            }
        }
        loss *= grad_scale;
        if (!std::isfinite(loss)) {
            throw NumericError("training diverged at step " + std::to_string(step));
        }
        sgd_step(result.model, cfg.learning_rate, cfg.weight_decay);
        result.loss_curve.push_back(loss);
    }

    result.bank = cfg.stage == 1 ? build_bank(ds, actors) : *bank;
    return result;
}

Matrix model_scores(const ModelState& model, const ClipFeatureMap& x, const ActorSet& actors,
                    const FeatureWindow& ctx) {
    const Matrix z_s = short_term_forward(x, actors, model.short_branch);
    if (model.stage == 1) return sigmoid(z_s);
    const Matrix z_l = long_term_logits(actors, ctx, model.long_branch);
    return fuse({z_s, z_l});
}

std::vector<DetectionRecord> infer(const ModelState& model, const SynthDataset& ds,
                                   const FeatureBank& bank, unsigned thread_count) {
    if (ds.cfg.d != model.dims.d || ds.classes() != model.dims.c) {
        throw DimensionError("infer: model dims do not match dataset");
    }
    if (bank.dim() != model.dims.d) throw DimensionError("infer: bank dim does not match model");

    std::vector<std::vector<DetectionRecord>> per_clip(ds.clips.size());
    auto run_clip = [&](std::size_t ci) {
        const SynthClip& clip = ds.clips[ci];
        const ActorSet actors = pool_actors(clip.x, clip.boxes);
        const FeatureWindow ctx =
            bank.query_window(clip.video_id, clip.timestamp_s, model.window);
        const Matrix probs = model_scores(model, clip.x, actors, ctx);
        auto& out = per_clip[ci];
        out.reserve(actors.count() * model.dims.c);
        for (std::size_t a = 0; a < actors.count(); ++a) {
            for (std::size_t cl = 0; cl < model.dims.c; ++cl) {
                out.push_back({clip.video_id, clip.timestamp_s, clip.boxes[a],
                               static_cast<int>(cl), probs(a, cl)});
            }
        }
    };

    if (thread_count <= 1 || ds.clips.size() <= 1) {
        for (std::size_t ci = 0; ci < ds.clips.size(); ++ci) run_clip(ci);
    } else {
        const unsigned n_threads =
            std::min<unsigned>(thread_count, static_cast<unsigned>(ds.clips.size()));
        std::vector<std::thread> workers;
        workers.reserve(n_threads);
        for (unsigned w = 0; w < n_threads; ++w) {
            workers.emplace_back([&, w] {
                for (std::size_t ci = w; ci < ds.clips.size(); ci += n_threads) run_clip(ci);
            });
        }
        for (auto& worker : workers) worker.join();
    }

    std::vector<DetectionRecord> merged;
    for (auto& block : per_clip) {
        merged.insert(merged.end(), block.begin(), block.end());
    }
    return merged;
}

std::vector<SweepCell> sweep_km(const SynthDataset& ds, const std::vector<std::size_t>& ks,
                                const std::vector<std::size_t>& ms, const TrainConfig& base) {
    if (ks.empty() || ms.empty()) throw ConfigError("sweep: K and M lists must be nonempty");
    for (std::size_t v : ks) {
        if (v < 1) throw ConfigError("sweep: K values must be >= 1");
    }
    for (std::size_t v : ms) {
        if (v < 1) throw ConfigError("sweep: M values must be >= 1");
    }
    const auto gts = dataset_ground_truth(ds);
    std::vector<SweepCell> table;
    for (std::size_t k : ks) {
        for (std::size_t m : ms) {
            TrainConfig cfg = base;
            cfg.k = k;
            cfg.m = m;
            cfg.stage = 1;
            TrainResult stage1 = train(ds, cfg);
            cfg.stage = 2;
            TrainResult stage2 = train(ds, cfg, &stage1.model, &stage1.bank);
            const auto dets = infer(stage2.model, ds, stage2.bank);
            table.push_back({k, m, frame_map(dets, gts, 0.5).map_value});
        }
    }
    return table;
}

} // namespace lstc
