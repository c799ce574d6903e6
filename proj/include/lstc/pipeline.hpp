#pragma once

#include <cstdint>
#include <vector>

#include "lstc/eval.hpp"
#include "lstc/feature_bank.hpp"
#include "lstc/model.hpp"
#include "lstc/synth.hpp"

namespace lstc {

// Temporal average and max maps, each pooled over the cells whose centers
// fall inside the box (nearest cell if none), then summed. 1 x d.
Matrix roi_pool(const ClipFeatureMap& x, const Box& box);

ActorSet pool_actors(const ClipFeatureMap& x, const std::vector<Box>& boxes);

struct TrainConfig {
    int stage = 1;
    double learning_rate = 0.5;
    double weight_decay = 1e-5;
    std::size_t steps = 2000;
    std::size_t batch_clips = 2;
    std::size_t k = 2;
    std::size_t m = 2;
    std::size_t d_k = 8;
    bool attn_scale = true;
    std::int64_t radius_s = 8;
    bool include_center = false;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainResult {
    ModelState model;
    std::vector<double> loss_curve; // mean batch loss per step
    FeatureBank bank;               // stage 1 fills it; stage 2 carries the input bank
};

// Runs one clip forward and backward, accumulating parameter gradients
// scaled by grad_scale. Returns the clip's mean BCE loss.
double accumulate_stage1(ModelState& model, const ClipFeatureMap& x, const ActorSet& actors,
                         const Matrix& labels, double grad_scale);
double accumulate_stage2(ModelState& model, const ClipFeatureMap& x, const ActorSet& actors,
                         const FeatureWindow& ctx, const Matrix& labels, double grad_scale);

// Stage 1 trains the short-term branch alone and then fills the bank with
// ROI-pooled actor features. Stage 2 starts from stage-1 short-term weights
// (init_from) and trains both branches against the frozen bank.
TrainResult train(const SynthDataset& ds, const TrainConfig& cfg,
                  const ModelState* init_from = nullptr, const FeatureBank* bank = nullptr);

// Class probabilities for one clip: fused for stage-2 models, short-term
// only for stage-1 models.
Matrix model_scores(const ModelState& model, const ClipFeatureMap& x, const ActorSet& actors,
                    const FeatureWindow& ctx);

// One scored record per (actor, class), clips processed in dataset order.
// thread_count > 1 splits clips across threads; output order is identical.
std::vector<DetectionRecord> infer(const ModelState& model, const SynthDataset& ds,
                                   const FeatureBank& bank, unsigned thread_count = 1);

struct SweepCell {
    std::size_t k = 0;
    std::size_t m = 0;
    double metric = 0.0; // mAP@0.5 over all classes
};

// Trains both stages per (K, M) cell under a shared seed.
std::vector<SweepCell> sweep_km(const SynthDataset& ds, const std::vector<std::size_t>& ks,
                                const std::vector<std::size_t>& ms, const TrainConfig& base);

} // namespace lstc
