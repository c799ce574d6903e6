#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lstc/eval.hpp"
#include "lstc/grad_check.hpp"
#include "lstc/heatmap_io.hpp"
#include "lstc/pipeline.hpp"
#include "lstc/rng.hpp"

namespace {

using namespace lstc;

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::vector<double> parse_delta_list(const std::string& arg) {
    std::vector<double> deltas;
    std::stringstream ss(arg);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        deltas.push_back(std::stod(item));
    }
    if (deltas.empty()) throw ConfigError("eval: --deltas list is empty");
    for (double d : deltas) {
        if (!(d > 0.0 && d < 1.0)) throw ConfigError("eval: deltas must lie in (0,1)");
    }
    return deltas;
}

std::vector<std::size_t> parse_size_list(const std::string& arg, const char* what) {
    std::vector<std::size_t> out;
    std::stringstream ss(arg);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const long long v = std::stoll(item);
        if (v < 1) throw ConfigError(std::string(what) + " values must be >= 1");
        out.push_back(static_cast<std::size_t>(v));
    }
    if (out.empty()) throw ConfigError(std::string(what) + " list is empty");
    return out;
}

void write_loss_curve(const std::vector<double>& curve, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write loss curve: " + path);
    char buf[64];
    for (std::size_t i = 0; i < curve.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, curve[i]);
        f << buf;
    }
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
    const SynthConfig cfg = load_synth_config(config_path);
    std::filesystem::create_directories(out_dir);
    const SynthDataset ds = synth_generate(cfg);
    save_dataset(ds, out_dir + "/dataset.bin");
    {
        std::ofstream gt(out_dir + "/gt.csv");
        if (!gt) throw ConfigError("cannot write " + out_dir + "/gt.csv");
        write_ground_truth(dataset_ground_truth(ds), gt);
    }
    {
        std::ofstream echo(out_dir + "/config.json");
        if (!echo) throw ConfigError("cannot write " + out_dir + "/config.json");
        echo << synth_config_json(cfg);
    }
    std::cout << "wrote " << ds.clips.size() << " clips to " << out_dir << "\n";
    return 0;
}

int cmd_train(const TrainConfig& cfg, const std::string& data_dir, const std::string& bank_path,
              const std::string& out_path, const std::string& init_path,
              const std::string& loss_path) {
    const SynthDataset ds = load_dataset(data_dir + "/dataset.bin");
    TrainResult result = [&] {
        if (cfg.stage == 1) return train(ds, cfg);
        if (init_path.empty()) throw ConfigError("train: stage 2 requires --init <stage1 model>");
        if (bank_path.empty()) throw ConfigError("train: stage 2 requires --bank <file>");
        const ModelState stage1 = load_model(init_path);
        const FeatureBank bank = FeatureBank::load(bank_path);
        return train(ds, cfg, &stage1, &bank);
    }();
    save_model(result.model, out_path);
    if (cfg.stage == 1 && !bank_path.empty()) result.bank.save(bank_path);
    if (!loss_path.empty()) write_loss_curve(result.loss_curve, loss_path);
    std::cout << "stage " << cfg.stage << " final loss " << result.loss_curve.back() << ", model "
              << out_path << "\n";
    return 0;
}

int cmd_infer(const std::string& model_path, const std::string& data_dir,
              const std::string& bank_path, const std::string& out_path, unsigned threads) {
    const ModelState model = load_model(model_path);
    const SynthDataset ds = load_dataset(data_dir + "/dataset.bin");
    const FeatureBank bank = bank_path.empty() ? FeatureBank(model.dims.d)
                                               : FeatureBank::load(bank_path);
    const auto dets = infer(model, ds, bank, threads);
    std::ofstream f(out_path);
    if (!f) throw ConfigError("cannot write " + out_path);
    write_detections(dets, f);
    std::cout << "wrote " << dets.size() << " detections to " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& gt_path, const std::string& det_path, const std::string& deltas_arg,
             bool weighted, const std::string& classes_path, const std::string& report_path) {
    const auto gts = load_ground_truth_csv(gt_path);
    const auto dets = load_detection_csv(det_path);
    const auto deltas = parse_delta_list(deltas_arg);
    std::set<int> class_filter;
    if (!classes_path.empty()) {
        std::ifstream f(classes_path);
        if (!f) throw ConfigError("cannot open class filter: " + classes_path);
        int cid;
        while (f >> cid) class_filter.insert(cid);
    }

    nlohmann::json report;
    report["deltas"] = deltas;
    report["weighted"] = weighted;
    double sum = 0.0;
    for (double delta : deltas) {
        const APResult r = weighted ? weighted_frame_map(dets, gts, delta, class_filter)
                                    : frame_map(dets, gts, delta, class_filter);
        sum += r.map_value;
        char head[64];
        std::snprintf(head, sizeof head, "delta %.2f", delta);
        std::cout << head << "\n";
        nlohmann::json per_class;
        for (const auto& [cid, ap] : r.per_class_ap) {
            char line[64];
            std::snprintf(line, sizeof line, "  class %d AP %.6f", cid, ap);
            std::cout << line << "\n";
            per_class[std::to_string(cid)] = ap;
        }
        char tail[128];
        std::snprintf(tail, sizeof tail, "  mAP %.6f (matched %zu, unmatched %zu, gt %zu)",
                      r.map_value, r.matched, r.unmatched, r.gt_total);
        std::cout << tail << "\n";
        nlohmann::json entry;
        entry["delta"] = delta;
        entry["per_class_ap"] = per_class;
        entry["map"] = r.map_value;
        entry["matched"] = r.matched;
        entry["unmatched"] = r.unmatched;
        entry["gt"] = r.gt_total;
        report["results"].push_back(entry);
    }
    const double final_map = sum / static_cast<double>(deltas.size());
    report["map"] = final_map;
    char line[64];
    std::snprintf(line, sizeof line, "mAP %.6f", final_map);
    std::cout << line << "\n";

    std::ofstream rf(report_path);
    if (!rf) throw ConfigError("cannot write report: " + report_path);
    rf << report.dump(2) << "\n";
    return 0;
}

int cmd_oracle(std::size_t trials, std::size_t max_l, std::uint64_t seed,
               const std::string& csv_path) {
    Rng rng(seed);
    double worst = 0.0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        const std::size_t n = 1 + rng.below(4);
        const std::size_t l = 1 + rng.below(max_l);
        const std::size_t d = 2 + rng.below(15);
        const std::size_t d_k = 1 + rng.below(std::min<std::size_t>(d, 8));
        SecondOrderHead head{init_nl_block(d, d_k, rng), init_nl_block(d, d_k, rng)};
        const Matrix q = rng.normal_matrix(n, d);
        FeatureWindow ctx;
        ctx.ctx = rng.normal_matrix(l, d);
        const double diff =
            max_abs_diff(second_order_full(q, ctx, head), second_order_decoupled(q, ctx, head));
        worst = std::max(worst, diff);
    }
    std::cout << "equivalence over " << trials << " trials: max |full - decoupled| = " << worst
              << (worst < 1e-9 ? " (PASS < 1e-9)" : " (FAIL >= 1e-9)") << "\n";

    std::ostringstream csv;
    csv << "L,time_full_s,time_decoupled_s,max_abs_diff\n";
    const std::size_t d = 16, d_k = 8, n = 2;
    SecondOrderHead head{init_nl_block(d, d_k, rng), init_nl_block(d, d_k, rng)};
    const Matrix q = rng.normal_matrix(n, d);
    double prev_full = 0.0, prev_dec = 0.0;
    for (std::size_t l : {64, 128, 256}) {
        FeatureWindow ctx;
        ctx.ctx = rng.normal_matrix(l, d);
        for (int warm = 0; warm < 3; ++warm) {
            second_order_full(q, ctx, head);
            second_order_decoupled(q, ctx, head);
        }
        std::vector<double> full_times, dec_times;
        double diff = 0.0;
        for (int rep = 0; rep < 21; ++rep) {
            double t0 = now_seconds();
            const Matrix full = second_order_full(q, ctx, head);
            const double t1 = now_seconds();
            const Matrix dec = second_order_decoupled(q, ctx, head);
            const double t2 = now_seconds();
            full_times.push_back(t1 - t0);
            dec_times.push_back(t2 - t1);
            diff = max_abs_diff(full, dec);
        }
        std::sort(full_times.begin(), full_times.end());
        std::sort(dec_times.begin(), dec_times.end());
        const double t_full = full_times[full_times.size() / 2];
        const double t_dec = dec_times[dec_times.size() / 2];
        csv << l << "," << t_full << "," << t_dec << "," << diff << "\n";
        std::cout << "L=" << l << " full " << t_full << "s decoupled " << t_dec << "s diff "
                  << diff << "\n";
        if (l > 64) {
            std::cout << "  doubling ratio: full " << t_full / prev_full << "x, decoupled "
                      << t_dec / prev_dec << "x\n";
        }
        prev_full = t_full;
        prev_dec = t_dec;
    }
    if (!csv_path.empty()) {
        std::ofstream f(csv_path);
        if (!f) throw ConfigError("cannot write " + csv_path);
        f << csv.str();
    }
    if (worst >= 1e-9) throw NumericError("second-order equivalence check failed");
    return 0;
}

int cmd_gradcheck(double eps, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<GradReport> reports;

    {
        // linear
        Param w(rng.normal_matrix(4, 3));
        Param b(rng.normal_matrix(1, 3));
        const Matrix x = rng.normal_matrix(5, 4);
        const Matrix target = rng.normal_matrix(5, 3);
        ops::Linear op;
        auto loss = [&] {
            w.zero_grad();
            b.zero_grad();
            const Matrix out = op.forward(x, w.value, b.value);
            const Matrix diff = sub(out, target);
            double l = 0.0;
            for (double v : diff.data()) l += v * v;
            auto g = op.backward(scale(diff, 2.0));
            w.grad = add(w.grad, g.w);
            b.grad = add(b.grad, g.bias);
            return l;
        };
        reports.push_back(grad_check("linear", loss, {{"w", &w}, {"b", &b}}, eps));
    }
    {
        // softmax_rows through a weighted sum
        Param logits(rng.normal_matrix(3, 5));
        const Matrix mix = rng.normal_matrix(3, 5);
        ops::SoftmaxRows op;
        auto loss = [&] {
            logits.zero_grad();
            const Matrix p = op.forward(logits.value);
            double l = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) l += p.data()[i] * mix.data()[i];
            logits.grad = add(logits.grad, op.backward(mix));
            return l;
        };
        reports.push_back(grad_check("softmax_rows", loss, {{"logits", &logits}}, eps));
    }
    {
        // layer_norm
        Param x(rng.normal_matrix(3, 6));
        Param gamma(rng.normal_matrix(1, 6));
        Param beta(rng.normal_matrix(1, 6));
        const Matrix mix = rng.normal_matrix(3, 6);
        ops::LayerNorm op;
        auto loss = [&] {
            x.zero_grad();
            gamma.zero_grad();
            beta.zero_grad();
            const Matrix out = op.forward(x.value, gamma.value, beta.value, 1e-5);
            double l = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) l += out.data()[i] * mix.data()[i];
            auto g = op.backward(mix);
            x.grad = add(x.grad, g.x);
            gamma.grad = add(gamma.grad, g.gamma);
            beta.grad = add(beta.grad, g.beta);
            return l;
        };
        reports.push_back(
            grad_check("layer_norm", loss, {{"x", &x}, {"gamma", &gamma}, {"beta", &beta}}, eps));
    }
    {
        // full stage-2 loss on a small synthetic instance
        SynthConfig scfg;
        scfg.n_videos = 1;
        scfg.clips_per_video = 4;
        scfg.h = 2;
        scfg.w = 2;
        scfg.t = 2;
        scfg.d = 6;
        scfg.c_local = 2;
        scfg.c_longterm = 2;
        scfg.actors_min = 2;
        scfg.actors_max = 2;
        scfg.noise_sigma = 0.1;
        scfg.seed = seed;
        const SynthDataset ds = synth_generate(scfg);
        ModelDims dims{6, 4, 2, 2, 3, true};
        ModelState model = init_model(dims, seed + 1);
        model.stage = 2;
        FeatureBank bank(scfg.d);
        std::vector<ActorSet> actors;
        for (const auto& clip : ds.clips) {
            actors.push_back(pool_actors(clip.x, clip.boxes));
            bank.insert({clip.video_id, clip.timestamp_s, actors.back().v});
        }
        const FeatureWindow ctx =
            bank.query_window(ds.clips[0].video_id, ds.clips[0].timestamp_s, model.window);
        // The key-projection bias phi_b shifts every softmax row by a
        // constant, so the loss is invariant to it and its true gradient is
        // identically zero. Finite differences only see noise there; verify
        // the invariance directly and check everything else numerically.
        NamedParams named;
        std::vector<Param*> inert;
        visit_params(model, [&](const std::string& name, Param& p) {
            if (name.ends_with(".phi_b")) {
                inert.push_back(&p);
            } else {
                named.emplace_back(name, &p);
            }
        });
        auto loss = [&] {
            zero_grads(model);
            return accumulate_stage2(model, ds.clips[0].x, actors[0], ctx, ds.clips[0].labels,
                                     1.0);
        };
        const double base = loss();
        for (Param* p : inert) {
            for (double g : p->grad.data()) {
                if (std::fabs(g) > 1e-9) throw NumericError("phi_b gradient should vanish");
            }
            for (double& v : p->value.data()) v += 0.37;
        }
        const double shifted = loss();
        for (Param* p : inert) {
            for (double& v : p->value.data()) v -= 0.37;
        }
        if (std::fabs(shifted - base) > 1e-10) {
            throw NumericError("loss is not invariant to phi_b");
        }
        reports.push_back(grad_check("stage2_loss", loss, named, eps));
    }

    double worst = 0.0;
    for (const auto& r : reports) {
        std::cout << r.op_name << ": max rel err " << r.max_rel_err << "\n";
        for (const auto& [name, err] : r.per_param_err) {
            if (err >= 1e-5) std::cout << "  " << name << ": " << err << "\n";
        }
        worst = std::max(worst, r.max_rel_err);
    }
    std::cout << "worst " << worst << (worst < 1e-5 ? " (PASS < 1e-5)" : " (FAIL >= 1e-5)")
              << "\n";
    if (worst >= 1e-5) throw NumericError("gradient check failed");
    return 0;
}

int cmd_sweep(const std::string& data_dir, const std::string& k_arg, const std::string& m_arg,
              const TrainConfig& base, const std::string& out_path) {
    const SynthDataset ds = load_dataset(data_dir + "/dataset.bin");
    const auto ks = parse_size_list(k_arg, "sweep: K");
    const auto ms = parse_size_list(m_arg, "sweep: M");
    const auto table = sweep_km(ds, ks, ms, base);
    std::ostringstream csv;
    csv << "K,M,map\n";
    for (const SweepCell& cell : table) {
        char line[64];
        std::snprintf(line, sizeof line, "K=%zu M=%zu mAP %.6f", cell.k, cell.m, cell.metric);
        std::cout << line << "\n";
        csv << cell.k << "," << cell.m << "," << cell.metric << "\n";
    }
    if (!out_path.empty()) {
        std::ofstream f(out_path);
        if (!f) throw ConfigError("cannot write " + out_path);
        f << csv.str();
    }
    return 0;
}

int cmd_bank_inspect(const std::string& path) {
    FeatureBank::load(path).inspect(std::cout);
    return 0;
}

int cmd_bank_export(const std::string& path) {
    FeatureBank::load(path).export_ndjson(std::cout);
    return 0;
}

int cmd_heatmap(const std::string& model_path, const std::string& data_dir, std::size_t clip_index,
                std::size_t actor_index, const std::string& out_dir) {
    const ModelState model = load_model(model_path);
    const SynthDataset ds = load_dataset(data_dir + "/dataset.bin");
    if (clip_index >= ds.clips.size()) {
        throw ConfigError("heatmap: clip index " + std::to_string(clip_index) +
                          " out of range (dataset has " + std::to_string(ds.clips.size()) +
                          " clips)");
    }
    const SynthClip& clip = ds.clips[clip_index];
    if (ds.cfg.d != model.dims.d) throw DimensionError("heatmap: model dims do not match dataset");
    const ActorSet actors = pool_actors(clip.x, clip.boxes);
    const AttentionMap a = attention_map(clip.x, actors, model.short_branch);
    const auto frames = export_heatmap(a, actor_index);
    std::filesystem::create_directories(out_dir);
    const auto files = write_heatmap_files(frames, out_dir, actor_index);
    std::cout << "wrote " << files.size() << " files to " << out_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Long-short-term context action recognition toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth->add_option("--config", config_path, "JSON config")->required();
    synth->add_option("--out", out_dir, "output directory")->required();

    TrainConfig tcfg;
    std::string data_dir, bank_path, model_out, init_path, loss_path;
    auto* tr = app.add_subcommand("train", "Train stage 1 or stage 2");
    tr->add_option("--stage", tcfg.stage, "1 or 2")->required();
    tr->add_option("--data", data_dir, "dataset directory")->required();
    tr->add_option("--out", model_out, "model checkpoint path")->required();
    tr->add_option("--bank", bank_path, "bank file (written by stage 1, read by stage 2)");
    tr->add_option("--init", init_path, "stage-1 model to initialize stage 2 from");
    tr->add_option("--lr", tcfg.learning_rate, "learning rate");
    tr->add_option("--weight-decay", tcfg.weight_decay, "weight decay");
    tr->add_option("--steps", tcfg.steps, "SGD steps");
    tr->add_option("--batch", tcfg.batch_clips, "clips per step");
    tr->add_option("--k", tcfg.k, "reader unit cascade depth");
    tr->add_option("--m", tcfg.m, "second-order heads per unit");
    tr->add_option("--dk", tcfg.d_k, "key projection width");
    tr->add_flag("--no-attn-scale{false}", tcfg.attn_scale, "disable 1/sqrt(d) logit scaling");
    tr->add_option("--radius", tcfg.radius_s, "bank window radius in seconds");
    tr->add_flag("--include-center", tcfg.include_center, "window includes the query timestamp");
    tr->add_option("--seed", tcfg.seed, "rng seed");
    tr->add_option("--loss-curve", loss_path, "write per-step loss CSV here");

    std::string infer_model, infer_det;
    unsigned threads = 1;
    auto* inf = app.add_subcommand("infer", "Emit scored detections for a dataset");
    inf->add_option("--model", infer_model, "model checkpoint")->required();
    inf->add_option("--data", data_dir, "dataset directory")->required();
    inf->add_option("--bank", bank_path, "bank file");
    inf->add_option("--out", infer_det, "detection CSV path")->required();
    inf->add_option("--threads", threads, "worker thread count");

    std::string gt_path, det_path, deltas_arg = "0.5", classes_path, report_path = "report.json";
    bool weighted = false;
    auto* ev = app.add_subcommand("eval", "Frame-level mAP evaluation");
    ev->add_option("--gt", gt_path, "ground truth CSV")->required();
    ev->add_option("--det", det_path, "detection CSV")->required();
    ev->add_option("--deltas", deltas_arg, "comma-separated IoU thresholds");
    ev->add_flag("--weighted", weighted, "crowd-weighted mAP");
    ev->add_option("--classes", classes_path, "file of class ids to evaluate");
    ev->add_option("--report", report_path, "JSON report path");

    std::size_t trials = 100, max_l = 8;
    std::uint64_t seed = 0;
    std::string oracle_csv;
    auto* orc = app.add_subcommand("oracle", "Second-order equivalence and complexity check");
    orc->add_option("--trials", trials, "random instances");
    orc->add_option("--max-l", max_l, "max context length for equivalence trials");
    orc->add_option("--seed", seed, "rng seed");
    orc->add_option("--csv", oracle_csv, "timing CSV path");

    double gc_eps = 1e-5;
    std::uint64_t gc_seed = 0;
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    gc->add_option("--eps", gc_eps, "central difference step");
    gc->add_option("--seed", gc_seed, "rng seed");

    std::string k_arg = "1,2", m_arg = "1,2", sweep_out;
    auto* sw = app.add_subcommand("sweep", "Hyperparameter sweep over K and M");
    sw->add_option("--data", data_dir, "dataset directory")->required();
    sw->add_option("--k", k_arg, "comma-separated K values");
    sw->add_option("--m", m_arg, "comma-separated M values");
    sw->add_option("--lr", tcfg.learning_rate, "learning rate");
    sw->add_option("--steps", tcfg.steps, "SGD steps per stage");
    sw->add_option("--seed", tcfg.seed, "shared rng seed");
    sw->add_option("--out", sweep_out, "sweep table CSV path");

    auto* bank_cmd = app.add_subcommand("bank", "Feature bank utilities");
    bank_cmd->require_subcommand(1);
    std::string bank_file;
    auto* bi = bank_cmd->add_subcommand("inspect", "Print a bank summary");
    bi->add_option("file", bank_file, "bank file")->required();
    auto* be = bank_cmd->add_subcommand("export-ndjson", "One JSON object per record");
    be->add_option("file", bank_file, "bank file")->required();

    std::string hm_model, hm_out;
    std::size_t hm_clip = 0, hm_actor = 0;
    auto* hm = app.add_subcommand("heatmap", "Export an actor's attention heatmap");
    hm->add_option("--model", hm_model, "model checkpoint")->required();
    hm->add_option("--data", data_dir, "dataset directory")->required();
    hm->add_option("--clip", hm_clip, "clip index");
    hm->add_option("--actor", hm_actor, "actor index");
    hm->add_option("--out", hm_out, "output directory")->required();

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return cmd_synth(config_path, out_dir);
        if (tr->parsed()) {
            return cmd_train(tcfg, data_dir, bank_path, model_out, init_path, loss_path);
        }
        if (inf->parsed()) return cmd_infer(infer_model, data_dir, bank_path, infer_det, threads);
        if (ev->parsed()) {
            return cmd_eval(gt_path, det_path, deltas_arg, weighted, classes_path, report_path);
        }
        if (orc->parsed()) return cmd_oracle(trials, max_l, seed, oracle_csv);
        if (gc->parsed()) return cmd_gradcheck(gc_eps, gc_seed);
        if (sw->parsed()) return cmd_sweep(data_dir, k_arg, m_arg, tcfg, sweep_out);
        if (bank_cmd->parsed()) {
            if (bi->parsed()) return cmd_bank_inspect(bank_file);
            return cmd_bank_export(bank_file);
        }
        if (hm->parsed()) return cmd_heatmap(hm_model, data_dir, hm_clip, hm_actor, hm_out);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 4;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
