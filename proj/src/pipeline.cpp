/*
 * MVMSynth : synthesis and assessment of myocardial velocity mapping CMR
 *
 * Copyright 2026 MVMSynth Developers
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "mvms/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mvms/svg.hpp"

namespace mvms {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

namespace {

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

json sub(const json& j, const std::string& key) {
    return j.contains(key) ? j.at(key) : json::object();
}

}  // namespace

PipelineConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    PipelineConfig c;
    c.data_dir = get_or<std::string>(j, "data_dir", c.data_dir);
    c.count = get_or(j, "count", c.count);
    c.method = get_or<std::string>(j, "method", c.method);
    c.phase_oracle = get_or(j, "phase_oracle", c.phase_oracle);
    c.seed = get_or<uint64_t>(j, "seed", c.seed);
    c.threads = get_or(j, "threads", c.threads);
    c.systole_end = get_or(j, "systole_end", c.systole_end);
    c.k_list = get_or<std::vector<int>>(j, "k_list", c.k_list);
    c.ablation_k_list = get_or<std::vector<int>>(j, "ablation_k_list", c.ablation_k_list);

    const json js = sub(j, "split");
    c.split.train = get_or(js, "train", c.split.train);
    c.split.val = get_or(js, "val", c.split.val);
    c.split.test = get_or(js, "test", c.split.test);

    const json jp = sub(j, "phantom");
    c.phantom.h = get_or(jp, "h", c.phantom.h);
    c.phantom.w = get_or(jp, "w", c.phantom.w);
    c.phantom.t = get_or(jp, "t", c.phantom.t);
    c.phantom.r_inner0 = get_or(jp, "r_inner0", c.phantom.r_inner0);
    c.phantom.r_outer0 = get_or(jp, "r_outer0", c.phantom.r_outer0);
    c.phantom.amp = get_or(jp, "amp", c.phantom.amp);
    c.phantom.twist_amp = get_or(jp, "twist_amp", c.phantom.twist_amp);
    c.phantom.z_amp = get_or(jp, "z_amp", c.phantom.z_amp);
    c.phantom.noise_sigma = get_or(jp, "noise_sigma", c.phantom.noise_sigma);
    c.phantom.pixel_spacing_mm = get_or(jp, "pixel_spacing_mm", c.phantom.pixel_spacing_mm);
    c.phantom.venc_inplane_cms = get_or(jp, "venc_inplane_cms", c.phantom.venc_inplane_cms);
    c.phantom.venc_through_cms = get_or(jp, "venc_through_cms", c.phantom.venc_through_cms);

    const json ji = sub(j, "interp_net");
    c.interp_net.base_channels = get_or(ji, "base_channels", c.interp_net.base_channels);
    c.interp_net.depth = get_or(ji, "depth", c.interp_net.depth);
    c.interp_net.recurrence_steps = get_or(ji, "recurrence_steps", c.interp_net.recurrence_steps);

    const json jit = sub(j, "interp_train");
    c.interp_train.learning_rate = get_or(jit, "learning_rate", c.interp_train.learning_rate);
    c.interp_train.batch_size = get_or(jit, "batch_size", c.interp_train.batch_size);
    c.interp_train.epochs = get_or(jit, "epochs", c.interp_train.epochs);
    c.interp_train.w1_pad = get_or(jit, "w1_pad", c.interp_train.w1_pad);
    c.interp_train.crop_size = get_or(jit, "crop_size", c.interp_train.crop_size);

    const json jpn = sub(j, "phase_net");
    c.phase_net.base_channels = get_or(jpn, "base_channels", c.phase_net.base_channels);
    c.phase_net.depth = get_or(jpn, "depth", c.phase_net.depth);
    c.phase_net.recurrence_steps = get_or(jpn, "recurrence_steps", c.phase_net.recurrence_steps);
    c.phase_net.disc_base = get_or(jpn, "disc_base", c.phase_net.disc_base);
    c.phase_net.l1_weight = get_or(jpn, "l1_weight", c.phase_net.l1_weight);
    c.phase_net.adversarial_weight =
        get_or(jpn, "adversarial_weight", c.phase_net.adversarial_weight);
    c.phase_net.composite = get_or(jpn, "composite", c.phase_net.composite);

    const json jpt = sub(j, "phase_train");
    c.phase_train.learning_rate = get_or(jpt, "learning_rate", c.phase_train.learning_rate);
    c.phase_train.batch_size = get_or(jpt, "batch_size", c.phase_train.batch_size);
    c.phase_train.epochs = get_or(jpt, "epochs", c.phase_train.epochs);

    const json jn = sub(j, "noise");
    c.noise.mu = get_or(jn, "mu", c.noise.mu);
    c.noise.sigma = get_or(jn, "sigma", c.noise.sigma);

    const json jh = sub(j, "horn_schunck");
    c.horn_schunck.alpha = get_or(jh, "alpha", c.horn_schunck.alpha);
    c.horn_schunck.iters = get_or(jh, "iters", c.horn_schunck.iters);

    const json ja = sub(j, "ablation");
    c.ablation.weight = get_or(ja, "weight", c.ablation.weight);
    c.ablation.disc_base = get_or(ja, "disc_base", c.ablation.disc_base);
    c.ablation.disc_lr = get_or(ja, "disc_lr", c.ablation.disc_lr);

    const json jt = sub(j, "toy");
    c.toy.size = get_or(jt, "size", c.toy.size);
    c.toy.n_train = get_or(jt, "n_train", c.toy.n_train);
    c.toy.n_test = get_or(jt, "n_test", c.toy.n_test);
    c.toy.radius_scale = get_or(jt, "radius_scale", c.toy.radius_scale);
    c.toy.base_channels = get_or(jt, "base_channels", c.toy.base_channels);
    c.toy.depth = get_or(jt, "depth", c.toy.depth);
    c.toy.recurrence_steps = get_or(jt, "recurrence_steps", c.toy.recurrence_steps);
    c.toy.disc_base = get_or(jt, "disc_base", c.toy.disc_base);
    c.toy.adversarial_weight = get_or(jt, "adversarial_weight", c.toy.adversarial_weight);
    c.toy.learning_rate = get_or(jt, "learning_rate", c.toy.learning_rate);
    c.toy.batch_size = get_or(jt, "batch_size", c.toy.batch_size);
    c.toy.epochs = get_or(jt, "epochs", c.toy.epochs);

    if (c.method != "learned" && c.method != "linear" && c.method != "flow")
        throw ConfigError("method must be learned, linear or flow");
    for (int k : c.k_list)
        if (k < 0) throw ConfigError("k_list entries must be >= 0");
    if (c.split.train < 1 || c.split.val < 0 || c.split.test < 1)
        throw ConfigError("split needs train >= 1 and test >= 1");
    return c;
}

PipelineConfig load_pipeline_config(const fs::path& file) {
    std::ifstream f(file);
    if (!f) throw ConfigError("cannot open config file " + file.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("malformed config JSON: " + std::string(e.what()));
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Study sets
// ---------------------------------------------------------------------------

std::vector<std::string> list_study_dirs(const fs::path& dir) {
    std::vector<std::string> names;
    if (!fs::exists(dir)) return names;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory() && fs::exists(e.path() / "meta.json"))
            names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

void generate_phantom_set(const PhantomParams& base, uint64_t seed, int count,
                          const fs::path& dir) {
    for (int i = 0; i < count; ++i) {
        PhantomParams p = base;
        p.seed = seed + uint64_t(i);
        // Small per-study geometry variation so studies differ beyond noise.
        DetRng rng(mix_seed(p.seed, 0xA11CE));
        p.r_inner0 = base.r_inner0 + (rng.uniform() - 0.5) * 2.0;
        p.r_outer0 = base.r_outer0 + (rng.uniform() - 0.5) * 2.0;
        p.amp = base.amp * (0.85 + 0.3 * rng.uniform());
        p.z_amp = base.z_amp * (0.85 + 0.3 * rng.uniform());
        const CineStudy study = generate_phantom(p);
        char name[64];
        std::snprintf(name, sizeof(name), "study_%06llu", (unsigned long long)p.seed);
        save_study(study, dir / name);
    }
}

StudySet load_study_set(const fs::path& dir) {
    StudySet set;
    set.names = list_study_dirs(dir);
    if (set.names.empty()) throw CorruptStudyError("no studies found in " + dir.string());
    for (const auto& n : set.names) set.studies.push_back(load_study(dir / n));
    return set;
}

SplitView split_study_set(const StudySet& set, const SplitSpec& split) {
    const int n = int(set.studies.size());
    if (split.train + split.val + split.test > n)
        throw ConfigError("split needs " + std::to_string(split.train + split.val + split.test) +
                          " studies, found " + std::to_string(n));
    SplitView v;
    for (int i = 0; i < split.train; ++i) v.train.push_back(&set.studies[i]);
    for (int i = 0; i < split.val; ++i) v.val.push_back(&set.studies[split.train + i]);
    for (int i = 0; i < split.test; ++i) {
        v.test.push_back(&set.studies[split.train + split.val + i]);
        v.test_names.push_back(set.names[split.train + split.val + i]);
    }
    return v;
}

// ---------------------------------------------------------------------------
// Stage helpers
// ---------------------------------------------------------------------------

CineStudy interpolate_with_method(const CineStudy& study, const DownsampleSpec& spec,
                                  const std::string& method, const InterpModel* model,
                                  const HornSchunckConfig& hs, int threads) {
    spec.validate(study.frames());
    if (spec.k == 0) return study;
    if (method == "learned") {
        if (!model) throw std::invalid_argument("learned interpolation requires a model");
        return interpolate_series(*model, study, spec, threads);
    }

    const int t = study.frames();
    const int stride = spec.k + 1;
    std::vector<int> anchors;
    for (int i = spec.offset % stride; i < t; i += stride) anchors.push_back(i);

    CineStudy out = study;
    for (size_t a = 0; a < anchors.size(); ++a) {
        const int tau = anchors[a];
        const int next = (a + 1 < anchors.size()) ? anchors[a + 1] : anchors[0] + t;
        const int gap = next - tau;
        const int nwrap = wrap_index(next, t);
        if (gap < 2) continue;

        FlowField flow;
        if (method == "flow")
            flow = horn_schunck(study.magnitude[tau], study.magnitude[nwrap], hs.alpha, hs.iters);

        for (int k = 1; k < gap; ++k) {
            const int frame = wrap_index(tau + k, t);
            if (method == "linear") {
                out.magnitude[frame] =
                    linear_interpolate(study.magnitude[tau], study.magnitude[nwrap], k, gap - 1);
                out.seg[frame] =
                    linear_interpolate_mask(study.seg[tau], study.seg[nwrap], k, gap - 1);
            } else if (method == "flow") {
                const double f = double(k) / double(gap);
                out.magnitude[frame] = warp_bilinear(study.magnitude[tau], flow, f);
                out.seg[frame] = warp_nearest(study.seg[tau], flow, f);
            } else {
                throw std::invalid_argument("unknown interpolation method: " + method);
            }
            out.phase_x[frame] = Image(study.height(), study.width());
            out.phase_y[frame] = Image(study.height(), study.width());
            out.phase_z[frame] = Image(study.height(), study.width());
        }
    }
    return out;
}

MetricReport interp_metrics(const CineStudy& pred, const CineStudy& gt,
                            const DownsampleSpec& spec, int pad) {
    const int t = gt.frames();
    MetricReport r;
    double m = 0, w1v = 0, w2v = 0, sv = 0, dv = 0;
    int n = 0;
    for (int i = 0; i < t; ++i) {
        if (spec.is_anchor(i)) continue;
        const WeightMap w1 = roi_weight_map(gt.seg[i], pad);
        const WeightMap w2 = foreground_weight_map(gt.magnitude[i]);
        const Image pm = to_unit_range(pred.magnitude[i]);
        const Image gm = to_unit_range(gt.magnitude[i]);
        m += mse(pm, gm);
        w1v += weighted_mse(pm, gm, w1);
        w2v += weighted_mse(pm, gm, w2);
        sv += ssim01(pm, gm);
        dv += dice(pred.seg[i], gt.seg[i]);
        ++n;
    }
    if (n == 0) throw std::invalid_argument("interp_metrics: no interpolated frames (K=0?)");
    r.mse = m / n;
    r.msew1 = w1v / n;
    r.msew2 = w2v / n;
    r.ssim = sv / n;
    r.dice = dv / n;
    r.psnr = (r.mse == 0) ? std::numeric_limits<double>::infinity()
                          : 10.0 * std::log10(1.0 / r.mse);
    return r;
}

void write_curves_csv(const fs::path& file, const VelocityCurves& curves) {
    std::ofstream f(file);
    if (!f) throw std::runtime_error("cannot write " + file.string());
    f << "t,vr_mms,vc_mms,vz_mms\n";
    char buf[160];
    for (int i = 0; i < curves.frames(); ++i) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g\n", i, curves.radial[i],
                      curves.circumferential[i], curves.longitudinal[i]);
        f << buf;
    }
}

void write_curves_svg(const fs::path& file, const VelocityCurves& curves) {
    std::vector<SvgSeries> series(3);
    series[0].label = "radial";
    series[1].label = "circumferential";
    series[2].label = "longitudinal";
    for (int i = 0; i < curves.frames(); ++i) {
        for (auto& s : series) s.x.push_back(i);
        series[0].y.push_back(curves.radial[i]);
        series[1].y.push_back(curves.circumferential[i]);
        series[2].y.push_back(curves.longitudinal[i]);
    }
    write_line_chart(file, "Global LV velocity", "time point", "velocity [mm/s]", series);
}

namespace {

json stats_to_json(const VelocityStats& s) {
    return {{"psv", s.psv}, {"tpsv", s.tpsv}, {"pdv", s.pdv}, {"tpdv", s.tpdv}, {"mv", s.mv}};
}

}  // namespace

json stats_json(const VelocityCurves& curves, int systole_end) {
    json j;
    j["systole_end"] = systole_end;
    j["radial"] = stats_to_json(curve_stats(curves.radial, systole_end));
    j["circumferential"] = stats_to_json(curve_stats(curves.circumferential, systole_end));
    j["longitudinal"] = stats_to_json(curve_stats(curves.longitudinal, systole_end));
    return j;
}

json metric_report_json(const MetricReport& r) {
    json j = {{"mse", r.mse}, {"msew1", r.msew1}, {"msew2", r.msew2}, {"ssim", r.ssim}};
    j["psnr"] = std::isfinite(r.psnr) ? json(r.psnr) : json();
    if (r.dice) j["dice"] = *r.dice;
    return j;
}

namespace {

json mean_std_json(const std::vector<double>& values) {
    const MeanStd m = mean_std(values);
    return {{"mean", m.mean}, {"std", m.std}};
}

// Aggregates a list of per-study metric reports Table-style.
json aggregate_reports(const std::vector<MetricReport>& reports) {
    std::vector<double> mses, w1s, w2s, psnrs, ssims, dices;
    for (const auto& r : reports) {
        mses.push_back(r.mse);
        w1s.push_back(r.msew1);
        w2s.push_back(r.msew2);
        if (std::isfinite(r.psnr)) psnrs.push_back(r.psnr);
        ssims.push_back(r.ssim);
        if (r.dice) dices.push_back(*r.dice);
    }
    json j;
    j["mse"] = mean_std_json(mses);
    j["msew1"] = mean_std_json(w1s);
    j["msew2"] = mean_std_json(w2s);
    j["psnr"] = mean_std_json(psnrs);
    j["ssim"] = mean_std_json(ssims);
    if (!dices.empty()) j["dice"] = mean_std_json(dices);
    return j;
}

void write_json(const fs::path& file, const json& j) {
    std::ofstream f(file);
    if (!f) throw std::runtime_error("cannot write " + file.string());
    f << j.dump(2) << "\n";
}

}  // namespace

json metrics_report(const fs::path& pred_dir, const fs::path& gt_dir) {
    std::vector<std::string> names;
    fs::path pred_root = pred_dir, gt_root = gt_dir;
    if (fs::exists(pred_dir / "meta.json")) {
        names.push_back(".");
    } else {
        names = list_study_dirs(pred_dir);
        if (names.empty()) throw CorruptStudyError("no studies under " + pred_dir.string());
    }

    json rows = json::array();
    std::vector<MetricReport> mags, phases;
    for (const auto& n : names) {
        const CineStudy pred = load_study(n == "." ? pred_root : pred_root / n);
        const CineStudy gt = load_study(n == "." ? gt_root : gt_root / n);
        const StudyMetrics sm = study_metrics(pred, gt);
        json row;
        row["study"] = (n == ".") ? pred_dir.filename().string() : n;
        row["magnitude"] = metric_report_json(sm.magnitude);
        row["phase"] = metric_report_json(sm.phase);
        rows.push_back(row);
        mags.push_back(sm.magnitude);
        phases.push_back(sm.phase);
    }
    json out;
    out["studies"] = rows;
    out["aggregate"] = {{"magnitude", aggregate_reports(mags)},
                        {"phase", aggregate_reports(phases)}};
    return out;
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

namespace {

struct PipelineData {
    StudySet set;
    SplitView split;
};

PipelineData prepare_data(const PipelineConfig& cfg) {
    PipelineData d;
    const fs::path dir = cfg.data_dir;
    if (list_study_dirs(dir).empty()) generate_phantom_set(cfg.phantom, cfg.seed, cfg.count, dir);
    d.set = load_study_set(dir);
    d.split = split_study_set(d.set, cfg.split);
    return d;
}

std::unique_ptr<InterpModel> ensure_interp_model(const PipelineConfig& cfg,
                                                 const SplitView& split, int k,
                                                 InterpModel::Arch arch,
                                                 const fs::path& ckpt_dir) {
    const char* tag = arch == InterpModel::Arch::MultiHead ? "interp_k" : "interp1s_k";
    const fs::path dir = ckpt_dir / (tag + std::to_string(k));
    if (fs::exists(dir / "manifest.json")) return InterpModel::load(dir);

    auto model = std::make_unique<InterpModel>(cfg.interp_net, arch,
                                               mix_seed(cfg.seed, 0x1000 + uint64_t(k)));
    InterpDataset train = build_interp_dataset(split.train, k);
    InterpDataset val = build_interp_dataset(split.val, k);
    TrainConfig tc = cfg.interp_train;
    tc.seed = mix_seed(cfg.seed, 0x2000 + uint64_t(k));
    tc.threads = cfg.threads;
    const InterpTrainResult r = train_interp(*model, train, val, tc);
    json extra;
    extra["k"] = k;
    extra["best_epoch"] = r.best_epoch;
    extra["val_wmae"] = r.val_wmae;
    model->save(dir, extra);
    return model;
}

std::unique_ptr<PhaseModel> ensure_phase_model(const PipelineConfig& cfg,
                                               const SplitView& split,
                                               const fs::path& ckpt_dir) {
    const fs::path dir = ckpt_dir / "phase";
    if (fs::exists(dir / "manifest.json")) return PhaseModel::load(dir);
    auto model = std::make_unique<PhaseModel>(cfg.phase_net, mix_seed(cfg.seed, 0x3000));
    PhaseTrainConfig tc = cfg.phase_train;
    tc.seed = mix_seed(cfg.seed, 0x4000);
    tc.threads = cfg.threads;
    const PhaseTrainResult r = train_phase(*model, split.train, split.val, tc);
    json extra;
    extra["best_epoch"] = r.best_epoch;
    extra["g_l1"] = r.g_l1;
    extra["val_l1"] = r.val_l1;
    model->save(dir, extra);
    return model;
}

}  // namespace

json run_full_pipeline(const PipelineConfig& cfg, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    PipelineData data = prepare_data(cfg);
    const fs::path ckpt_dir = out_dir / "ckpt";

    std::unique_ptr<PhaseModel> phase_model;
    if (!cfg.phase_oracle) phase_model = ensure_phase_model(cfg, data.split, ckpt_dir);

    const int t = data.split.test.empty() ? cfg.phantom.t : data.split.test[0]->frames();
    const int systole_end = cfg.systole_end > 0 ? cfg.systole_end : default_systole_end(t);

    // Ground-truth curves per test study.
    std::vector<VelocityCurves> gt_curves;
    for (const CineStudy* s : data.split.test) gt_curves.push_back(global_curves(*s));

    json summary;
    summary["method"] = cfg.method;
    summary["systole_end"] = systole_end;
    json per_k = json::object();

    for (int k : cfg.k_list) {
        const DownsampleSpec spec{k, 0};
        const fs::path kdir = out_dir / ("K" + std::to_string(k));
        fs::create_directories(kdir);

        std::unique_ptr<InterpModel> interp_model;
        if (cfg.method == "learned" && k > 0)
            interp_model =
                ensure_interp_model(cfg, data.split, k, InterpModel::Arch::MultiHead, ckpt_dir);

        std::vector<MetricReport> interp_reports, phase_reports;
        json kjson;
        json studies = json::array();
        std::vector<double> pearsons_r, pearsons_c, pearsons_z;
        std::vector<double> psv[3], tpsv[3], pdv[3], tpdv[3], mv[3];

        for (size_t i = 0; i < data.split.test.size(); ++i) {
            const CineStudy& gt = *data.split.test[i];
            const std::string& name = data.split.test_names[i];

            CineStudy interp = interpolate_with_method(gt, spec, cfg.method,
                                                       interp_model.get(), cfg.horn_schunck,
                                                       cfg.threads);
            if (k > 0) save_study(interp, kdir / "interp" / name);

            CineStudy synth;
            if (cfg.phase_oracle) {
                CineStudy src = interp;
                src.phase_x = gt.phase_x;
                src.phase_y = gt.phase_y;
                src.phase_z = gt.phase_z;
                synth = synthesize_phases_oracle(src, cfg.noise, mix_seed(cfg.seed, 0x5000 + i));
            } else {
                synth = synthesize_phases(*phase_model, interp, cfg.noise,
                                          mix_seed(cfg.seed, 0x5000 + i), cfg.threads);
            }
            save_study(synth, kdir / "synth" / name);

            json row;
            row["study"] = name;
            if (k > 0) {
                const MetricReport ir = interp_metrics(interp, gt, spec, cfg.interp_train.w1_pad);
                interp_reports.push_back(ir);
                row["interp"] = metric_report_json(ir);
            }
            const StudyMetrics sm = study_metrics(synth, gt, cfg.interp_train.w1_pad);
            phase_reports.push_back(sm.phase);
            row["phase"] = metric_report_json(sm.phase);

            const VelocityCurves curves = global_curves(synth);
            write_curves_csv(kdir / ("curves_" + name + ".csv"), curves);
            write_curves_svg(kdir / ("curves_" + name + ".svg"), curves);
            const CurveComparison cmp = compare_curves(curves, gt_curves[i], systole_end);
            json vel;
            vel["pearson_radial"] = cmp.pearson_radial ? json(*cmp.pearson_radial) : json();
            vel["pearson_circumferential"] =
                cmp.pearson_circumferential ? json(*cmp.pearson_circumferential) : json();
            vel["pearson_longitudinal"] =
                cmp.pearson_longitudinal ? json(*cmp.pearson_longitudinal) : json();
            vel["stats"] = stats_json(curves, systole_end);
            vel["stats_real"] = stats_json(gt_curves[i], systole_end);
            row["velocity"] = vel;
            studies.push_back(row);

            if (cmp.pearson_radial) pearsons_r.push_back(*cmp.pearson_radial);
            if (cmp.pearson_circumferential)
                pearsons_c.push_back(*cmp.pearson_circumferential);
            if (cmp.pearson_longitudinal) pearsons_z.push_back(*cmp.pearson_longitudinal);
            const VelocityStats vs[3] = {cmp.stats_a[0], cmp.stats_a[1], cmp.stats_a[2]};
            for (int d = 0; d < 3; ++d) {
                psv[d].push_back(vs[d].psv);
                tpsv[d].push_back(vs[d].tpsv);
                pdv[d].push_back(vs[d].pdv);
                tpdv[d].push_back(vs[d].tpdv);
                mv[d].push_back(vs[d].mv);
            }
        }

        kjson["studies"] = studies;
        if (!interp_reports.empty()) kjson["interp_aggregate"] = aggregate_reports(interp_reports);
        kjson["phase_aggregate"] = aggregate_reports(phase_reports);
        kjson["pearson"] = {{"radial", mean_std_json(pearsons_r)},
                            {"circumferential", mean_std_json(pearsons_c)},
                            {"longitudinal", mean_std_json(pearsons_z)}};
        const char* dir_names[3] = {"radial", "circumferential", "longitudinal"};
        json vstats;
        for (int d = 0; d < 3; ++d)
            vstats[dir_names[d]] = {{"psv", mean_std_json(psv[d])},
                                    {"tpsv", mean_std_json(tpsv[d])},
                                    {"pdv", mean_std_json(pdv[d])},
                                    {"tpdv", mean_std_json(tpdv[d])},
                                    {"mv", mean_std_json(mv[d])}};
        kjson["velocity_stats"] = vstats;
        write_json(kdir / "report.json", kjson);
        per_k["K" + std::to_string(k)] = kjson;
    }

    summary["per_k"] = per_k;

    // Table-3-shaped summary: real stats plus per-K stats.
    {
        json table3;
        const char* dir_names[3] = {"radial", "circumferential", "longitudinal"};
        std::vector<double> rpsv[3], rtpsv[3], rpdv[3], rtpdv[3], rmv[3];
        for (size_t i = 0; i < gt_curves.size(); ++i) {
            const std::vector<double>* series[3] = {&gt_curves[i].radial,
                                                    &gt_curves[i].circumferential,
                                                    &gt_curves[i].longitudinal};
            for (int d = 0; d < 3; ++d) {
                const VelocityStats s = curve_stats(*series[d], systole_end);
                rpsv[d].push_back(s.psv);
                rtpsv[d].push_back(s.tpsv);
                rpdv[d].push_back(s.pdv);
                rtpdv[d].push_back(s.tpdv);
                rmv[d].push_back(s.mv);
            }
        }
        for (int d = 0; d < 3; ++d) {
            json col;
            col["real"] = {{"psv", mean_std_json(rpsv[d])},
                           {"tpsv", mean_std_json(rtpsv[d])},
                           {"pdv", mean_std_json(rpdv[d])},
                           {"tpdv", mean_std_json(rtpdv[d])},
                           {"mv", mean_std_json(rmv[d])}};
            for (int k : cfg.k_list)
                col["K" + std::to_string(k)] =
                    per_k["K" + std::to_string(k)]["velocity_stats"][dir_names[d]];
            table3[dir_names[d]] = col;
        }
        write_json(out_dir / "table3.json", table3);
        summary["table3"] = table3;
    }

    // Table-2-shaped summary: phase metrics per K.
    {
        json table2;
        for (int k : cfg.k_list)
            table2["K" + std::to_string(k)] = per_k["K" + std::to_string(k)]["phase_aggregate"];
        write_json(out_dir / "table2.json", table2);
        summary["table2"] = table2;
    }

    write_json(out_dir / "summary.json", summary);
    return summary;
}

// ---------------------------------------------------------------------------
// K sweep
// ---------------------------------------------------------------------------

json ksweep_report(const PipelineConfig& cfg, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    PipelineData data = prepare_data(cfg);
    const fs::path ckpt_dir = out_dir / "ckpt";

    std::vector<int> ks;
    for (int k : cfg.k_list)
        if (k >= 1) ks.push_back(k);
    if (ks.empty()) throw ConfigError("ksweep needs at least one K >= 1");

    const std::vector<std::string> methods = {"linear", "flow", "single", "multihead"};
    json table = json::object();
    json notices = json::array();

    // rows[metric][method] -> y values over K
    std::map<std::string, std::map<std::string, std::vector<double>>> chart;

    for (const std::string& method : methods) {
        json per_k = json::object();
        for (int k : ks) {
            const DownsampleSpec spec{k, 0};
            std::unique_ptr<InterpModel> model;
            std::string effective = method;
            if (method == "single" || method == "multihead") {
                const char* tag = method == "multihead" ? "interp_k" : "interp1s_k";
                const fs::path dir = ckpt_dir / (tag + std::to_string(k));
                if (!fs::exists(dir / "manifest.json")) {
                    notices.push_back("missing checkpoint for method " + method + " at K=" +
                                      std::to_string(k) + "; skipped");
                    continue;
                }
                model = InterpModel::load(dir);
                effective = "learned";
            }
            std::vector<MetricReport> reports;
            for (const CineStudy* gt : data.split.test) {
                CineStudy interp = interpolate_with_method(*gt, spec, effective, model.get(),
                                                           cfg.horn_schunck, cfg.threads);
                reports.push_back(interp_metrics(interp, *gt, spec, cfg.interp_train.w1_pad));
            }
            const json agg = aggregate_reports(reports);
            per_k["K" + std::to_string(k)] = agg;
            for (const char* metric : {"mse", "msew1", "msew2", "psnr", "ssim", "dice"})
                chart[metric][method].push_back(agg[metric]["mean"].get<double>());
        }
        table[method] = per_k;
    }

    // CSV: method, K, metric, mean, std.
    {
        std::ofstream f(out_dir / "ksweep.csv");
        f << "method,K,metric,mean,std\n";
        char buf[160];
        for (const std::string& method : methods) {
            for (int k : ks) {
                const std::string kk = "K" + std::to_string(k);
                if (!table[method].contains(kk)) continue;
                for (const char* metric : {"mse", "msew1", "msew2", "psnr", "ssim", "dice"}) {
                    const json& m = table[method][kk][metric];
                    std::snprintf(buf, sizeof(buf), "%s,%d,%s,%.9g,%.9g\n", method.c_str(), k,
                                  metric, m["mean"].get<double>(), m["std"].get<double>());
                    f << buf;
                }
            }
        }
    }

    for (const char* metric : {"mse", "msew1", "msew2", "psnr", "ssim", "dice"}) {
        std::vector<SvgSeries> series;
        for (const std::string& method : methods) {
            if (chart[metric][method].empty()) continue;
            SvgSeries s;
            s.label = method;
            // x values follow the Ks actually evaluated for this method
            size_t idx = 0;
            for (int k : ks) {
                if (!table[method].contains("K" + std::to_string(k))) continue;
                s.x.push_back(k);
                s.y.push_back(chart[metric][method][idx++]);
            }
            series.push_back(std::move(s));
        }
        if (!series.empty())
            write_line_chart(out_dir / ("ksweep_" + std::string(metric) + ".svg"),
                             std::string(metric) + " vs K", "K", metric, series);
    }

    json out;
    out["table"] = table;
    out["notices"] = notices;
    write_json(out_dir / "ksweep.json", out);
    return out;
}

// ---------------------------------------------------------------------------
// GAN ablation
// ---------------------------------------------------------------------------

json gan_ablation(const PipelineConfig& cfg, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    PipelineData data = prepare_data(cfg);

    json table = json::object();
    for (int k : cfg.ablation_k_list) {
        if (k < 1) throw ConfigError("ablation K values must be >= 1");
        const DownsampleSpec spec{k, 0};
        InterpDataset train = build_interp_dataset(data.split.train, k);
        InterpDataset val = build_interp_dataset(data.split.val, k);
        TrainConfig tc = cfg.interp_train;
        tc.seed = mix_seed(cfg.seed, 0x6000 + uint64_t(k));
        tc.threads = cfg.threads;

        json row = json::object();
        for (const bool use_gan : {false, true}) {
            InterpModel model(cfg.interp_net, InterpModel::Arch::MultiHead,
                              mix_seed(cfg.seed, 0x7000 + uint64_t(k)));
            AdversarialConfig adv = cfg.ablation;
            adv.enabled = use_gan;
            train_interp(model, train, val, tc, adv);

            std::vector<MetricReport> reports;
            for (const CineStudy* gt : data.split.test) {
                CineStudy interp = interpolate_series(model, *gt, spec, cfg.threads);
                reports.push_back(interp_metrics(interp, *gt, spec, cfg.interp_train.w1_pad));
            }
            row[use_gan ? "gan" : "ours"] = aggregate_reports(reports);
        }
        table["K" + std::to_string(k)] = row;
    }

    {
        std::ofstream f(out_dir / "gan_ablation.csv");
        f << "K,variant,metric,mean,std\n";
        char buf[160];
        for (int k : cfg.ablation_k_list) {
            for (const char* variant : {"ours", "gan"}) {
                for (const char* metric : {"mse", "msew1", "msew2", "psnr", "ssim", "dice"}) {
                    const json& m = table["K" + std::to_string(k)][variant][metric];
                    std::snprintf(buf, sizeof(buf), "%d,%s,%s,%.9g,%.9g\n", k, variant, metric,
                                  m["mean"].get<double>(), m["std"].get<double>());
                    f << buf;
                }
            }
        }
    }
    json out;
    out["table"] = table;
    write_json(out_dir / "gan_ablation.json", out);
    return out;
}

}  // namespace mvms
