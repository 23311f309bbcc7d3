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

#include "mvms/phase.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mvms/metrics.hpp"

namespace mvms {

using nn::Tensor;

Tensor magnitude_triplet(const CineStudy& study, int t) {
    const int n = study.frames();
    if (t < 0 || t >= n) throw std::invalid_argument("magnitude_triplet: frame out of range");
    Tensor x(3, study.height(), study.width());
    const Image& prev = study.magnitude[wrap_index(t - 1, n)];
    const Image& cur = study.magnitude[t];
    const Image& next = study.magnitude[wrap_index(t + 1, n)];
    std::copy(prev.px.begin(), prev.px.end(), x.chan(0));
    std::copy(cur.px.begin(), cur.px.end(), x.chan(1));
    std::copy(next.px.begin(), next.px.end(), x.chan(2));
    return x;
}

Mask split_foreground(const Image& magnitude) {
    Mask fg(magnitude.h, magnitude.w);
    for (size_t i = 0; i < magnitude.px.size(); ++i)
        fg.px[i] = magnitude.px[i] > kBackgroundThreshold ? 1 : 0;
    return fg;
}

Image sample_background(int h, int w, const NoiseModel& noise, uint64_t seed) {
    if (noise.sigma <= 0) throw std::invalid_argument("sample_background: sigma must be > 0");
    DetRng rng(seed);
    Image out(h, w);
    for (float& v : out.px)
        v = float(std::clamp(noise.mu + noise.sigma * rng.normal(), -1.0, 1.0));
    return out;
}

Tensor composite_phase(const Tensor& generated, const Image& magnitude,
                       const NoiseModel& noise, uint64_t seed) {
    if (generated.h != magnitude.h || generated.w != magnitude.w)
        throw std::invalid_argument("composite_phase: shape mismatch");
    const Mask fg = split_foreground(magnitude);
    Tensor out = generated;
    for (int c = 0; c < generated.c; ++c) {
        const Image bg = sample_background(magnitude.h, magnitude.w, noise, mix_seed(seed, c));
        float* dst = out.chan(c);
        for (size_t i = 0; i < fg.px.size(); ++i)
            if (!fg.px[i]) dst[i] = bg.px[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

PhaseModel::PhaseModel(const PhaseNetConfig& cfg, uint64_t seed) : cfg_(cfg) {
    nn::UNetSpec spec;
    spec.in_ch = 3;
    spec.out_ch = 3;
    spec.base = cfg.base_channels;
    spec.depth = cfg.depth;
    spec.steps = cfg.recurrence_steps;
    gen_ = std::make_unique<nn::UNetCore>(gps_, "phasegen", spec, mix_seed(seed, 11));
    disc_ = std::make_unique<nn::PatchDisc>(dps_, "phasedisc", 6, cfg.disc_base,
                                            mix_seed(seed, 12));
}

Tensor PhaseModel::generate(const Tensor& triplet) const {
    nn::UNetCore::Ctx ctx;
    return nn::tanh_fwd(gen_->forward(gps_, triplet, ctx));
}

void PhaseModel::save(const std::filesystem::path& dir, const nlohmann::json& extra) const {
    nlohmann::json info;
    info["model"] = "phase";
    info["config"] = {{"base_channels", cfg_.base_channels},
                      {"depth", cfg_.depth},
                      {"recurrence_steps", cfg_.recurrence_steps},
                      {"disc_base", cfg_.disc_base},
                      {"l1_weight", cfg_.l1_weight},
                      {"adversarial_weight", cfg_.adversarial_weight},
                      {"composite", cfg_.composite}};
    info["extra"] = extra;
    nn::save_checkpoint(gps_, dir, info);
}

std::unique_ptr<PhaseModel> PhaseModel::load(const std::filesystem::path& dir) {
    nlohmann::json info = nn::peek_checkpoint_info(dir);
    if (info.at("model").get<std::string>() != "phase")
        throw std::runtime_error("checkpoint is not a phase model: " + dir.string());
    PhaseNetConfig cfg;
    const auto& c = info.at("config");
    cfg.base_channels = c.at("base_channels").get<int>();
    cfg.depth = c.at("depth").get<int>();
    cfg.recurrence_steps = c.at("recurrence_steps").get<int>();
    cfg.disc_base = c.at("disc_base").get<int>();
    cfg.l1_weight = c.at("l1_weight").get<double>();
    cfg.adversarial_weight = c.at("adversarial_weight").get<double>();
    cfg.composite = c.at("composite").get<bool>();
    auto model = std::make_unique<PhaseModel>(cfg, 0);
    nn::load_checkpoint(model->gps_, dir);
    return model;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct PhaseTrainAccess {
    static nn::ParamStore& gps(PhaseModel& m) { return m.gps_; }
    static nn::ParamStore& dps(PhaseModel& m) { return m.dps_; }
    static nn::UNetCore& gen(PhaseModel& m) { return *m.gen_; }
    static nn::PatchDisc& disc(PhaseModel& m) { return *m.disc_; }
};

namespace {

struct Sample {
    const CineStudy* study;
    int t;
};

Tensor real_phases(const CineStudy& s, int t) {
    Tensor x(3, s.height(), s.width());
    std::copy(s.phase_x[t].px.begin(), s.phase_x[t].px.end(), x.chan(0));
    std::copy(s.phase_y[t].px.begin(), s.phase_y[t].px.end(), x.chan(1));
    std::copy(s.phase_z[t].px.begin(), s.phase_z[t].px.end(), x.chan(2));
    return x;
}

// L1 on foreground pixels (all pixels when fg is null), averaged over the
// contributing pixel count; fills the gradient wrt `gen`.
double masked_l1_grad(const Tensor& gen, const Tensor& real, const Mask* fg, Tensor& grad) {
    grad = Tensor(gen.c, gen.h, gen.w);
    long count = 0;
    double loss = 0;
    for (int c = 0; c < gen.c; ++c) {
        const float* g = gen.chan(c);
        const float* r = real.chan(c);
        float* gr = grad.chan(c);
        for (int i = 0; i < gen.plane(); ++i) {
            if (fg && !fg->px[i]) continue;
            const float d = g[i] - r[i];
            loss += std::abs(double(d));
            gr[i] = (d > 0.f) ? 1.f : (d < 0.f ? -1.f : 0.f);
            ++count;
        }
    }
    if (count == 0) return 0.0;
    const float inv = 1.f / float(count);
    for (float& v : grad.v) v *= inv;
    return loss / double(count);
}

double lsgan_term(const Tensor& scores, float target, Tensor& grad) {
    grad = Tensor(scores.c, scores.h, scores.w);
    double loss = 0;
    const float inv = 1.f / float(scores.v.size());
    for (size_t i = 0; i < scores.v.size(); ++i) {
        const float d = scores.v[i] - target;
        loss += double(d) * d;
        grad.v[i] = 2.f * d * inv;
    }
    return loss / double(scores.v.size());
}

Tensor disc_pair(const Tensor& triplet, const Tensor& phases) {
    Tensor x(6, triplet.h, triplet.w);
    std::copy(triplet.v.begin(), triplet.v.end(), x.v.begin());
    std::copy(phases.v.begin(), phases.v.end(), x.v.begin() + triplet.v.size());
    return x;
}

float quantize_phase(float v) { return normalize_phase_raw(denormalize_phase(v)); }

}  // namespace

PhaseTrainResult train_phase(PhaseModel& model,
                             const std::vector<const CineStudy*>& train_studies,
                             const std::vector<const CineStudy*>& val_studies,
                             const PhaseTrainConfig& cfg) {
    if (train_studies.empty()) throw std::invalid_argument("train_phase: no training studies");
    const int threads = nn::resolve_threads(cfg.threads);
    const PhaseNetConfig& ncfg = model.config();

    std::vector<Sample> samples, val_samples;
    for (const CineStudy* s : train_studies)
        for (int t = 0; t < s->frames(); ++t) samples.push_back({s, t});
    for (const CineStudy* s : val_studies)
        for (int t = 0; t < s->frames(); ++t) val_samples.push_back({s, t});

    nn::ParamStore& gps = PhaseTrainAccess::gps(model);
    nn::ParamStore& dps = PhaseTrainAccess::dps(model);
    nn::UNetCore& gen = PhaseTrainAccess::gen(model);
    nn::PatchDisc& disc = PhaseTrainAccess::disc(model);

    nn::Adam gopt(gps.value.size(), cfg.learning_rate);
    nn::Adam dopt(dps.value.size(), cfg.learning_rate);
    std::vector<nn::GradBuf> ggrads(threads), dgrads(threads);

    std::vector<int> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);

    PhaseTrainResult result;
    nn::AVec best_params;
    double best_val = std::numeric_limits<double>::infinity();
    const NoiseModel noise;   // training-set fit (0.034, 0.034)

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        nn::shuffle_indices(order, mix_seed(cfg.seed, 5000 + uint64_t(epoch)));
        double el1 = 0, eadv = 0, edl = 0;
        long batches = 0;

        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
            const size_t stop = std::min(order.size(), start + size_t(cfg.batch_size));
            const int bsz = int(stop - start);

            struct Item {
                Tensor triplet, real, gen_out, fake;
                nn::UNetCore::Ctx gctx;
                Mask fg;
                double l1 = 0, adv = 0;
            };
            std::vector<Item> items(bsz);

            for (auto& g : ggrads) g.assign(gps.value.size(), 0.f);
            nn::parallel_for(bsz, threads, [&](int i, int tid) {
                Item& it = items[i];
                const Sample& smp = samples[order[start + i]];
                it.triplet = magnitude_triplet(*smp.study, smp.t);
                it.real = real_phases(*smp.study, smp.t);
                it.fg = split_foreground(smp.study->magnitude[smp.t]);

                Tensor raw = gen.forward(gps, it.triplet, it.gctx);
                it.gen_out = nn::tanh_fwd(raw);

                const uint64_t bg_seed =
                    mix_seed(cfg.seed, 0xC0000000ULL + uint64_t(epoch) * order.size() +
                                           uint64_t(order[start + i]));
                it.fake = ncfg.composite
                              ? composite_phase(it.gen_out,
                                                smp.study->magnitude[smp.t], noise, bg_seed)
                              : it.gen_out;

                Tensor g_l1;
                it.l1 = masked_l1_grad(it.gen_out, it.real,
                                       ncfg.composite ? &it.fg : nullptr, g_l1);

                // Adversarial term through the discriminator input.
                Tensor g_gen = g_l1;
                for (float& v : g_gen.v) v *= float(ncfg.l1_weight);
                if (ncfg.adversarial_weight > 0) {
                    nn::PatchDisc::Ctx dctx;
                    Tensor scores = disc.forward(dps, disc_pair(it.triplet, it.fake), dctx);
                    Tensor g_scores;
                    it.adv = lsgan_term(scores, 1.f, g_scores);
                    for (float& v : g_scores.v) v *= float(ncfg.adversarial_weight);
                    nn::GradBuf dsink(dps.value.size(), 0.f);
                    Tensor g_in = disc.backward(dps, g_scores, dctx, dsink);
                    // Phase channels of the pair; background pixels are
                    // noise constants in compositing mode.
                    for (int c = 0; c < 3; ++c) {
                        const float* gi = g_in.chan(3 + c);
                        float* gg = g_gen.chan(c);
                        for (int p = 0; p < g_gen.plane(); ++p) {
                            if (ncfg.composite && !it.fg.px[p]) continue;
                            gg[p] += gi[p];
                        }
                    }
                }

                Tensor g_raw = nn::tanh_back(g_gen, it.gen_out);
                gen.backward(gps, g_raw, it.gctx, ggrads[tid]);
            });

            nn::GradBuf gtotal(gps.value.size(), 0.f);
            for (const auto& g : ggrads)
                for (size_t i = 0; i < gtotal.size(); ++i) gtotal[i] += g[i];
            const float scale = 1.f / float(bsz);
            for (float& v : gtotal) v *= scale;
            gopt.step(gps.value, gtotal);

            // Discriminator update on real vs detached fakes.
            double dl_batch = 0;
            if (ncfg.adversarial_weight > 0) {
                for (auto& g : dgrads) g.assign(dps.value.size(), 0.f);
                std::vector<double> dl(bsz, 0.0);
                nn::parallel_for(bsz, threads, [&](int i, int tid) {
                    Item& it = items[i];
                    nn::PatchDisc::Ctx ctx_r, ctx_f;
                    Tensor sr = disc.forward(dps, disc_pair(it.triplet, it.real), ctx_r);
                    Tensor sf = disc.forward(dps, disc_pair(it.triplet, it.fake), ctx_f);
                    Tensor gr, gf;
                    dl[i] = 0.5 * lsgan_term(sr, 1.f, gr) + 0.5 * lsgan_term(sf, 0.f, gf);
                    for (float& v : gr.v) v *= 0.5f;
                    for (float& v : gf.v) v *= 0.5f;
                    disc.backward(dps, gr, ctx_r, dgrads[tid]);
                    disc.backward(dps, gf, ctx_f, dgrads[tid]);
                });
                nn::GradBuf dtotal(dps.value.size(), 0.f);
                for (const auto& g : dgrads)
                    for (size_t i = 0; i < dtotal.size(); ++i) dtotal[i] += g[i];
                for (float& v : dtotal) v *= scale;
                dopt.step(dps.value, dtotal);
                for (double v : dl) dl_batch += v;
                dl_batch /= double(bsz);
            }

            for (const auto& it : items) {
                el1 += it.l1;
                eadv += it.adv;
            }
            edl += dl_batch;
            ++batches;
        }

        el1 /= double(samples.size());
        eadv /= double(samples.size());
        edl /= double(batches);
        if (!std::isfinite(el1) || !std::isfinite(edl))
            throw TrainingFailure("train_phase: loss diverged at epoch " + std::to_string(epoch));
        result.g_l1.push_back(el1);
        result.g_adv.push_back(eadv);
        result.d_loss.push_back(edl);

        double vl1 = el1;
        if (!val_samples.empty()) {
            std::vector<double> vl(val_samples.size(), 0.0);
            nn::parallel_for(int(val_samples.size()), threads, [&](int i, int) {
                const Sample& smp = val_samples[i];
                Tensor triplet = magnitude_triplet(*smp.study, smp.t);
                Tensor out = model.generate(triplet);
                Tensor real = real_phases(*smp.study, smp.t);
                Mask fg = split_foreground(smp.study->magnitude[smp.t]);
                Tensor g;
                vl[i] = masked_l1_grad(out, real, ncfg.composite ? &fg : nullptr, g);
            });
            vl1 = 0;
            for (double v : vl) vl1 += v;
            vl1 /= double(vl.size());
        }
        result.val_l1.push_back(vl1);
        if (vl1 < best_val) {
            best_val = vl1;
            best_params = gps.value;
            result.best_epoch = epoch;
        }
    }

    if (!best_params.empty()) gps.value = std::move(best_params);
    return result;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

CineStudy synthesize_phases(const PhaseModel& model, const CineStudy& study,
                            const NoiseModel& noise, uint64_t seed, int threads) {
    CineStudy out = study;
    const int t = study.frames();
    nn::parallel_for(t, nn::resolve_threads(threads), [&](int f, int) {
        Tensor gen = model.generate(magnitude_triplet(study, f));
        Tensor phases = model.config().composite
                            ? composite_phase(gen, study.magnitude[f], noise,
                                              mix_seed(seed, uint64_t(f)))
                            : gen;
        for (float& v : phases.v) v = quantize_phase(v);
        out.phase_x[f] = nn::image_from_channel(phases, 0);
        out.phase_y[f] = nn::image_from_channel(phases, 1);
        out.phase_z[f] = nn::image_from_channel(phases, 2);
    });
    return out;
}

CineStudy synthesize_phases_oracle(const CineStudy& study, const NoiseModel& noise,
                                   uint64_t seed) {
    CineStudy out = study;
    for (int f = 0; f < study.frames(); ++f) {
        Tensor gt(3, study.height(), study.width());
        std::copy(study.phase_x[f].px.begin(), study.phase_x[f].px.end(), gt.chan(0));
        std::copy(study.phase_y[f].px.begin(), study.phase_y[f].px.end(), gt.chan(1));
        std::copy(study.phase_z[f].px.begin(), study.phase_z[f].px.end(), gt.chan(2));
        Tensor phases =
            composite_phase(gt, study.magnitude[f], noise, mix_seed(seed, uint64_t(f)));
        for (float& v : phases.v) v = quantize_phase(v);
        out.phase_x[f] = nn::image_from_channel(phases, 0);
        out.phase_y[f] = nn::image_from_channel(phases, 1);
        out.phase_z[f] = nn::image_from_channel(phases, 2);
    }
    return out;
}

}  // namespace mvms
