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

#include "mvms/interp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mvms/flow.hpp"

namespace mvms {

using nn::Tensor;

ConditionMaps make_condition_maps(int tau, int k, int num_frames, int big_k, int h, int w) {
    if (tau < 0 || tau >= num_frames)
        throw std::invalid_argument("make_condition_maps: tau out of [0, T)");
    if (k < 1 || k > big_k) throw std::invalid_argument("make_condition_maps: k out of [1, K]");
    ConditionMaps cond;
    cond.tau_map = Image(h, w, float(double(tau) / double(num_frames)));
    cond.k_map = Image(h, w, float(double(k) / double(big_k + 1)));
    return cond;
}

void InterpNetConfig::validate() const {
    if (depth < 2) throw std::invalid_argument("interp config: depth must be >= 2");
    if (recurrence_steps < 1)
        throw std::invalid_argument("interp config: recurrence_steps must be >= 1");
    if (base_channels < 1) throw std::invalid_argument("interp config: base_channels >= 1");
}

InterpDataset build_interp_dataset(const std::vector<const CineStudy*>& studies, int big_k) {
    if (big_k < 1) throw std::invalid_argument("build_interp_dataset: K must be >= 1");
    InterpDataset ds;
    ds.studies = studies;
    ds.big_k = big_k;
    for (size_t s = 0; s < studies.size(); ++s) {
        const int t = studies[s]->frames();
        for (int tau = 0; tau < t; tau += big_k + 1)
            for (int k = 1; k <= big_k; ++k) ds.samples.push_back({int(s), tau, k});
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

namespace {

// Input channel layout. Multi-head: magnitude stream (m_a, m_b, tau, k)
// and mask stream (s_a, s_b, tau, k). Single-stream: all six concatenated.
Tensor pack4(const Image& a, const Image& b, const ConditionMaps& cond) {
    Tensor t(4, a.h, a.w);
    std::copy(a.px.begin(), a.px.end(), t.chan(0));
    std::copy(b.px.begin(), b.px.end(), t.chan(1));
    std::copy(cond.tau_map.px.begin(), cond.tau_map.px.end(), t.chan(2));
    std::copy(cond.k_map.px.begin(), cond.k_map.px.end(), t.chan(3));
    return t;
}

}  // namespace

InterpModel::InterpModel(const InterpNetConfig& cfg, Arch arch, uint64_t seed)
    : cfg_(cfg), arch_(arch) {
    cfg.validate();
    nn::UNetSpec spec;
    spec.base = cfg.base_channels;
    spec.depth = cfg.depth;
    spec.steps = cfg.recurrence_steps;
    if (arch == Arch::MultiHead) {
        spec.in_ch = 4;
        dual_.emplace(ps_, "interp", spec, mix_seed(seed, 7));
    } else {
        spec.in_ch = 6;
        spec.out_ch = 2;
        single_.emplace(ps_, "interp1s", spec, mix_seed(seed, 7));
    }
}

namespace {

struct ForwardCtx {
    nn::DualUNet::Ctx dual;
    nn::UNetCore::Ctx single;
    Tensor raw_m, raw_s;      // linear tail outputs
    Tensor tanh_m;            // tanh of magnitude tail
    Image lin;                // linear-interpolation skip
};

}  // namespace

// Shared by inference and training so both see the same graph.
namespace detail {

struct InterpForward {
    Tensor m_hat;      // after skip + clamp
    Tensor s_logits;
    std::shared_ptr<ForwardCtx> ctx;
};

InterpForward interp_forward_t(const InterpModel& model, const nn::ParamStore& ps,
                               const Image& m_a, const Image& m_b, const Mask& s_a,
                               const Mask& s_b, const ConditionMaps& cond,
                               const nn::DualUNet* dual, const nn::UNetCore* single) {
    if (!m_a.same_shape(m_b) || m_a.h != s_a.h || m_a.w != s_a.w || m_a.h != s_b.h ||
        m_a.w != s_b.w || !m_a.same_shape(cond.tau_map))
        throw std::invalid_argument("interp_forward: input shape mismatch");

    InterpForward f;
    f.ctx = std::make_shared<ForwardCtx>();
    // k_map holds k/(K+1); reuse it for the endpoint-consistent skip.
    const float frac = cond.k_map.px.empty() ? 0.f : cond.k_map.px[0];
    f.ctx->lin = Image(m_a.h, m_a.w);
    for (size_t i = 0; i < f.ctx->lin.px.size(); ++i)
        f.ctx->lin.px[i] = (1.f - frac) * m_a.px[i] + frac * m_b.px[i];

    if (model.arch() == InterpModel::Arch::MultiHead) {
        Tensor xa = pack4(m_a, m_b, cond);
        Tensor sa = nn::tensor_from_mask(s_a), sb = nn::tensor_from_mask(s_b);
        Tensor xb(4, m_a.h, m_a.w);
        std::copy(sa.v.begin(), sa.v.end(), xb.chan(0));
        std::copy(sb.v.begin(), sb.v.end(), xb.chan(1));
        std::copy(cond.tau_map.px.begin(), cond.tau_map.px.end(), xb.chan(2));
        std::copy(cond.k_map.px.begin(), cond.k_map.px.end(), xb.chan(3));
        dual->forward(ps, xa, xb, f.ctx->dual, f.ctx->raw_m, f.ctx->raw_s);
    } else {
        Tensor x(6, m_a.h, m_a.w);
        std::copy(m_a.px.begin(), m_a.px.end(), x.chan(0));
        std::copy(m_b.px.begin(), m_b.px.end(), x.chan(1));
        for (size_t i = 0; i < s_a.px.size(); ++i) x.chan(2)[i] = float(s_a.px[i]);
        for (size_t i = 0; i < s_b.px.size(); ++i) x.chan(3)[i] = float(s_b.px[i]);
        std::copy(cond.tau_map.px.begin(), cond.tau_map.px.end(), x.chan(4));
        std::copy(cond.k_map.px.begin(), cond.k_map.px.end(), x.chan(5));
        Tensor out = single->forward(ps, x, f.ctx->single);
        f.ctx->raw_m = Tensor(1, out.h, out.w);
        f.ctx->raw_s = Tensor(1, out.h, out.w);
        std::copy(out.chan(0), out.chan(0) + out.plane(), f.ctx->raw_m.v.begin());
        std::copy(out.chan(1), out.chan(1) + out.plane(), f.ctx->raw_s.v.begin());
    }

    f.ctx->tanh_m = nn::tanh_fwd(f.ctx->raw_m);
    f.m_hat = Tensor(1, m_a.h, m_a.w);
    for (size_t i = 0; i < f.m_hat.v.size(); ++i) {
        float v = f.ctx->tanh_m.v[i] + f.ctx->lin.px[i];
        f.m_hat.v[i] = std::clamp(v, -1.f, 1.f);
    }
    f.s_logits = f.ctx->raw_s;
    return f;
}

// Push gradients at (m_hat, s_logits) back into the parameter gradients.
void interp_backward_t(const InterpModel& model, const nn::ParamStore& ps,
                       const InterpForward& f, const Tensor& g_mhat, const Tensor& g_slog,
                       const nn::DualUNet* dual, const nn::UNetCore* single,
                       nn::GradBuf& gb) {
    // Through the clamp: zero where the sum saturated.
    Tensor g_sum = g_mhat;
    for (size_t i = 0; i < g_sum.v.size(); ++i) {
        const float pre = f.ctx->tanh_m.v[i] + f.ctx->lin.px[i];
        if (pre <= -1.f || pre >= 1.f) g_sum.v[i] = 0.f;
    }
    Tensor g_raw_m = nn::tanh_back(g_sum, f.ctx->tanh_m);

    if (model.arch() == InterpModel::Arch::MultiHead) {
        dual->backward(ps, g_raw_m, g_slog, f.ctx->dual, gb);
    } else {
        Tensor g(2, g_raw_m.h, g_raw_m.w);
        std::copy(g_raw_m.v.begin(), g_raw_m.v.end(), g.chan(0));
        std::copy(g_slog.v.begin(), g_slog.v.end(), g.chan(1));
        single->backward(ps, g, f.ctx->single, gb);
    }
}

}  // namespace detail

InterpModel::Output InterpModel::infer(const Image& m_a, const Image& m_b, const Mask& s_a,
                                       const Mask& s_b, const ConditionMaps& cond) const {
    auto f = detail::interp_forward_t(*this, ps_, m_a, m_b, s_a, s_b, cond,
                                      dual_ ? &*dual_ : nullptr,
                                      single_ ? &*single_ : nullptr);
    Output out;
    out.m_hat = nn::image_from_channel(f.m_hat, 0);
    out.s_logits = nn::image_from_channel(f.s_logits, 0);
    return out;
}

void InterpModel::save(const std::filesystem::path& dir, const nlohmann::json& extra) const {
    nlohmann::json info;
    info["model"] = "interp";
    info["arch"] = (arch_ == Arch::MultiHead) ? "multihead" : "single";
    info["config"] = {{"base_channels", cfg_.base_channels},
                      {"depth", cfg_.depth},
                      {"recurrence_steps", cfg_.recurrence_steps}};
    info["extra"] = extra;
    nn::save_checkpoint(ps_, dir, info);
}

nlohmann::json InterpModel::peek_info(const std::filesystem::path& dir) {
    return nn::peek_checkpoint_info(dir);
}

std::unique_ptr<InterpModel> InterpModel::load(const std::filesystem::path& dir) {
    nlohmann::json info = nn::peek_checkpoint_info(dir);
    if (info.at("model").get<std::string>() != "interp")
        throw std::runtime_error("checkpoint is not an interpolation model: " + dir.string());
    InterpNetConfig cfg;
    cfg.base_channels = info.at("config").at("base_channels").get<int>();
    cfg.depth = info.at("config").at("depth").get<int>();
    cfg.recurrence_steps = info.at("config").at("recurrence_steps").get<int>();
    const Arch arch =
        info.at("arch").get<std::string>() == "multihead" ? Arch::MultiHead : Arch::SingleStream;
    auto model = std::make_unique<InterpModel>(cfg, arch, 0);
    nn::load_checkpoint(model->ps_, dir);
    return model;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

struct Batch {
    struct Item {
        Image m_a, m_b, m_gt;
        Mask s_a, s_b, s_gt;
        ConditionMaps cond;
    };
    std::vector<Item> items;
};

Batch::Item make_item(const InterpDataset& ds, const InterpSample& s, int crop_size) {
    const CineStudy& st = *ds.studies[s.study];
    const int t = st.frames();
    Batch::Item it;
    const int end = wrap_index(s.tau + ds.big_k + 1, t);
    const int target = wrap_index(s.tau + s.k, t);
    it.m_a = st.magnitude[s.tau];
    it.m_b = st.magnitude[end];
    it.m_gt = st.magnitude[target];
    it.s_a = st.seg[s.tau];
    it.s_b = st.seg[end];
    it.s_gt = st.seg[target];
    it.cond = make_condition_maps(s.tau, s.k, t, ds.big_k, st.height(), st.width());

    if (crop_size > 0 && crop_size < st.height()) {
        // Centre the crop on the union bounding box of the anchor masks.
        int y0 = st.height(), y1 = -1, x0 = st.width(), x1 = -1;
        auto grow = [&](const Mask& m) {
            for (int y = 0; y < m.h; ++y)
                for (int x = 0; x < m.w; ++x)
                    if (m.at(y, x)) {
                        y0 = std::min(y0, y);
                        y1 = std::max(y1, y);
                        x0 = std::min(x0, x);
                        x1 = std::max(x1, x);
                    }
        };
        grow(it.s_a);
        grow(it.s_b);
        int cy = (y1 >= 0) ? (y0 + y1) / 2 : st.height() / 2;
        int cx = (x1 >= 0) ? (x0 + x1) / 2 : st.width() / 2;
        int oy = std::clamp(cy - crop_size / 2, 0, st.height() - crop_size);
        int ox = std::clamp(cx - crop_size / 2, 0, st.width() - crop_size);
        auto crop_img = [&](const Image& src) {
            Image dst(crop_size, crop_size);
            for (int y = 0; y < crop_size; ++y)
                for (int x = 0; x < crop_size; ++x) dst.at(y, x) = src.at(oy + y, ox + x);
            return dst;
        };
        auto crop_mask = [&](const Mask& src) {
            Mask dst(crop_size, crop_size);
            for (int y = 0; y < crop_size; ++y)
                for (int x = 0; x < crop_size; ++x) dst.at(y, x) = src.at(oy + y, ox + x);
            return dst;
        };
        it.m_a = crop_img(it.m_a);
        it.m_b = crop_img(it.m_b);
        it.m_gt = crop_img(it.m_gt);
        it.s_a = crop_mask(it.s_a);
        it.s_b = crop_mask(it.s_b);
        it.s_gt = crop_mask(it.s_gt);
        it.cond.tau_map = Image(crop_size, crop_size, it.cond.tau_map.px[0]);
        it.cond.k_map = Image(crop_size, crop_size, it.cond.k_map.px[0]);
    }
    return it;
}

// Weighted-MAE loss and gradient in the training (float) path.
double wmae_loss_grad(const Tensor& m_hat, const Image& m_gt, const WeightMap& w1,
                      const WeightMap& w2, Tensor& grad) {
    const size_t n = m_hat.v.size();
    grad = Tensor(1, m_hat.h, m_hat.w);
    double loss = 0;
    const float inv_n = 1.f / float(n);
    for (size_t i = 0; i < n; ++i) {
        const float d = m_hat.v[i] - m_gt.px[i];
        const float wsum = w1.wt[i] + w2.wt[i];
        loss += double(wsum) * std::abs(double(d));
        grad.v[i] = wsum * ((d > 0.f) ? inv_n : (d < 0.f ? -inv_n : 0.f));
    }
    return loss / double(n);
}

double bce_loss_grad(const Tensor& logits, const Mask& target, Tensor& grad) {
    const size_t n = logits.v.size();
    grad = Tensor(1, logits.h, logits.w);
    double loss = 0;
    const float inv_n = 1.f / float(n);
    for (size_t i = 0; i < n; ++i) {
        const double z = logits.v[i];
        const double y = target.px[i];
        loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
        const double sig = 1.0 / (1.0 + std::exp(-z));
        grad.v[i] = float((sig - y) * inv_n);
    }
    return loss / double(n);
}

// LSGAN target-1 generator term on patch scores: mean((d-1)^2).
double lsgan_gen_loss_grad(const Tensor& scores, Tensor& grad) {
    grad = Tensor(scores.c, scores.h, scores.w);
    double loss = 0;
    const float inv_n = 1.f / float(scores.v.size());
    for (size_t i = 0; i < scores.v.size(); ++i) {
        const float d = scores.v[i] - 1.f;
        loss += double(d) * d;
        grad.v[i] = 2.f * d * inv_n;
    }
    return loss / double(scores.v.size());
}

double lsgan_disc_loss_grad(const Tensor& scores, float target, Tensor& grad) {
    grad = Tensor(scores.c, scores.h, scores.w);
    double loss = 0;
    const float inv_n = 1.f / float(scores.v.size());
    for (size_t i = 0; i < scores.v.size(); ++i) {
        const float d = scores.v[i] - target;
        loss += double(d) * d;
        grad.v[i] = 2.f * d * inv_n;
    }
    return loss / double(scores.v.size());
}

Tensor disc_input(const Batch::Item& it, const Tensor& m) {
    Tensor x(5, m.h, m.w);
    std::copy(it.m_a.px.begin(), it.m_a.px.end(), x.chan(0));
    std::copy(it.m_b.px.begin(), it.m_b.px.end(), x.chan(1));
    std::copy(it.cond.tau_map.px.begin(), it.cond.tau_map.px.end(), x.chan(2));
    std::copy(it.cond.k_map.px.begin(), it.cond.k_map.px.end(), x.chan(3));
    std::copy(m.v.begin(), m.v.end(), x.chan(4));
    return x;
}

}  // namespace

InterpTrainResult train_interp(InterpModel& model, const InterpDataset& train,
                               const InterpDataset& val, const TrainConfig& cfg,
                               const AdversarialConfig& adv) {
    if (train.samples.empty()) throw std::invalid_argument("train_interp: empty dataset");
    if (cfg.learning_rate <= 0) throw std::invalid_argument("train_interp: bad learning rate");

    const int threads = nn::resolve_threads(cfg.threads);
    const nn::DualUNet* dual =
        model.arch_ == InterpModel::Arch::MultiHead ? &*model.dual_ : nullptr;
    const nn::UNetCore* single =
        model.arch_ == InterpModel::Arch::SingleStream ? &*model.single_ : nullptr;

    nn::Adam opt(model.ps_.value.size(), cfg.learning_rate);
    std::vector<nn::GradBuf> grads(threads);
    for (auto& g : grads) g.assign(model.ps_.value.size(), 0.f);
    nn::GradBuf total(model.ps_.value.size(), 0.f);

    // Optional patch discriminator on (anchors, condition, output).
    std::unique_ptr<nn::ParamStore> dps;
    std::unique_ptr<nn::PatchDisc> disc;
    std::unique_ptr<nn::Adam> dopt;
    std::vector<nn::GradBuf> dgrads;
    if (adv.enabled) {
        dps = std::make_unique<nn::ParamStore>();
        disc = std::make_unique<nn::PatchDisc>(*dps, "disc", 5, adv.disc_base,
                                               mix_seed(cfg.seed, 99));
        dopt = std::make_unique<nn::Adam>(dps->value.size(), adv.disc_lr);
        dgrads.resize(threads);
    }

    InterpTrainResult result;
    std::vector<int> order(train.samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);

    nn::AVec best_params;
    double best_val = std::numeric_limits<double>::infinity();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        nn::shuffle_indices(order, mix_seed(cfg.seed, 1000 + uint64_t(epoch)));
        double epoch_loss = 0;
        long counted = 0;

        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
            const size_t stop = std::min(order.size(), start + size_t(cfg.batch_size));
            const int bsz = int(stop - start);
            std::vector<Batch::Item> items(bsz);
            for (int i = 0; i < bsz; ++i)
                items[i] = make_item(train, train.samples[order[start + i]], cfg.crop_size);

            std::vector<double> losses(bsz, 0.0);
            std::vector<detail::InterpForward> fwd(bsz);

            for (auto& g : grads) std::fill(g.begin(), g.end(), 0.f);
            nn::parallel_for(bsz, threads, [&](int i, int tid) {
                const auto& it = items[i];
                auto f = detail::interp_forward_t(model, model.ps_, it.m_a, it.m_b, it.s_a,
                                                  it.s_b, it.cond, dual, single);
                const WeightMap w1 = roi_weight_map(it.s_gt, cfg.w1_pad);
                const WeightMap w2 = foreground_weight_map(it.m_gt);
                Tensor g_m, g_s;
                double loss = wmae_loss_grad(f.m_hat, it.m_gt, w1, w2, g_m);
                loss += bce_loss_grad(f.s_logits, it.s_gt, g_s);

                if (adv.enabled) {
                    nn::PatchDisc::Ctx dctx;
                    Tensor scores = disc->forward(*dps, disc_input(it, f.m_hat), dctx);
                    Tensor g_scores;
                    loss += adv.weight * lsgan_gen_loss_grad(scores, g_scores);
                    for (float& v : g_scores.v) v *= float(adv.weight);
                    nn::GradBuf dsink(dps->value.size(), 0.f);   // G step ignores D grads
                    Tensor g_dinput = disc->backward(*dps, g_scores, dctx, dsink);
                    // adversarial gradient reaches the magnitude channel
                    for (int p = 0; p < g_m.plane(); ++p) g_m.v[p] += g_dinput.chan(4)[p];
                }

                detail::interp_backward_t(model, model.ps_, f, g_m, g_s, dual, single,
                                          grads[tid]);
                losses[i] = loss;
                fwd[i] = std::move(f);
            });

            std::fill(total.begin(), total.end(), 0.f);
            for (const auto& g : grads)
                for (size_t i = 0; i < total.size(); ++i) total[i] += g[i];
            const float scale = 1.f / float(bsz);
            for (float& v : total) v *= scale;
            opt.step(model.ps_.value, total);

            for (int i = 0; i < bsz; ++i) epoch_loss += losses[i];
            counted += bsz;

            if (adv.enabled) {
                // Discriminator step on real vs (detached) fake pairs.
                for (auto& g : dgrads) g.assign(dps->value.size(), 0.f);
                std::vector<double> dloss(bsz, 0.0);
                nn::parallel_for(bsz, threads, [&](int i, int tid) {
                    const auto& it = items[i];
                    nn::PatchDisc::Ctx ctx_r, ctx_f;
                    Tensor real = disc->forward(*dps, disc_input(it, nn::tensor_from_image(it.m_gt)),
                                                ctx_r);
                    Tensor fake = disc->forward(*dps, disc_input(it, fwd[i].m_hat), ctx_f);
                    Tensor gr, gf;
                    double l = 0.5 * lsgan_disc_loss_grad(real, 1.f, gr) +
                               0.5 * lsgan_disc_loss_grad(fake, 0.f, gf);
                    for (float& v : gr.v) v *= 0.5f;
                    for (float& v : gf.v) v *= 0.5f;
                    disc->backward(*dps, gr, ctx_r, dgrads[tid]);
                    disc->backward(*dps, gf, ctx_f, dgrads[tid]);
                    dloss[i] = l;
                });
                nn::GradBuf dtotal(dps->value.size(), 0.f);
                for (const auto& g : dgrads)
                    for (size_t i = 0; i < dtotal.size(); ++i) dtotal[i] += g[i];
                for (float& v : dtotal) v *= scale;
                dopt->step(dps->value, dtotal);
            }
        }

        epoch_loss /= double(counted);
        if (!std::isfinite(epoch_loss))
            throw TrainingFailure("train_interp: loss diverged at epoch " +
                                  std::to_string(epoch));
        result.epoch_loss.push_back(epoch_loss);

        // Validation weighted MAE for checkpoint selection.
        double vloss = 0;
        if (!val.samples.empty()) {
            std::vector<double> vlosses(val.samples.size(), 0.0);
            nn::parallel_for(int(val.samples.size()), threads, [&](int i, int) {
                const auto it = make_item(val, val.samples[i], cfg.crop_size);
                auto f = detail::interp_forward_t(model, model.ps_, it.m_a, it.m_b, it.s_a,
                                                  it.s_b, it.cond, dual, single);
                const WeightMap w1 = roi_weight_map(it.s_gt, cfg.w1_pad);
                const WeightMap w2 = foreground_weight_map(it.m_gt);
                vlosses[i] = weighted_mae(nn::image_from_channel(f.m_hat, 0), it.m_gt, w1, w2);
            });
            for (double v : vlosses) vloss += v;
            vloss /= double(vlosses.size());
        } else {
            vloss = epoch_loss;
        }
        result.val_wmae.push_back(vloss);
        if (vloss < best_val) {
            best_val = vloss;
            best_params = model.ps_.value;
            result.best_epoch = epoch;
        }
    }

    if (!best_params.empty()) model.ps_.value = std::move(best_params);
    return result;
}

// ---------------------------------------------------------------------------
// Series interpolation
// ---------------------------------------------------------------------------

CineStudy interpolate_series(const InterpModel& model, const CineStudy& input,
                             const DownsampleSpec& spec, int threads) {
    const int t = input.frames();
    spec.validate(t);
    if (spec.k == 0) return input;

    const int stride = spec.k + 1;
    const int offset = spec.offset % stride;
    std::vector<int> anchors;
    for (int i = offset; i < t; i += stride) anchors.push_back(i);
    if (anchors.empty()) throw std::invalid_argument("interpolate_series: no anchor frames");

    CineStudy out = input;
    struct Job {
        int tau, next, frame, k, gap;
    };
    std::vector<Job> jobs;
    for (size_t a = 0; a < anchors.size(); ++a) {
        const int tau = anchors[a];
        const int next = (a + 1 < anchors.size()) ? anchors[a + 1] : anchors[0] + t;
        const int gap = next - tau;
        for (int k = 1; k < gap; ++k)
            jobs.push_back({tau, wrap_index(next, t), wrap_index(tau + k, t), k, gap});
    }

    nn::parallel_for(int(jobs.size()), nn::resolve_threads(threads), [&](int i, int) {
        const Job& j = jobs[i];
        ConditionMaps cond;
        cond.tau_map = Image(input.height(), input.width(), float(double(j.tau) / double(t)));
        cond.k_map = Image(input.height(), input.width(), float(double(j.k) / double(j.gap)));
        auto o = model.infer(input.magnitude[j.tau], input.magnitude[j.next], input.seg[j.tau],
                             input.seg[j.next], cond);
        out.magnitude[j.frame] = std::move(o.m_hat);
        Mask m(input.height(), input.width());
        for (size_t p = 0; p < m.px.size(); ++p) m.px[p] = o.s_logits.px[p] > 0.f ? 1 : 0;
        out.seg[j.frame] = std::move(m);
        out.phase_x[j.frame] = Image(input.height(), input.width());
        out.phase_y[j.frame] = Image(input.height(), input.width());
        out.phase_z[j.frame] = Image(input.height(), input.width());
    });
    return out;
}

}  // namespace mvms
