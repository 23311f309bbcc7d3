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

#include "mvms/toy.hpp"

#include <algorithm>
#include <cmath>

#include "mvms/metrics.hpp"

namespace mvms {

using nn::Tensor;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Circle {
    double cx, cy, r;
    float color[3];
};

double smoothstep01(double e0, double e1, double x) {
    double u = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return u * u * (3.0 - 2.0 * u);
}

// Striped fill used by the texture-painting task: the task rule is global,
// not per-sample, so it is learnable from examples.
void texture_color(const Circle& c, int x, int y, float out[3]) {
    const bool band = std::sin(2.0 * kPi * (x + y) / 4.0) > 0.0;
    for (int ch = 0; ch < 3; ++ch) out[ch] = band ? c.color[ch] : c.color[ch] * 0.3f - 0.5f;
}

void paint(Tensor& img, const std::vector<Circle>& circles, double scale, bool textured) {
    const int h = img.h, w = img.w;
    for (const Circle& c : circles) {
        const double r = c.r * scale;
        const int y0 = std::max(0, int(c.cy - r - 2)), y1 = std::min(h - 1, int(c.cy + r + 2));
        const int x0 = std::max(0, int(c.cx - r - 2)), x1 = std::min(w - 1, int(c.cx + r + 2));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double d = std::hypot(x - c.cx, y - c.cy);
                const double cov = 1.0 - smoothstep01(r - 0.5, r + 0.5, d);
                if (cov <= 0) continue;
                float fill[3] = {c.color[0], c.color[1], c.color[2]};
                if (textured) texture_color(c, x, y, fill);
                for (int ch = 0; ch < 3; ++ch) {
                    float* p = img.chan(ch) + size_t(y) * w + x;
                    *p = float((1.0 - cov) * *p + cov * fill[ch]);
                }
            }
        }
    }
}

}  // namespace

std::vector<CircleSample> gen_circles(ToyTask task, int n, uint64_t seed,
                                      const ToyConfig& cfg) {
    if (n < 1) throw std::invalid_argument("gen_circles: n must be >= 1");
    std::vector<CircleSample> out;
    out.reserve(n);
    const int size = cfg.size;
    const double scale = cfg.radius_scale;

    for (int i = 0; i < n; ++i) {
        DetRng rng(mix_seed(seed, uint64_t(i)));
        std::vector<Circle> circles;
        int guard = 0;
        while (int(circles.size()) < 4 && guard < 20000) {
            ++guard;
            Circle c;
            c.r = 2.5 + 2.0 * rng.uniform();
            const double margin = scale * c.r + 1.5;
            c.cx = margin + (size - 2 * margin) * rng.uniform();
            c.cy = margin + (size - 2 * margin) * rng.uniform();
            bool ok = true;
            for (const Circle& o : circles)
                if (std::hypot(c.cx - o.cx, c.cy - o.cy) < scale * (c.r + o.r) + 2.0) {
                    ok = false;
                    break;
                }
            if (!ok) continue;
            for (int ch = 0; ch < 3; ++ch) c.color[ch] = float(0.1 + 0.8 * rng.uniform());
            circles.push_back(c);
        }
        if (circles.size() < 4)
            throw std::runtime_error("gen_circles: could not place 4 disjoint circles");

        CircleSample s;
        s.input = Tensor(3, size, size);
        for (int ch = 0; ch < 3; ++ch) {
            float* p = s.input.chan(ch);
            for (int j = 0; j < size * size; ++j)
                p[j] = float(std::clamp(-0.3 + 0.25 * rng.normal(), -1.0, 1.0));
        }
        s.target = s.input;   // shared background

        paint(s.input, circles, 1.0, false);
        if (task == ToyTask::ShapeChanging)
            paint(s.target, circles, scale, false);
        else
            paint(s.target, circles, 1.0, true);
        for (const Circle& c : circles) s.circles.push_back({c.cx, c.cy, c.r});
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Comparison harness
// ---------------------------------------------------------------------------

namespace {

double mse_grad(const Tensor& gen, const Tensor& target, Tensor& grad) {
    grad = Tensor(gen.c, gen.h, gen.w);
    double loss = 0;
    const float inv = 1.f / float(gen.v.size());
    for (size_t i = 0; i < gen.v.size(); ++i) {
        const float d = gen.v[i] - target.v[i];
        loss += double(d) * d;
        grad.v[i] = 2.f * d * inv;
    }
    return loss / double(gen.v.size());
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

Tensor pair_cat(const Tensor& a, const Tensor& b) {
    Tensor x(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), x.v.begin());
    std::copy(b.v.begin(), b.v.end(), x.v.begin() + a.v.size());
    return x;
}

struct ToyModel {
    nn::ParamStore gps, dps;
    std::unique_ptr<nn::UNetCore> gen;
    std::unique_ptr<nn::PatchDisc> disc;

    ToyModel(const ToyConfig& cfg, uint64_t seed) {
        nn::UNetSpec spec;
        spec.in_ch = 3;
        spec.out_ch = 3;
        spec.base = cfg.base_channels;
        spec.depth = cfg.depth;
        spec.steps = cfg.recurrence_steps;
        gen = std::make_unique<nn::UNetCore>(gps, "toygen", spec, mix_seed(seed, 21));
        disc = std::make_unique<nn::PatchDisc>(dps, "toydisc", 6, cfg.disc_base,
                                               mix_seed(seed, 22));
    }

    Tensor infer(const Tensor& x) const {
        nn::UNetCore::Ctx ctx;
        return nn::tanh_fwd(gen->forward(gps, x, ctx));
    }
};

void train_toy(ToyModel& model, const std::vector<CircleSample>& data, const ToyConfig& cfg,
               bool adversarial) {
    const int threads = nn::resolve_threads(cfg.threads);
    nn::Adam gopt(model.gps.value.size(), cfg.learning_rate);
    nn::Adam dopt(model.dps.value.size(), cfg.learning_rate);
    std::vector<nn::GradBuf> ggrads(threads), dgrads(threads);
    std::vector<int> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);

    const double adv_w = adversarial ? cfg.adversarial_weight : 0.0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        nn::shuffle_indices(order, mix_seed(cfg.seed, 8000 + uint64_t(epoch)));
        double epoch_loss = 0;
        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
            const size_t stop = std::min(order.size(), start + size_t(cfg.batch_size));
            const int bsz = int(stop - start);
            std::vector<Tensor> outs(bsz);
            std::vector<double> losses(bsz, 0.0);

            for (auto& g : ggrads) g.assign(model.gps.value.size(), 0.f);
            nn::parallel_for(bsz, threads, [&](int i, int tid) {
                const CircleSample& s = data[order[start + i]];
                nn::UNetCore::Ctx ctx;
                Tensor raw = model.gen->forward(model.gps, s.input, ctx);
                Tensor y = nn::tanh_fwd(raw);
                Tensor g_y;
                double loss = mse_grad(y, s.target, g_y);
                if (adv_w > 0) {
                    nn::PatchDisc::Ctx dctx;
                    Tensor scores = model.disc->forward(model.dps, pair_cat(s.input, y), dctx);
                    Tensor g_scores;
                    loss += adv_w * lsgan_term(scores, 1.f, g_scores);
                    for (float& v : g_scores.v) v *= float(adv_w);
                    nn::GradBuf dsink(model.dps.value.size(), 0.f);
                    Tensor g_in = model.disc->backward(model.dps, g_scores, dctx, dsink);
                    for (int c = 0; c < 3; ++c)
                        for (int p = 0; p < y.plane(); ++p)
                            g_y.chan(c)[p] += g_in.chan(3 + c)[p];
                }
                Tensor g_raw = nn::tanh_back(g_y, y);
                model.gen->backward(model.gps, g_raw, ctx, ggrads[tid]);
                outs[i] = std::move(y);
                losses[i] = loss;
            });

            nn::GradBuf gtotal(model.gps.value.size(), 0.f);
            for (const auto& g : ggrads)
                for (size_t i = 0; i < gtotal.size(); ++i) gtotal[i] += g[i];
            const float scale = 1.f / float(bsz);
            for (float& v : gtotal) v *= scale;
            gopt.step(model.gps.value, gtotal);

            if (adv_w > 0) {
                for (auto& g : dgrads) g.assign(model.dps.value.size(), 0.f);
                nn::parallel_for(bsz, threads, [&](int i, int tid) {
                    const CircleSample& s = data[order[start + i]];
                    nn::PatchDisc::Ctx ctx_r, ctx_f;
                    Tensor sr =
                        model.disc->forward(model.dps, pair_cat(s.input, s.target), ctx_r);
                    Tensor sf =
                        model.disc->forward(model.dps, pair_cat(s.input, outs[i]), ctx_f);
                    Tensor gr, gf;
                    lsgan_term(sr, 1.f, gr);
                    lsgan_term(sf, 0.f, gf);
                    for (float& v : gr.v) v *= 0.5f;
                    for (float& v : gf.v) v *= 0.5f;
                    model.disc->backward(model.dps, gr, ctx_r, dgrads[tid]);
                    model.disc->backward(model.dps, gf, ctx_f, dgrads[tid]);
                });
                nn::GradBuf dtotal(model.dps.value.size(), 0.f);
                for (const auto& g : dgrads)
                    for (size_t i = 0; i < dtotal.size(); ++i) dtotal[i] += g[i];
                for (float& v : dtotal) v *= scale;
                dopt.step(model.dps.value, dtotal);
            }
            for (double l : losses) epoch_loss += l;
        }
        if (!std::isfinite(epoch_loss))
            throw TrainingFailure("toy training diverged at epoch " + std::to_string(epoch));
    }
}

// Per-image MSE on the [0,1] scale used for reporting.
double mse01(const Tensor& a, const Tensor& b) {
    double s = 0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        const double d = (double(a.v[i]) - double(b.v[i])) * 0.5;
        s += d * d;
    }
    return s / double(a.v.size());
}

}  // namespace

ToyReport run_toy_comparison(ToyTask task, const ToyConfig& cfg) {
    const auto train_set = gen_circles(task, cfg.n_train, mix_seed(cfg.seed, 1), cfg);
    const auto test_set = gen_circles(task, cfg.n_test, mix_seed(cfg.seed, 2), cfg);

    ToyModel plain(cfg, cfg.seed);
    ToyModel adv(cfg, cfg.seed);   // identical initial weights
    train_toy(plain, train_set, cfg, false);
    train_toy(adv, train_set, cfg, true);

    ToyReport rep;
    const size_t n = test_set.size();
    rep.mse_plain.resize(n);
    rep.mse_adversarial.resize(n);
    Tensor mean_p(3, cfg.size, cfg.size), mean_a(3, cfg.size, cfg.size),
        mean_t(3, cfg.size, cfg.size);
    const int threads = nn::resolve_threads(cfg.threads);
    std::vector<Tensor> preds_p(n), preds_a(n);
    nn::parallel_for(int(n), threads, [&](int i, int) {
        preds_p[i] = plain.infer(test_set[i].input);
        preds_a[i] = adv.infer(test_set[i].input);
        rep.mse_plain[i] = mse01(preds_p[i], test_set[i].target);
        rep.mse_adversarial[i] = mse01(preds_a[i], test_set[i].target);
    });
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < mean_p.v.size(); ++j) {
            mean_p.v[j] += preds_p[i].v[j] / float(n);
            mean_a.v[j] += preds_a[i].v[j] / float(n);
            mean_t.v[j] += test_set[i].target.v[j] / float(n);
        }
    }
    const MeanStd mp = mean_std(rep.mse_plain);
    const MeanStd ma = mean_std(rep.mse_adversarial);
    rep.mean_plain = mp.mean;
    rep.std_plain = mp.std;
    rep.mean_adversarial = ma.mean;
    rep.std_adversarial = ma.std;
    rep.group_dist_plain = mse01(mean_p, mean_t);
    rep.group_dist_adversarial = mse01(mean_a, mean_t);
    return rep;
}

}  // namespace mvms
