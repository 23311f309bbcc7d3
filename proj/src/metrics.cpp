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

#include "mvms/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mvms {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* who) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

}  // namespace

WeightMap roi_weight_map(const Mask& seg, int pad, bool* empty_warning) {
    if (!seg.is_binary()) throw std::invalid_argument("roi_weight_map: mask is not binary");
    WeightMap w(seg.h, seg.w, 0.1f);
    int y0 = seg.h, y1 = -1, x0 = seg.w, x1 = -1;
    for (int y = 0; y < seg.h; ++y)
        for (int x = 0; x < seg.w; ++x)
            if (seg.at(y, x)) {
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
            }
    if (y1 < 0) {
        if (empty_warning) *empty_warning = true;
        return w;
    }
    if (empty_warning) *empty_warning = false;
    y0 = std::max(0, y0 - pad);
    x0 = std::max(0, x0 - pad);
    y1 = std::min(seg.h - 1, y1 + pad);
    x1 = std::min(seg.w - 1, x1 + pad);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) w.wt[size_t(y) * w.w + x] = 1.0f;
    return w;
}

WeightMap foreground_weight_map(const Image& magnitude) {
    WeightMap w(magnitude.h, magnitude.w, 0.1f);
    for (size_t i = 0; i < magnitude.px.size(); ++i)
        if (magnitude.px[i] > kBackgroundThreshold) w.wt[i] = 1.0f;
    return w;
}

double weighted_mae(const Image& pred, const Image& gt, const WeightMap& w_roi,
                    const WeightMap& w_fg) {
    require_same_shape(pred, gt, "weighted_mae");
    if (w_roi.h != pred.h || w_roi.w != pred.w || w_fg.h != pred.h || w_fg.w != pred.w)
        throw std::invalid_argument("weighted_mae: weight map shape mismatch");
    double s1 = 0, s2 = 0;
    const size_t n = pred.px.size();
    for (size_t i = 0; i < n; ++i) {
        double d = std::abs(double(pred.px[i]) - double(gt.px[i]));
        s1 += w_roi.wt[i] * d;
        s2 += w_fg.wt[i] * d;
    }
    return s1 / double(n) + s2 / double(n);
}

Image weighted_mae_grad(const Image& pred, const Image& gt, const WeightMap& w_roi,
                        const WeightMap& w_fg) {
    require_same_shape(pred, gt, "weighted_mae_grad");
    Image g(pred.h, pred.w);
    const double inv_n = 1.0 / double(pred.px.size());
    for (size_t i = 0; i < pred.px.size(); ++i) {
        double d = double(pred.px[i]) - double(gt.px[i]);
        double s = (d > 0) ? 1.0 : (d < 0 ? -1.0 : 0.0);
        g.px[i] = float((double(w_roi.wt[i]) + double(w_fg.wt[i])) * s * inv_n);
    }
    return g;
}

double weighted_mse(const Image& pred, const Image& gt, const WeightMap& w) {
    require_same_shape(pred, gt, "weighted_mse");
    if (w.h != pred.h || w.w != pred.w)
        throw std::invalid_argument("weighted_mse: weight map shape mismatch");
    double s = 0;
    for (size_t i = 0; i < pred.px.size(); ++i) {
        double d = double(pred.px[i]) - double(gt.px[i]);
        s += w.wt[i] * d * d;
    }
    return s / double(pred.px.size());
}

double mse(const Image& pred, const Image& gt) {
    require_same_shape(pred, gt, "mse");
    double s = 0;
    for (size_t i = 0; i < pred.px.size(); ++i) {
        double d = double(pred.px[i]) - double(gt.px[i]);
        s += d * d;
    }
    return s / double(pred.px.size());
}

double psnr_from_mse(double mse_value) {
    if (mse_value == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse_value);
}

double psnr01(const Image& pred, const Image& gt) {
    return psnr_from_mse(mse(pred, gt));
}

double ssim01(const Image& pred, const Image& gt) {
    require_same_shape(pred, gt, "ssim");
    constexpr int win = 8;
    if (pred.h < win || pred.w < win)
        throw std::invalid_argument("ssim: image smaller than 8x8 window");
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

    // Integral images for window sums of x, y, x^2, y^2, xy.
    const int ih = pred.h + 1, iw = pred.w + 1;
    std::vector<double> sx(size_t(ih) * iw, 0), sy(size_t(ih) * iw, 0), sxx(size_t(ih) * iw, 0),
        syy(size_t(ih) * iw, 0), sxy(size_t(ih) * iw, 0);
    for (int y = 0; y < pred.h; ++y) {
        for (int x = 0; x < pred.w; ++x) {
            const size_t i = size_t(y + 1) * iw + (x + 1);
            const size_t up = i - iw, left = i - 1, diag = up - 1;
            const double a = pred.at(y, x), b = gt.at(y, x);
            sx[i] = a + sx[up] + sx[left] - sx[diag];
            sy[i] = b + sy[up] + sy[left] - sy[diag];
            sxx[i] = a * a + sxx[up] + sxx[left] - sxx[diag];
            syy[i] = b * b + syy[up] + syy[left] - syy[diag];
            sxy[i] = a * b + sxy[up] + sxy[left] - sxy[diag];
        }
    }
    auto box = [&](const std::vector<double>& s, int y, int x) {
        const size_t i0 = size_t(y) * iw + x;
        const size_t i1 = size_t(y + win) * iw + (x + win);
        return s[i1] - s[size_t(y) * iw + (x + win)] - s[size_t(y + win) * iw + x] + s[i0];
    };

    const double inv_n = 1.0 / (win * win);
    double total = 0;
    long count = 0;
    for (int y = 0; y + win <= pred.h; ++y) {
        for (int x = 0; x + win <= pred.w; ++x) {
            double mx = box(sx, y, x) * inv_n;
            double my = box(sy, y, x) * inv_n;
            double vx = box(sxx, y, x) * inv_n - mx * mx;
            double vy = box(syy, y, x) * inv_n - my * my;
            double cov = box(sxy, y, x) * inv_n - mx * my;
            double num = (2 * mx * my + c1) * (2 * cov + c2);
            double den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += num / den;
            ++count;
        }
    }
    return total / double(count);
}

Image to_unit_range(const Image& img) {
    Image out(img.h, img.w);
    for (size_t i = 0; i < img.px.size(); ++i) out.px[i] = (img.px[i] + 1.f) * 0.5f;
    return out;
}

double dice(const Mask& a, const Mask& b) {
    if (a.h != b.h || a.w != b.w) throw std::invalid_argument("dice: shape mismatch");
    if (!a.is_binary() || !b.is_binary())
        throw std::invalid_argument("dice: input mask is not binary");
    size_t inter = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.px.size(); ++i) {
        na += a.px[i];
        nb += b.px[i];
        inter += (a.px[i] & b.px[i]);
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * double(inter) / double(na + nb);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson: need at least 2 samples");
    const double n = double(x.size());
    double mx = 0, my = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, syy = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0 || syy == 0)
        throw UndefinedCorrelationError("pearson: constant series has no defined correlation");
    return sxy / std::sqrt(sxx * syy);
}

StudyMetrics study_metrics(const CineStudy& pred, const CineStudy& gt, int pad) {
    if (pred.frames() != gt.frames() || pred.height() != gt.height() ||
        pred.width() != gt.width())
        throw std::invalid_argument("study_metrics: study shapes differ");

    StudyMetrics out;
    const int t = gt.frames();
    double mag_mse = 0, mag_w1 = 0, mag_w2 = 0, mag_ssim = 0, dice_sum = 0;
    double ph_mse = 0, ph_w1 = 0, ph_w2 = 0, ph_ssim = 0;

    for (int i = 0; i < t; ++i) {
        const WeightMap w1 = roi_weight_map(gt.seg[i], pad);
        const WeightMap w2 = foreground_weight_map(gt.magnitude[i]);

        const Image pm = to_unit_range(pred.magnitude[i]);
        const Image gm = to_unit_range(gt.magnitude[i]);
        mag_mse += mse(pm, gm);
        mag_w1 += weighted_mse(pm, gm, w1);
        mag_w2 += weighted_mse(pm, gm, w2);
        mag_ssim += ssim01(pm, gm);
        dice_sum += dice(pred.seg[i], gt.seg[i]);

        const std::vector<const Image*> pp = {&pred.phase_x[i], &pred.phase_y[i],
                                              &pred.phase_z[i]};
        const std::vector<const Image*> gp = {&gt.phase_x[i], &gt.phase_y[i], &gt.phase_z[i]};
        for (int c = 0; c < 3; ++c) {
            const Image a = to_unit_range(*pp[c]);
            const Image b = to_unit_range(*gp[c]);
            ph_mse += mse(a, b);
            ph_w1 += weighted_mse(a, b, w1);
            ph_w2 += weighted_mse(a, b, w2);
            ph_ssim += ssim01(a, b);
        }
    }

    auto fill = [](MetricReport& r, double m, double w1v, double w2v, double sv, double n) {
        r.mse = m / n;
        r.msew1 = w1v / n;
        r.msew2 = w2v / n;
        r.ssim = sv / n;
        r.psnr = (r.mse == 0.0) ? std::numeric_limits<double>::infinity()
                                : 10.0 * std::log10(1.0 / r.mse);
    };
    fill(out.magnitude, mag_mse, mag_w1, mag_w2, mag_ssim, double(t));
    out.magnitude.dice = dice_sum / double(t);
    fill(out.phase, ph_mse, ph_w1, ph_w2, ph_ssim, double(3 * t));
    return out;
}

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd r;
    if (values.empty()) return r;
    for (double v : values) r.mean += v;
    r.mean /= double(values.size());
    if (values.size() < 2) return r;
    double s = 0;
    for (double v : values) s += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(s / double(values.size() - 1));
    return r;
}

}  // namespace mvms
